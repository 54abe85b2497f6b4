import json

import numpy as np
import pytest

from molkan.checkpoint import CheckpointError, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from molkan.cli import main
from molkan.data import DatasetError, load_csv_dataset
from molkan.experiment import ConfigError, ExperimentConfig, run_experiment
from molkan.mpnn import GnnConfig, GnnModel
from molkan.training import dumps


def write(path, text):
    path.write_text(text)
    return path


def test_malformed_row_is_skipped_and_counted(tmp_path):
    p = write(tmp_path / "d.csv", "smiles,y\nCCO,1\nC1CC,0\nc1ccccc1,0\n")
    data = load_csv_dataset(p)
    assert len(data) == 2 and data.parse_stats["skipped"] == 1 and data.task == "classification"


def test_label_columns_detected_and_missing_cells_masked(tmp_path):
    tasks = [f"T{i}" for i in range(12)]
    rows = ["mol_id,smiles," + ",".join(tasks)]
    rows.append("A1,CCO," + ",".join(["1"] * 6 + [""] * 6))
    rows.append("A2,CCN," + ",".join(["0"] * 12))
    data = load_csv_dataset(write(tmp_path / "tox.csv", "\n".join(rows) + "\n"))
    assert data.n_tasks == 12 and data.label_names == tasks
    assert data.mask.sum() == 18 and data.mask[0, 6:].sum() == 0


def test_regression_inferred(tmp_path):
    data = load_csv_dataset(write(tmp_path / "r.csv", "smiles,expt\nCCO,-3.5\nCC,1.25\n"))
    assert data.task == "regression" and data.labels[:, 0].tolist() == [-3.5, 1.25]


def test_fatal_dataset_errors(tmp_path):
    with pytest.raises(DatasetError):
        load_csv_dataset(write(tmp_path / "a.csv", "smi,y\nCC,1\n"))
    with pytest.raises(DatasetError):
        load_csv_dataset(write(tmp_path / "b.csv", "smiles,y\nQQ,1\n"))
    with pytest.raises(DatasetError):
        load_csv_dataset(tmp_path / "missing.csv")


def test_checkpoint_round_trip_is_byte_exact(tmp_path):
    model = GnnModel(GnnConfig(host="gat", hidden=8, head_kind="skan"), seed=0)
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    raw = path.read_bytes()
    state = load_checkpoint(path)
    assert to_bytes(state) == raw
    other = GnnModel(GnnConfig(host="gat", hidden=8, head_kind="skan"), seed=5)
    load_checkpoint(path, other)
    for (n, p), (m, q) in zip(model.named_parameters(), other.named_parameters()):
        assert n == m and np.array_equal(p.value, q.value)


def test_checkpoint_rejects_garbage():
    good = to_bytes({"w": np.arange(6.0).reshape(2, 3), "s": np.array(2.5)})
    assert from_bytes(good)["s"].shape == ()
    for bad in (b"nope", good[:-3], good + b"\0"):
        with pytest.raises(CheckpointError):
            from_bytes(bad)


def test_checkpoint_preserves_special_values():
    state = {"x": np.array([0.0, -0.0, np.inf, 1e-310, np.pi])}
    assert to_bytes(from_bytes(to_bytes(state))) == to_bytes(state)


def tiny_config(tmp_path, **kw):
    csv = write(tmp_path / "mols.csv", "smiles,p\n" + "".join(
        f"{s},{i % 2}\n" for i, s in enumerate(
            ["CCO", "c1ccccc1", "CCN", "c1ccncc1", "OCCO", "c1ccoc1", "CC(C)O", "Cc1ccccc1",
             "C1CCCCC1", "C1CCNCC1", "CCCl", "c1ccsc1"])))
    cfg = dict(dataset_path=str(csv), hidden=8, M=4, epochs=2, seeds=[0, 1], split="random",
               output_path=str(tmp_path / "out"))
    cfg.update(kw)
    return cfg


def test_experiment_outputs_and_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict(tiny_config(tmp_path))
    result = run_experiment(cfg)
    out = tmp_path / "out"
    report = (out / "report.json").read_text()
    assert dumps(json.loads(report)) == report
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0] == "seed,test_metric,epoch_time_s,param_count" and len(lines) == 3
    assert sorted(p.name for p in out.iterdir()) == ["model_seed0.ckpt", "model_seed1.ckpt", "report.json", "summary.csv"]
    assert result.summary["n"] == len(result.metric_values)


def test_identical_configs_give_identical_metrics(tmp_path):
    a = run_experiment(ExperimentConfig.from_dict(tiny_config(tmp_path, seeds=[3])), write=False)
    b = run_experiment(ExperimentConfig.from_dict(tiny_config(tmp_path, seeds=[3])), write=False)
    strip = lambda r: {k: v for k, v in r.to_dict().items() if k not in ("epoch_seconds",)}
    assert [strip(r) for r in a.runs] == [strip(r) for r in b.runs]
    assert a.summary["std"] is None


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"hots": "gine"})
    with pytest.raises(ConfigError):
        ExperimentConfig(dataset_path=str(tmp_path / "none.csv")).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(host="cmpnn").validate(check_file=False)


def test_cli_train_with_overrides(tmp_path, capsys):
    cfg_path = write(tmp_path / "cfg.json", json.dumps(tiny_config(tmp_path)))
    code = main(["train", "--config", str(cfg_path), "--seed", "7", "--epochs", "1", "--host", "gcn",
                 "--update", "fastkan", "--head", "skan"])
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    cfg = report["config"]
    assert (cfg["seeds"], cfg["epochs"], cfg["host"], cfg["update_kind"], cfg["head_kind"]) == ([7], 1, "gcn", "fastkan", "skan")
    assert "test roc_auc" in capsys.readouterr().out


def test_cli_bad_config_exit_code(tmp_path, capsys):
    cfg_path = write(tmp_path / "cfg.json", json.dumps({"dataset_path": str(tmp_path / "nope.csv")}))
    assert main(["train", "--config", str(cfg_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_bench(capsys):
    assert main(["bench-kan", "--n", "4", "--batch", "8", "--repeats", "10", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [r["family"] for r in rows] == ["skan", "fastkan", "bspline_kan"]
    assert [r["param_count"] for r in rows] == [16 * 8 + 16 + 16, 16 * 8 + 16, 16 * 11 + 32]


def test_cli_split_stats(tmp_path, capsys):
    cfg = tiny_config(tmp_path)
    assert main(["split-stats", "--dataset", cfg["dataset_path"]]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["molecules"] == 12 and sum(int(k) * v for k, v in stats["group_size_histogram"].items()) == 12


def test_cli_verify_subset(capsys):
    assert main(["verify", "--only", "ops", "negative-control", "roc-auc"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "3/3 checks passed" in out
