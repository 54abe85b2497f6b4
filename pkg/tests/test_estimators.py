import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from molkan import GNNClassifier, GNNRegressor, KANRegressor, SmilesFeaturizer

SMILES = ["CCO", "c1ccccc1", "CCN", "c1ccncc1", "OCCO", "c1ccoc1", "CC(C)O", "Cc1ccccc1"]
AROMATIC = [0, 1, 0, 1, 0, 1, 0, 1]


def test_kan_regressor_fits_a_smooth_function():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (200, 2))
    y = np.sin(2 * X[:, 0]) + X[:, 1] ** 2
    est = KANRegressor(hidden_layer_sizes=(4,), max_iter=300).fit(X, y)
    assert est.predict(X).shape == (200,)
    assert est.loss_curve_[-1] < 0.1 * est.loss_curve_[0]
    assert est.score(X, y) > 0.9


def test_kan_regressor_validation():
    est = KANRegressor(max_iter=2)
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((2, 2)))
    est.fit(np.zeros((4, 2)), np.zeros(4))
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 3)))


def test_params_round_trip_through_clone():
    est = GNNClassifier(host="gat", hidden=16, epochs=3)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert clone(KANRegressor(family="fastkan")).family == "fastkan"


def test_gnn_classifier_learns_aromaticity():
    clf = GNNClassifier(hidden=16, n_rbf=4, epochs=25, lr=3e-3).fit(SMILES, AROMATIC)
    proba = clf.predict_proba(SMILES)
    assert proba.shape == (8, 2) and np.allclose(proba.sum(axis=1), 1.0)
    assert (clf.predict(SMILES) == AROMATIC).mean() >= 0.875


def test_gnn_classifier_multitask_with_missing():
    y = np.column_stack([AROMATIC, [1, np.nan, 0, 1, 0, np.nan, 1, 0]])
    clf = GNNClassifier(hidden=8, n_rbf=3, epochs=1).fit(SMILES, y)
    assert clf.predict_proba(SMILES).shape == (8, 2) and clf.predict(SMILES).shape == (8, 2)


def test_gnn_regressor_predicts_in_label_units():
    y = np.array([len(s) * 10.0 + 100 for s in SMILES])
    reg = GNNRegressor(hidden=16, n_rbf=4, epochs=40, lr=3e-3).fit(SMILES[:6], y[:6], eval_set=(SMILES[6:], y[6:]))
    pred = reg.predict(SMILES)
    assert pred.shape == (8,) and abs(pred.mean() - y.mean()) < 40
    assert reg.report_.selected_epoch is not None


def test_featurizer():
    pairs = SmilesFeaturizer().fit_transform(["CCO", "C"])
    assert [g.n_atoms for g, _ in pairs] == [3, 1]
