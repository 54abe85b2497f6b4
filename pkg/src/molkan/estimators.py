"""scikit-learn style wrappers around KAN networks and the message-passing models."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import autodiff as ad
from .data import MoleculeDataset
from .kan import KanNetwork
from .molgraph import featurize, parse_smiles
from .mpnn import GnnConfig, GnnModel
from .training import Adam, Normalizer, SplitIndices, TrainConfig, predict_dataset, sigmoid, train_loop


class KANRegressor(RegressorMixin, BaseEstimator):
    """Full-batch Adam fit of a KAN network on tabular data (MSE loss)."""

    def __init__(self, hidden_layer_sizes=(5,), family="skan", n_rbf=8, grid_size=8, spline_order=3,
                 lr=1e-2, max_iter=2000, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.family = family
        self.n_rbf = n_rbf
        self.grid_size = grid_size
        self.spline_order = spline_order
        self.lr = lr
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True, dtype=np.float64)
        y2 = y.reshape(len(y), -1)
        self.n_features_in_ = X.shape[1]
        self._single_output = y.ndim == 1
        widths = [X.shape[1], *self.hidden_layer_sizes, y2.shape[1]]
        self.network_ = KanNetwork(widths, family=self.family, seed=self.random_state,
                                   n_rbf=self.n_rbf, grid_size=self.grid_size,
                                   spline_order=self.spline_order)
        opt = Adam(self.network_.parameters(), lr=self.lr)
        self.loss_curve_ = []
        for _ in range(self.max_iter):
            tape = ad.Tape()
            loss = ad.mean(ad.square(self.network_(tape, X) - y2))
            ad.backward(loss)
            opt.step()
            self.loss_curve_.append(loss.item())
        return self

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = self.network_(ad.Tape(), X).data
        return out[:, 0] if self._single_output else out


class SmilesFeaturizer(TransformerMixin, BaseEstimator):
    """SMILES strings -> list of (graph, feature matrices) pairs."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        pairs = []
        for s in X:
            g = parse_smiles(str(s))
            pairs.append((g, featurize(g)))
        return pairs


class _GnnEstimator(BaseEstimator):
    _task = ""

    def __init__(self, host="gine", update_kind="skan", head_kind="mlp", depth=2, hidden=64, n_rbf=8,
                 lr=1e-3, epochs=30, batch_size=32, random_state=0):
        self.host = host
        self.update_kind = update_kind
        self.head_kind = head_kind
        self.depth = depth
        self.hidden = hidden
        self.n_rbf = n_rbf
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def _dataset(self, X, y=None, n_tasks=1) -> MoleculeDataset:
        smiles = [str(s) for s in X]
        if y is None:
            y = np.zeros((len(smiles), n_tasks))
        return MoleculeDataset.from_smiles(smiles, y, self._task)

    def fit(self, X, y, eval_set=None):
        """Train on SMILES ``X``; NaN labels are missing. ``eval_set=(X, y)`` drives model selection."""
        y = np.asarray(y, dtype=float)
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} entries but y has {len(y)}")
        self._single_output = y.ndim == 1
        y2 = y.reshape(len(y), -1)
        n_train = len(y2)
        smiles = list(X)
        if eval_set is not None:
            Xv, yv = eval_set
            smiles += list(Xv)
            y2 = np.vstack([y2, np.asarray(yv, dtype=float).reshape(len(yv), -1)])
        data = self._dataset(smiles, y2)
        self.n_tasks_ = data.n_tasks
        split = SplitIndices(list(range(n_train)), list(range(n_train, len(data))), [], kind="given")
        cfg = GnnConfig(host=self.host, depth=self.depth, hidden=self.hidden,
                        update_kind=self.update_kind, head_kind=self.head_kind, n_rbf=self.n_rbf,
                        n_tasks=data.n_tasks)
        self.model_ = GnnModel(cfg, seed=self.random_state)
        self.normalizer_ = None
        if self._task == "regression":
            self.normalizer_ = Normalizer.fit(data.labels[:n_train], data.mask[:n_train])
        self.report_ = train_loop(self.model_, data, split,
                                  TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch_size),
                                  seed=self.random_state, config_echo=self.get_params(),
                                  normalizer=self.normalizer_)
        if self.report_.status != "ok":
            raise RuntimeError(f"training diverged: {self.report_.diagnostic}")
        return self

    def _raw(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        data = self._dataset(X, n_tasks=self.n_tasks_)
        return predict_dataset(self.model_, data, list(range(len(data))))


class GNNClassifier(ClassifierMixin, _GnnEstimator):
    """Binary (multi-label) classifier on SMILES; predict_proba gives P(label = 1)."""

    _task = "classification"

    def fit(self, X, y, eval_set=None):
        super().fit(X, y, eval_set)
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        p = sigmoid(self._raw(X))
        if self._single_output:
            return np.column_stack([1.0 - p[:, 0], p[:, 0]])
        return p

    def decision_function(self, X):
        z = self._raw(X)
        return z[:, 0] if self._single_output else z

    def predict(self, X):
        z = self.decision_function(X)
        return (z >= 0).astype(int)


class GNNRegressor(RegressorMixin, _GnnEstimator):
    """Regressor on SMILES; predictions are in the original label units."""

    _task = "regression"

    def predict(self, X):
        out = self.normalizer_.inverse(self._raw(X))
        return out[:, 0] if self._single_output else out
