"""Kolmogorov-Arnold layers with adaptive RBFs inside message-passing networks for molecules."""
from .autodiff import Module, Parameter, Tape, Tensor, backward, grad_check
from .estimators import GNNClassifier, GNNRegressor, KANRegressor, SmilesFeaturizer
from .kan import BSplineKanLayer, FastKanLayer, KanNetwork, SkanLayer, make_layer, parameter_count
from .mpnn import GnnConfig, GnnModel

__version__ = "0.1.0"

__all__ = [
    "Module", "Parameter", "Tape", "Tensor", "backward", "grad_check",
    "BSplineKanLayer", "FastKanLayer", "SkanLayer", "KanNetwork", "make_layer", "parameter_count",
    "GnnConfig", "GnnModel",
    "KANRegressor", "GNNClassifier", "GNNRegressor", "SmilesFeaturizer",
]
