"""From-scratch regressors sharing one fit/predict contract."""
from ._backend import BACKEND, get_kernels
from .boosting import GBModel, GBParams, fit_gb
from .forest import (
    ForestModel,
    ForestParams,
    ImportanceVector,
    OOBPrediction,
    fit_forest,
    impurity_importance,
    oob_predict,
    permutation_importance,
)
from .linear import OLSModel, RankDeficientError, fit_ols
from .tree import Presorted, Tree, fit_tree


def predict(model, X):
    """Apply any fitted model (tree, forest, boosting or OLS) to ``X``."""
    return model.predict(X)


__all__ = [
    "BACKEND", "get_kernels", "Tree", "Presorted", "fit_tree",
    "ForestModel", "ForestParams", "ImportanceVector", "OOBPrediction",
    "fit_forest", "oob_predict", "permutation_importance", "impurity_importance",
    "GBModel", "GBParams", "fit_gb", "OLSModel", "RankDeficientError", "fit_ols", "predict",
]
