"""geogcp: gridded climate and geography predictors of per-capita gross cell product."""
from .errors import InvariantError, ValidationError
from .evaluation import ModelSpec, kfold_eval, nmae, oob_eval, pearson
from .features import FeatureMatrix, FeatureSpec, build_feature_matrix, default_specs
from .learners import BACKEND, fit_forest, fit_gb, fit_ols
from .select import SelectParams, run_selection
from .synthworld import WorldConfig, generate, oracle_check
from .target import build_target, tercile_split

__version__ = "0.1.0"

__all__ = [
    "__version__", "BACKEND", "InvariantError", "ValidationError", "ModelSpec", "kfold_eval", "oob_eval", "nmae",
    "pearson", "FeatureMatrix", "FeatureSpec", "build_feature_matrix", "default_specs", "fit_forest", "fit_gb",
    "fit_ols", "SelectParams", "run_selection", "WorldConfig", "generate", "oracle_check", "build_target",
    "tercile_split",
]
