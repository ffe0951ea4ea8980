"""SynthTree and MLM-EPIC: co-supervised mixtures of linear models."""

__version__ = "0.1.0"

from .data import Dataset, ScalingParams, Task, dummy_encode, load_csv, standardize, train_test_split  # noqa: E402
from .linear import LinearModel, fit_cv, fit_lasso, fit_logistic_l1, predict_linear  # noqa: E402
from .tree import SynthTreeModel, predict_tree  # noqa: E402
from .epic import EpicModel, predict_epic  # noqa: E402
from .evaluation import auc, rmse  # noqa: E402
from .pipeline import RunConfig, fit_pipeline, load_model  # noqa: E402

__all__ = [
    "Dataset", "ScalingParams", "Task", "dummy_encode", "load_csv", "standardize", "train_test_split",
    "LinearModel", "fit_cv", "fit_lasso", "fit_logistic_l1", "predict_linear",
    "SynthTreeModel", "predict_tree", "EpicModel", "predict_epic", "auc", "rmse",
    "RunConfig", "fit_pipeline", "load_model",
]
