"""Built-in data-analytics engine behind the ``da_*`` actions."""

from stf.ml.dataset import Column, Dataset, DatasetError, load_dataset
from stf.ml.estimators import (BaselineModel, FitError, GaussianNB, KNNModel, LinearRegression,
                               LogisticRegression, SingularSystemError)
from stf.ml.metrics import MetricsReport, evaluate
from stf.ml.models import (ModelFormatError, ModelSpec, SchemaError, TrainedModel, fit,
                           load_model, loads_model, predict, save_model)
from stf.ml.preprocessing import PreparedData, Preprocessor, PreprocessError, make_windows, \
    preprocess
from stf.ml.prng import SplitMix64
from stf.ml.selection import AutoMLError, AutoMLSearch, automl_search, kfold_cv, kfold_split

__all__ = [
    "AutoMLError", "AutoMLSearch", "BaselineModel", "Column", "Dataset", "DatasetError",
    "FitError", "GaussianNB", "KNNModel", "LinearRegression", "LogisticRegression",
    "MetricsReport", "ModelFormatError", "ModelSpec", "PreparedData", "PreprocessError",
    "Preprocessor", "SchemaError", "SingularSystemError", "SplitMix64", "TrainedModel",
    "automl_search", "evaluate", "fit", "kfold_cv", "kfold_split", "load_dataset",
    "load_model", "loads_model", "make_windows", "predict", "preprocess", "save_model",
]
