"""Regression learners for SOC and SOH models."""

from .metrics import CVResult, EvalReport, aggregate, error_report, evaluate, kfold_cv, kfold_indices
from .regressor import (
    GRADIENT_BOOSTED,
    KINDS,
    MLP_KIND,
    RANDOM_FOREST,
    ArtifactError,
    LearnerConfig,
    Regressor,
    deserialize_model,
    dumps_model,
    predict,
    serialize_model,
    train,
    train_gradient_boosted,
    train_mlp,
    train_random_forest,
)
from .scaling import MinMaxScaler, NotFittedError, fit_scaler

# feature column order used throughout: (voltage, current, temperature, relative_time)
FEATURES = ("voltage", "current", "temperature", "relative_time")
NO_TIME = (0, 1, 2)

__all__ = [
    "ArtifactError", "CVResult", "EvalReport", "FEATURES", "GRADIENT_BOOSTED", "KINDS",
    "LearnerConfig", "MLP_KIND", "MinMaxScaler", "NO_TIME", "NotFittedError", "RANDOM_FOREST",
    "Regressor", "aggregate", "deserialize_model", "dumps_model", "error_report", "evaluate",
    "fit_scaler", "kfold_cv", "kfold_indices", "predict", "serialize_model", "train",
    "train_gradient_boosted", "train_mlp", "train_random_forest",
]
