"""Backpropagation and SGD training for transform graphs."""
from .autodiff import (
    MODULUS_EPS,
    Gradients,
    StaleTapeError,
    Tape,
    backward,
    class_scores,
    forward,
    loss_and_grad,
    objective_and_grad,
)
from .params import (
    ParamSet,
    fit_standardization,
    init_params,
    load_params,
    params_from_bytes,
    params_to_bytes,
    save_params,
    taps_checksum,
)
from .train import (
    GradCheckReport,
    History,
    TrainConfig,
    TrainingDiverged,
    confusion_accuracy,
    evaluate,
    gradcheck,
    objective,
    predict,
    train,
)

__all__ = [
    "MODULUS_EPS",
    "Gradients",
    "StaleTapeError",
    "Tape",
    "backward",
    "class_scores",
    "forward",
    "loss_and_grad",
    "objective_and_grad",
    "ParamSet",
    "fit_standardization",
    "init_params",
    "load_params",
    "params_from_bytes",
    "params_to_bytes",
    "save_params",
    "taps_checksum",
    "GradCheckReport",
    "History",
    "TrainConfig",
    "TrainingDiverged",
    "confusion_accuracy",
    "evaluate",
    "gradcheck",
    "objective",
    "predict",
    "train",
]
