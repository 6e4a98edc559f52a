"""Python bindings for the vaelab C++ core."""

from ._vaelab import (
    Activation,
    ContractError,
    Estimator,
    FormatError,
    Likelihood,
    MlpConfig,
    NumericError,
    PixelRange,
    VaeModel,
    elbo,
    init_model,
    load_checkpoint,
    load_idx,
    reconstruct,
    save_checkpoint,
    save_idx,
    synthetic,
    train,
)

__all__ = [
    "Activation",
    "ContractError",
    "Estimator",
    "FormatError",
    "Likelihood",
    "MlpConfig",
    "NumericError",
    "PixelRange",
    "VaeModel",
    "elbo",
    "init_model",
    "load_checkpoint",
    "load_idx",
    "reconstruct",
    "save_checkpoint",
    "save_idx",
    "synthetic",
    "train",
]
