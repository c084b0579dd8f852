"""Minimal float64 kernel: GRU/dense layers, losses, SGD, gradient checks."""

from .gradcheck import GradCheckReport, grad_check, numerical_gradient, relative_error
from .layers import Dense, GRULayer, GRUStack, sigmoid, softmax
from .losses import adversarial_loss, bce_loss, discriminator_loss, mse_loss
from .optim import SGD, clip_by_global_norm, global_norm, sgd_step
from .serialize import assign_params, load_params, params_from_bytes, params_to_bytes, save_params

__all__ = [
    "GradCheckReport", "grad_check", "numerical_gradient", "relative_error",
    "Dense", "GRULayer", "GRUStack", "sigmoid", "softmax",
    "adversarial_loss", "bce_loss", "discriminator_loss", "mse_loss",
    "SGD", "clip_by_global_norm", "global_norm", "sgd_step",
    "assign_params", "load_params", "params_from_bytes", "params_to_bytes", "save_params",
]
