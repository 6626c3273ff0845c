"""Minimal numpy tensor engine: autodiff, image operators, Adam."""
from .functional import concat_channels, conv2d, conv_output_size, field_of_view, mse, prelu
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor, check_finite, is_grad_enabled, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "Tensor",
    "adam_step",
    "as_tensor",
    "check_finite",
    "concat_channels",
    "conv2d",
    "conv_output_size",
    "field_of_view",
    "is_grad_enabled",
    "mse",
    "no_grad",
    "prelu",
]
