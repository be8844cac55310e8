"""Minimal reverse-mode differentiable numerics on dense numpy arrays."""

from .tensor import Tensor, Param, no_grad, tensor, kaiming_uniform, normal_init
from .ops import (
    linear,
    relu,
    softmax,
    log_softmax,
    layer_norm,
    dropout,
    conv3x3,
    avg_pool2x2,
    bilinear_sample,
    upsample2x,
    concat,
)
from .gradcheck import grad_check, GradCheckReport
from .checkpoint import save_checkpoint, load_checkpoint, CHECKPOINT_MAGIC

__all__ = [
    "Tensor", "Param", "no_grad", "tensor", "kaiming_uniform", "normal_init",
    "linear", "relu", "softmax", "log_softmax", "layer_norm", "dropout",
    "conv3x3", "avg_pool2x2", "bilinear_sample", "upsample2x", "concat",
    "grad_check", "GradCheckReport",
    "save_checkpoint", "load_checkpoint", "CHECKPOINT_MAGIC",
]
