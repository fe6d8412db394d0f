"""Small reverse-mode autodiff tensor library and the layers CAST needs."""

from . import functional
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (BatchNorm, Conv2d, Dropout, LayerNorm, Linear, Module, MultiheadAttention,
                     Parameter)
from .optim import EMA, SWA, AdamW, clip_grad_norm, cosine_lr
from .tensor import Tensor, as_tensor, concat, no_grad, precision, stack

__all__ = [
    "functional", "load_checkpoint", "save_checkpoint", "BatchNorm", "Conv2d", "Dropout",
    "LayerNorm", "Linear", "Module", "MultiheadAttention", "Parameter", "EMA", "SWA", "AdamW",
    "clip_grad_norm", "cosine_lr", "Tensor", "as_tensor", "concat", "no_grad", "precision", "stack",
]
