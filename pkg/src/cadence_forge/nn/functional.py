"""Fused differentiable kernels with hand-written backward passes."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..errors import ValidationError
from .tensor import Tensor

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    if x.shape[-1] != weight.shape[1]:
        raise ValidationError(f"linear: input dim {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValidationError(f"linear: bias shape {bias.shape} != ({weight.shape[0]},)")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        grads = [g @ weight.data, g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return Tensor.from_op(out, parents, backward)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, padding: int | None = None) -> Tensor:
    """Stride-1 cross-correlation with zero padding (``same`` size for odd kernels)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValidationError("conv2d expects x [B,C,H,W] and weight [O,C,k,k]")
    B, C, H, W = x.shape
    O, Ci, kh, kw = weight.shape
    if Ci != C:
        raise ValidationError(f"conv2d: input has {C} channels, kernel expects {Ci}")
    if kh != kw:
        raise ValidationError("conv2d supports square kernels only")
    k = kh
    p = k // 2 if padding is None else padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)))
    Ho, Wo = xp.shape[2] - k + 1, xp.shape[3] - k + 1
    cols = sliding_window_view(xp, (k, k), axis=(2, 3)).transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * k * k)
    wm = weight.data.reshape(O, -1)
    out = cols @ wm.T
    if bias is not None:
        out = out + bias.data
    out = out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, O)
        gw = (gm.T @ cols).reshape(weight.shape)
        gcols = (gm @ wm).reshape(B, Ho, Wo, C, k, k)
        gxp = np.zeros_like(xp)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + Ho, j:j + Wo] += gcols[..., i, j].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p:p + H, p:p + W]
        grads = [gx, gw]
        if bias is not None:
            grads.append(gm.sum(axis=0))
        return tuple(grads)

    return Tensor.from_op(out, parents, backward)


def _channel_view(x: np.ndarray):
    axes = (0,) + tuple(range(2, x.ndim))
    shape = [1] * x.ndim
    shape[1] = x.shape[1]
    return axes, tuple(shape)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float | None = 0.1, eps: float = 1e-5,
               counter: list | None = None) -> Tensor:
    """Batch norm over axis 1.

    In training mode the running statistics are updated in place; with
    ``momentum=None`` they become a cumulative average (``counter`` holds the
    number of batches seen so far).
    """
    axes, shape = _channel_view(x.data)
    n = x.data.size // x.shape[1]
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        unbiased = var * n / max(n - 1, 1)
        if momentum is None:
            seen = counter[0] if counter else 0
            factor = 1.0 / (seen + 1)
            if counter is not None:
                counter[0] = seen + 1
        else:
            factor = momentum
        running_mean += factor * (mu - running_mean)
        running_var += factor * (unbiased - running_var)
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(shape)) * inv.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes)
        gbeta = g.sum(axis=axes)
        dxhat = g * gamma.data.reshape(shape)
        if training:
            gx = (inv.reshape(shape) / n) * (n * dxhat - dxhat.sum(axis=axes, keepdims=True)
                                            - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            gx = dxhat * inv.reshape(shape)
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), backward)


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply an optional affine map."""
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = xhat
    if gamma is not None:
        out = out * gamma.data + beta.data
    parents = (x,) if gamma is None else (x, gamma, beta)
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        dxhat = g if gamma is None else g * gamma.data
        gx = (inv / d) * (d * dxhat - dxhat.sum(axis=-1, keepdims=True)
                          - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        if gamma is None:
            return (gx,)
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor.from_op(out, parents, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)``."""
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data ** 2)
    return Tensor.from_op(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


def sigmoid_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def sigmoid(x: Tensor) -> Tensor:
    s = sigmoid_np(x.data)
    return Tensor.from_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def softmax_np(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    s = softmax_np(x.data, axis)
    return Tensor.from_op(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    s = np.exp(out)
    return Tensor.from_op(out, (x,), lambda g: (g - s * g.sum(axis=axis, keepdims=True),))


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping ``k x k`` average pool; trailing rows/cols that do not fit are dropped."""
    B, C, H, W = x.shape
    Ho, Wo = H // k, W // k
    if Ho == 0 or Wo == 0:
        raise ValidationError(f"avg_pool2d: input {H}x{W} smaller than window {k}")
    crop = x.data[:, :, :Ho * k, :Wo * k]
    out = crop.reshape(B, C, Ho, k, Wo, k).mean(axis=(3, 5))

    def backward(g):
        gx = np.zeros_like(x.data)
        up = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
        gx[:, :, :Ho * k, :Wo * k] = up
        return (gx,)

    return Tensor.from_op(out, (x,), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """Adaptive average pool to ``1 x 1`` followed by flatten: ``[B, C, H, W] -> [B, C]``."""
    return x.mean(axis=(2, 3))


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p == 0.0:
        return x
    if mask is None:
        mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,))


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, dropout_p: float = 0.0,
                                 training: bool = False, rng=None) -> tuple[Tensor, Tensor]:
    """``softmax(q k^T / sqrt(d)) v`` over the last two axes; returns output and weights."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = (q @ k.swapaxes(-1, -2)) * scale
    weights = softmax(scores, axis=-1)
    attn = dropout(weights, dropout_p, training, rng)
    return attn @ v, weights


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy against probability targets ``[B, C]``."""
    t = np.asarray(targets.data if isinstance(targets, Tensor) else targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ValidationError(f"targets shape {t.shape} != logits shape {logits.shape}")
    logp = log_softmax(logits, axis=-1)
    return -(logp * t).sum(axis=-1).mean()
