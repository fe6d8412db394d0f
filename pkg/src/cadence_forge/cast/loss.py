"""Composite label-smoothed cross-entropy for the main and auxiliary heads."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from ..nn import functional as F
from ..nn.tensor import Tensor


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError(f"labels must lie in [0, {num_classes})")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def smooth_targets(targets, num_classes: int, eps: float) -> np.ndarray:
    """``(1 - eps) * y + eps / C``; integer labels are one-hot encoded first."""
    if not 0.0 <= eps < 1.0:
        raise ValidationError("label smoothing must lie in [0, 1)")
    t = np.asarray(targets)
    if t.ndim == 1:
        t = one_hot(t, num_classes)
    t = t.astype(float)
    if t.ndim != 2 or t.shape[1] != num_classes:
        raise ValidationError(f"targets must be [B] labels or [B, {num_classes}] probabilities")
    return (1.0 - eps) * t + eps / num_classes


def cast_loss(logits_main: Tensor, logits_rtm: Tensor | None, logits_cvd: Tensor | None, targets,
              eps_ls: float = 0.1, lambda_aux: float = 0.3) -> Tensor:
    """``CE(main) + lambda_aux * (CE(rtm) + CE(cvd))`` with smoothed targets.

    Auxiliary logits may be ``None`` (single-stream models), in which case
    only the main term is returned.
    """
    if lambda_aux < 0:
        raise ValidationError("lambda_aux must be non-negative")
    B, C = logits_main.shape
    t = smooth_targets(targets, C, eps_ls)
    if t.shape[0] != B:
        raise ValidationError(f"{t.shape[0]} targets for a batch of {B}")
    loss = F.cross_entropy(logits_main, t)
    aux = [z for z in (logits_rtm, logits_cvd) if z is not None]
    for z in aux:
        if z.shape != logits_main.shape:
            raise ValidationError(f"auxiliary logits {z.shape} != main logits {logits_main.shape}")
    if aux and lambda_aux > 0:
        extra = F.cross_entropy(aux[0], t)
        for z in aux[1:]:
            extra = extra + F.cross_entropy(z, t)
        loss = loss + extra * lambda_aux
    return loss
