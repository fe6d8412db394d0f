"""Training loop with warmup-cosine AdamW, EMA, SWA and top-k checkpoint tracking."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import TrainingDiverged, ValidationError
from ..nn.functional import softmax_np
from ..nn.layers import BatchNorm
from ..nn.optim import EMA, SWA, AdamW, clip_grad_norm, cosine_lr
from ..nn.tensor import no_grad
from .config import ExperimentConfig
from .data import augmented_inputs, mix_batch, stack_inputs
from .loss import cast_loss, one_hot
from .model import CastModel

log = logging.getLogger(__name__)


@dataclass
class TrainedBundle:
    """Everything a training run produces.

    ``top_k`` holds ``(val_acc, epoch, state)`` tuples, best first.
    ``log`` holds one dict per epoch.
    """

    config: ExperimentConfig
    final: dict
    ema: Optional[dict] = None
    swa: Optional[dict] = None
    top_k: list = field(default_factory=list)
    log: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def members(self) -> dict:
        """Named ensemble members: top-k checkpoints plus EMA and SWA when present."""
        out = {f"top{i + 1}": state for i, (_, _, state) in enumerate(self.top_k)}
        if self.ema is not None:
            out["ema"] = self.ema
        if self.swa is not None:
            out["swa"] = self.swa
        return out


def build_model(exp: ExperimentConfig, state: Optional[dict] = None) -> CastModel:
    model = CastModel(exp.model)
    if state is not None:
        model.load_state_dict(state)
    return model


def predict_logits(model: CastModel, x_rtm: np.ndarray, x_cvd: np.ndarray, batch_size: int = 64) -> np.ndarray:
    model.eval()
    outs = []
    with no_grad():
        for i in range(0, len(x_rtm), batch_size):
            out = model(x_rtm[i:i + batch_size], x_cvd[i:i + batch_size])
            outs.append(out["logits"].data.astype(np.float64))
    return np.concatenate(outs)


def predict_proba(model: CastModel, x_rtm: np.ndarray, x_cvd: np.ndarray, batch_size: int = 64) -> np.ndarray:
    return softmax_np(predict_logits(model, x_rtm, x_cvd, batch_size))


def accuracy(model: CastModel, x_rtm, x_cvd, labels) -> float:
    if len(labels) == 0:
        return float("nan")
    pred = predict_logits(model, x_rtm, x_cvd).argmax(axis=1)
    return float(np.mean(pred == np.asarray(labels)))


def recompute_bn(model: CastModel, x_rtm: np.ndarray, x_cvd: np.ndarray, batch_size: int) -> None:
    """Re-estimate batch-norm running statistics as a cumulative average over the data."""
    norms = [m for m in model.modules() if isinstance(m, BatchNorm)]
    saved = [m.momentum for m in norms]
    for m in norms:
        m.reset_running_stats()
        m.momentum = None
    model.train()
    with no_grad():
        for i in range(0, len(x_rtm), batch_size):
            model(x_rtm[i:i + batch_size], x_cvd[i:i + batch_size])
    for m, mom in zip(norms, saved):
        m.momentum = mom
    model.eval()


def _averaged_state(exp, state, x_rtm, x_cvd) -> dict:
    model = build_model(exp, state)
    recompute_bn(model, x_rtm, x_cvd, exp.train.batch_size)
    return model.state_dict()


def train(exp: ExperimentConfig, train_samples, val_samples,
          progress: Optional[Callable[[dict], None]] = None) -> TrainedBundle:
    """Train a CAST model on labelled range-time maps.

    Deterministic for a fixed ``exp.train.seed``.  Raises
    :class:`TrainingDiverged` as soon as the loss stops being finite.
    """
    if not train_samples:
        raise ValidationError("training set is empty")
    tc = exp.train
    C = exp.model.num_classes
    labels = np.array([s.label for s in train_samples])
    if np.any(labels < 0) or np.any(labels >= C):
        raise ValidationError(f"training labels must lie in [0, {C})")

    model = build_model(exp)
    params = model.parameters()
    opt = AdamW(params, lr=tc.lr, weight_decay=tc.weight_decay)
    ema = EMA(model, tc.ema_decay) if tc.use_swa_ema else None
    swa = SWA() if tc.use_swa_ema else None

    plain_rtm, plain_cvd, _ = stack_inputs(train_samples, exp)
    val_rtm, val_cvd, val_y = stack_inputs(val_samples, exp) if val_samples else (None, None, np.array([]))

    n = len(train_samples)
    steps_per_epoch = math.ceil(n / tc.batch_size)
    total_steps = steps_per_epoch * tc.epochs
    warmup_steps = steps_per_epoch * tc.warmup_epochs
    order_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([tc.seed, 1])))
    mix_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([tc.seed, 2])))
    targets_all = one_hot(labels, C)
    top_k: list = []
    history = []
    step = 0

    for epoch in range(tc.epochs):
        model.train()
        mix_allowed = epoch < tc.epochs - tc.mix_free_epochs
        events = {"none": 0, "mixup": 0, "cutmix": 0}
        order = order_rng.permutation(n)
        losses = []
        lr = tc.lr
        for b in range(steps_per_epoch):
            idx = order[b * tc.batch_size:(b + 1) * tc.batch_size]
            pairs = [augmented_inputs(train_samples[i], exp, tc.seed, epoch, int(i)) for i in idx]
            xr = np.stack([p[0] for p in pairs])
            xc = np.stack([p[1] for p in pairs])
            xr, xc, y, event = mix_batch(xr, xc, targets_all[idx], exp.augment, mix_rng, mix_allowed)
            events[event] += 1

            lr = cosine_lr(step, total_steps, warmup_steps, tc.lr, tc.min_lr_frac)
            opt.lr = lr
            opt.zero_grad()
            out = model(xr, xc)
            loss = cast_loss(out["logits"], out.get("logits_rtm"), out.get("logits_cvd"), y,
                             tc.label_smoothing, tc.lambda_aux)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, step {step} (lr={lr:.3g})")
            loss.backward()
            clip_grad_norm(params, tc.grad_clip)
            opt.step()
            if ema is not None:
                ema.update(model)
            losses.append(value)
            step += 1

        if swa is not None and epoch >= tc.swa_start_epoch:
            swa.update(model.state_dict())
        val_acc = accuracy(model, val_rtm, val_cvd, val_y) if val_samples else float("nan")
        if val_samples:
            top_k.append((val_acc, epoch, model.state_dict()))
            top_k.sort(key=lambda item: (item[0], item[1]), reverse=True)
            del top_k[tc.top_k:]
        record = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)),
                  "val_acc": val_acc, "mix_events": events}
        history.append(record)
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, record["train_loss"], val_acc)
        if progress is not None:
            progress(record)

    bundle = TrainedBundle(config=exp, final=model.state_dict(), top_k=top_k, log=history)
    if ema is not None:
        bundle.ema = _averaged_state(exp, ema.state(bundle.final), plain_rtm, plain_cvd)
    if swa is not None and swa.count:
        bundle.swa = _averaged_state(exp, swa.state(bundle.final), plain_rtm, plain_cvd)
    if val_samples:
        bundle.metrics["val_acc_final"] = accuracy(model, val_rtm, val_cvd, val_y)
        for name in ("ema", "swa"):
            state = getattr(bundle, name)
            if state is not None:
                bundle.metrics[f"val_acc_{name}"] = accuracy(build_model(exp, state), val_rtm, val_cvd, val_y)
        counts = np.bincount(labels, minlength=C)
        bundle.metrics["val_acc_majority"] = float(np.mean(val_y == int(np.argmax(counts))))
    return bundle
