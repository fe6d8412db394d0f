"""Module containers and the layers the CAST network is assembled from."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ValidationError
from . import functional as F
from .tensor import Tensor, default_dtype


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Minimal module tree: parameters, buffers and children are plain attributes.

    Buffers (non-trainable state such as batch-norm running statistics) are
    numpy arrays listed in ``self._buffers``.
    """

    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def _children(self):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Module, Parameter)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_modules(self, prefix: str = ""):
        yield prefix, self
        for name, child in self._children():
            if isinstance(child, Module):
                yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def modules(self):
        return [m for _, m in self.named_modules()]

    def named_parameters(self, prefix: str = ""):
        for name, child in self._children():
            full = f"{prefix}.{name}" if prefix else name
            if isinstance(child, Parameter):
                yield full, child
            else:
                yield from child.named_parameters(full)

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self):
        for mname, module in self.named_modules():
            for bname in getattr(module, "_buffers", ()):
                yield (f"{mname}.{bname}" if mname else bname), module, bname

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((name, p.data.copy()) for name, p in self.named_parameters())
        for name, module, bname in self.named_buffers():
            state[name] = getattr(module, bname).copy()
        return state

    def load_state_dict(self, state, strict: bool = True) -> None:
        params = dict(self.named_parameters())
        buffers = {name: (module, bname) for name, module, bname in self.named_buffers()}
        expected = set(params) | set(buffers)
        if strict:
            missing = expected - set(state)
            unexpected = set(state) - expected
            if missing or unexpected:
                raise ValidationError(f"state mismatch; missing={sorted(missing)}, unexpected={sorted(unexpected)}")
        for name, value in state.items():
            value = np.asarray(value)
            if name in params:
                p = params[name]
                if value.shape != p.shape:
                    raise ValidationError(f"{name}: shape {value.shape} != {p.shape}")
                p.data = value.astype(p.dtype, copy=True)
            elif name in buffers:
                module, bname = buffers[name]
                old = getattr(module, bname)
                if value.shape != old.shape:
                    raise ValidationError(f"{name}: shape {value.shape} != {old.shape}")
                setattr(module, bname, value.astype(old.dtype, copy=True))

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, module, bname in self.named_buffers():
            setattr(module, bname, getattr(module, bname).astype(dtype))
        return self

    def reseed(self, seed: int) -> None:
        """Give every stochastic submodule its own reproducible stream."""
        for i, m in enumerate(self.modules()):
            if hasattr(m, "rng"):
                m.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), i])))


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(default_dtype())


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / np.sqrt(d_in)
        self.weight = Parameter(_uniform(rng, (d_out, d_in), bound))
        self.bias = Parameter(_uniform(rng, (d_out,), bound)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, bias: bool = True):
        if kernel % 2 != 1:
            raise ValidationError("only odd kernel sizes keep the spatial size")
        bound = 1.0 / np.sqrt(c_in * kernel * kernel)
        self.weight = Parameter(_uniform(rng, (c_out, c_in, kernel, kernel), bound))
        self.bias = Parameter(_uniform(rng, (c_out,), bound)) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias)


class BatchNorm(Module):
    """Batch norm over axis 1 of ``[N, C]`` or ``[N, C, H, W]`` inputs."""

    _buffers = ("running_mean", "running_var")

    def __init__(self, channels: int, momentum: float | None = 0.1, eps: float = 1e-5):
        dt = default_dtype()
        self.weight = Parameter(np.ones(channels, dtype=dt))
        self.bias = Parameter(np.zeros(channels, dtype=dt))
        self.running_mean = np.zeros(channels, dtype=dt)
        self.running_var = np.ones(channels, dtype=dt)
        self.momentum = momentum
        self.eps = eps
        self._count = [0]

    def reset_running_stats(self) -> None:
        self.running_mean[:] = 0
        self.running_var[:] = 1
        self._count = [0]

    def forward(self, x):
        return F.batch_norm(x, self.weight, self.bias, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps, self._count)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        dt = default_dtype()
        self.weight = Parameter(np.ones(dim, dtype=dt))
        self.bias = Parameter(np.zeros(dim, dtype=dt))
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.weight, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, p: float, seed: int = 0):
        if not 0.0 <= p < 1.0:
            raise ValidationError("dropout p must lie in [0, 1)")
        self.p = p
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    def forward(self, x):
        return F.dropout(x, self.p, self.training, self.rng)


class MultiheadAttention(Module):
    """Scaled dot-product attention with learned query/key/value/output maps.

    Inputs are ``[B, N, d]``; ``d`` must be divisible by ``heads``.  The most
    recent attention weights ``[B, heads, N_q, N_k]`` are kept in
    ``last_weights`` for inspection.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, dropout: float = 0.0):
        if dim % heads != 0:
            raise ValidationError(f"embedding dim {dim} is not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.dropout_p = dropout
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(0)))
        self.last_weights = None

    def _split(self, x: Tensor) -> Tensor:
        B, N, _ = x.shape
        return x.reshape(B, N, self.heads, self.dim // self.heads).transpose(0, 2, 1, 3)

    def forward(self, query, key, value):
        if query.ndim != 3 or key.ndim != 3 or value.ndim != 3:
            raise ValidationError("attention inputs must be [B, N, d]")
        if query.shape[-1] != self.dim or key.shape[-1] != self.dim or value.shape[-1] != self.dim:
            raise ValidationError(f"attention inputs must have feature dim {self.dim}")
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        out, weights = F.scaled_dot_product_attention(q, k, v, self.dropout_p, self.training, self.rng)
        self.last_weights = weights.data
        B, _, Nq, _ = out.shape
        merged = out.transpose(0, 2, 1, 3).reshape(B, Nq, self.dim)
        return self.out_proj(merged)
