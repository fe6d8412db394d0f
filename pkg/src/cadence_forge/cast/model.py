"""CAST network: per-stream cross-antenna attention, CNN encoders and gated fusion.

Data flow for the full model::

    RTM image --CASA--> encoder A --proj--> f_rtm --+
                                                    +--> fusion --> main head
    CVD image --CASA--> encoder B --proj--> f_cvd --+
                                     f_rtm --> auxiliary RTM head
                                     f_cvd --> auxiliary CVD head
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ValidationError
from ..nn import functional as F
from ..nn.layers import (BatchNorm, Conv2d, Dropout, LayerNorm, Linear, Module, MultiheadAttention,
                         Parameter)
from ..nn.tensor import Tensor, as_tensor, concat, default_dtype
from .config import ModelConfig

NUM_ANTENNAS = 3


class CasaModule(Module):
    """Cross-antenna spatial attention.

    Every antenna plane is embedded on its own (shared 1->E conv, batch
    norm, ReLU, global average pool), the three embeddings attend to each
    other (residual + layer norm) and a small MLP turns each refined
    embedding into a sigmoid gate that rescales the raw plane.
    """

    def __init__(self, rng: np.random.Generator, embed: int = 16, heads: int = 4, gate_hidden: int = 8,
                 positional: bool = False):
        self.embed = embed
        self.conv = Conv2d(1, embed, 3, rng)
        self.bn = BatchNorm(embed)
        self.mha = MultiheadAttention(embed, heads, rng)
        self.norm = LayerNorm(embed)
        self.gate_hidden = Linear(embed, gate_hidden, rng)
        self.gate_out = Linear(gate_hidden, 1, rng)
        self.pos = Parameter(np.zeros((NUM_ANTENNAS, embed), dtype=default_dtype())) if positional else None

    def embed_antennas(self, x: Tensor) -> Tensor:
        B, A, H, W = x.shape
        planes = x.reshape(B * A, 1, H, W)
        z = F.global_avg_pool(F.relu(self.bn(self.conv(planes))))
        return z.reshape(B, A, self.embed)

    def forward(self, x) -> tuple[Tensor, Tensor]:
        x = as_tensor(x)
        if x.ndim != 4 or x.shape[1] != NUM_ANTENNAS:
            raise ValidationError(f"CASA expects [B, 3, H, W], got {x.shape}")
        z = self.embed_antennas(x)
        if self.pos is not None:
            z = z + self.pos
        z_hat = self.norm(z + self.mha(z, z, z))
        alphas = F.sigmoid(self.gate_out(F.relu(self.gate_hidden(z_hat))))
        B = x.shape[0]
        alphas = alphas.reshape(B, NUM_ANTENNAS)
        return x * alphas.reshape(B, NUM_ANTENNAS, 1, 1), alphas

    def parameter_breakdown(self) -> dict:
        groups = {"conv": self.conv, "bn": self.bn, "mha": self.mha, "norm": self.norm,
                  "gate_mlp": [self.gate_hidden, self.gate_out]}
        counts = {}
        for name, mods in groups.items():
            mods = mods if isinstance(mods, list) else [mods]
            counts[name] = sum(m.num_parameters() for m in mods)
        if self.pos is not None:
            counts["pos"] = int(self.pos.data.size)
        counts["total"] = sum(counts.values())
        return counts


class Encoder(Module):
    """Four conv stages (conv, batch norm, ReLU, 2x2 average pool) then global pooling."""

    def __init__(self, rng: np.random.Generator, channels=(16, 32, 64, 128), kernel: int = 3, in_channels: int = 3):
        self.convs = []
        self.norms = []
        c_in = in_channels
        for c in channels:
            self.convs.append(Conv2d(c_in, c, kernel, rng))
            self.norms.append(BatchNorm(c))
            c_in = c
        self.out_dim = c_in

    def forward(self, x: Tensor) -> Tensor:
        last = len(self.convs) - 1
        for i, (conv, bn) in enumerate(zip(self.convs, self.norms)):
            x = F.relu(bn(conv(x)))
            if i < last and min(x.shape[2:]) >= 2:
                x = F.avg_pool2d(x, 2)
        return F.global_avg_pool(x)


class FusionBlock(Module):
    """Cross-attention fusion with a gated residual back to the RTM features.

    ``asymmetric``: RTM is the query, CVD the key and value.
    ``symmetric``: the mean of both query directions.
    ``concat``: a linear map of the concatenated features (no attention).
    """

    def __init__(self, rng: np.random.Generator, d: int = 512, heads: int = 8, dropout: float = 0.1,
                 ffn_ratio: int = 4, mode: str = "asymmetric"):
        self.mode = mode
        if mode == "concat":
            self.concat_proj = Linear(2 * d, d, rng)
            return
        self.mha = MultiheadAttention(d, heads, rng, dropout=dropout)
        if mode == "symmetric":
            self.mha_reverse = MultiheadAttention(d, heads, rng, dropout=dropout)
        self.ffn_norm = LayerNorm(d)
        self.ffn_in = Linear(d, ffn_ratio * d, rng)
        self.ffn_out = Linear(ffn_ratio * d, d, rng)
        self.gate = Linear(2 * d, d, rng)
        self.last_gate: Optional[np.ndarray] = None
        self.last_attended: Optional[np.ndarray] = None

    def forward(self, f_rtm: Tensor, f_cvd: Tensor) -> Tensor:
        if f_rtm.shape != f_cvd.shape:
            raise ValidationError(f"stream features differ in shape: {f_rtm.shape} vs {f_cvd.shape}")
        if self.mode == "concat":
            return self.concat_proj(concat([f_rtm, f_cvd], axis=-1))
        B, d = f_rtm.shape
        q = f_rtm.reshape(B, 1, d)
        kv = f_cvd.reshape(B, 1, d)
        e = self.mha(q, kv, kv)
        if self.mode == "symmetric":
            e = (e + self.mha_reverse(kv, q, q)) * 0.5
        e = e.reshape(B, d)
        e_prime = self.ffn_out(F.gelu(self.ffn_in(self.ffn_norm(e))))
        g = F.sigmoid(self.gate(concat([f_rtm, e_prime], axis=-1)))
        self.last_gate = g.data
        self.last_attended = e_prime.data
        return g * e_prime + (1.0 - g) * f_rtm


class ClassifierHead(Module):
    """LayerNorm, dropout, linear."""

    def __init__(self, rng: np.random.Generator, d: int, num_classes: int, dropout: float):
        self.norm = LayerNorm(d)
        self.drop = Dropout(dropout)
        self.fc = Linear(d, num_classes, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc(self.drop(self.norm(x)))


class CastModel(Module):
    def __init__(self, cfg: ModelConfig):
        self.config = cfg
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 17])))
        self.has_rtm = cfg.streams in ("both", "rtm")
        self.has_cvd = cfg.streams in ("both", "cvd")
        feat = cfg.encoder_channels[-1]
        if self.has_rtm:
            if cfg.use_casa:
                self.casa_rtm = CasaModule(rng, cfg.casa_embed, cfg.casa_heads, cfg.casa_gate_hidden, cfg.casa_positional)
            self.enc_rtm = Encoder(rng, cfg.encoder_channels, cfg.rtm_kernel)
            self.proj_rtm = Linear(feat, cfg.d_model, rng)
        if self.has_cvd:
            if cfg.use_casa:
                self.casa_cvd = CasaModule(rng, cfg.casa_embed, cfg.casa_heads, cfg.casa_gate_hidden, cfg.casa_positional)
            self.enc_cvd = Encoder(rng, cfg.encoder_channels, cfg.cvd_kernel)
            self.proj_cvd = Linear(feat, cfg.d_model, rng)
        if self.has_rtm and self.has_cvd:
            self.fusion = FusionBlock(rng, cfg.d_model, cfg.fusion_heads, cfg.fusion_dropout, cfg.ffn_ratio, cfg.fusion)
            self.head_rtm = Linear(cfg.d_model, cfg.num_classes, rng)
            self.head_cvd = Linear(cfg.d_model, cfg.num_classes, rng)
        self.head_main = ClassifierHead(rng, cfg.d_model, cfg.num_classes, cfg.head_dropout)
        self.reseed(cfg.seed)

    def _stream(self, x, casa_name: str, encoder: Encoder, proj: Linear):
        x = as_tensor(x, self.dtype)
        alphas = None
        casa = getattr(self, casa_name, None)
        if casa is not None:
            x, alphas = casa(x)
        return proj(encoder(x)), alphas

    @property
    def dtype(self):
        return self.head_main.fc.weight.dtype

    def stream_features(self, x_rtm=None, x_cvd=None) -> dict:
        out = {}
        if self.has_rtm:
            out["f_rtm"], out["alphas_rtm"] = self._stream(x_rtm, "casa_rtm", self.enc_rtm, self.proj_rtm)
        if self.has_cvd:
            out["f_cvd"], out["alphas_cvd"] = self._stream(x_cvd, "casa_cvd", self.enc_cvd, self.proj_cvd)
        return out

    def forward(self, x_rtm=None, x_cvd=None) -> dict:
        """Return ``logits`` plus, for two-stream models, ``logits_rtm`` and ``logits_cvd``."""
        out = self.stream_features(x_rtm, x_cvd)
        if self.has_rtm and self.has_cvd:
            fused = self.fusion(out["f_rtm"], out["f_cvd"])
            out["logits_rtm"] = self.head_rtm(out["f_rtm"])
            out["logits_cvd"] = self.head_cvd(out["f_cvd"])
        else:
            fused = out["f_rtm"] if self.has_rtm else out["f_cvd"]
        out["fused"] = fused
        out["logits"] = self.head_main(fused)
        return out
