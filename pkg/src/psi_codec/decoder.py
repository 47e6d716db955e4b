"""Lightweight token-mixing decoder.

A dense layer expands the received latent into a token grid, a stack of
gated depthwise-convolution blocks mixes it, and a per-token head emits the
reconstructed map. Each block is residual with a zero-initialized output
projection, so a freshly initialized stack is an exact identity. A matched
attention decoder with the same expand/head interface serves as the heavy
conventional baseline for complexity comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import ParamBuilder, ParamDict, bind_params, mlp2
from .encoder import film_modulate, mha_block
from . import tensor as tz
from .tensor import Graph, Tensor

DWCG = "dwcg"
ATTENTION = "attention"


@dataclass(frozen=True)
class DecoderConfig:
    h: int = 4
    w: int = 4
    e: int = 32            # token channel width
    k_dw: int = 7          # depthwise kernel size
    eta: int = 2           # expansion factor inside each block
    n_blocks: int = 4
    latent_dim: int = 16
    kind: str = DWCG
    heads: int = 4         # attention baseline only
    film: bool = False     # per-block conditioning (joint-prompt variant)
    d_p: int = 64

    def __post_init__(self):
        if self.kind not in (DWCG, ATTENTION):
            raise ConfigError(f"DecoderConfig: unknown kind {self.kind!r}")
        if self.k_dw % 2 == 0:
            raise ConfigError(f"DecoderConfig: k_dw must be odd, got {self.k_dw}")
        if self.kind == ATTENTION and self.e % self.heads:
            raise ConfigError(f"DecoderConfig: e={self.e} not divisible by heads={self.heads}")
        if self.eta < 1 or self.n_blocks < 1 or self.latent_dim < 1:
            raise ConfigError("DecoderConfig: eta, n_blocks, latent_dim must be >= 1")

    @property
    def t_dec(self) -> int:
        return self.h * self.w


def init_decoder_params(cfg: DecoderConfig, seed: int, dtype=np.float32) -> ParamDict:
    b = ParamBuilder(seed, dtype)
    e = cfg.e
    b.dense("dec.expand", cfg.latent_dim, cfg.t_dec * e)
    if cfg.kind == ATTENTION:
        b.uniform("dec.pos", (cfg.t_dec, e), fan_in=e)
    for i in range(cfg.n_blocks):
        pre = f"dec.block{i}"
        if cfg.kind == DWCG:
            b.layer_norm(f"{pre}.ln", e)
            b.uniform(f"{pre}.dw.k", (e, cfg.k_dw), fan_in=cfg.k_dw)
            b.zeros(f"{pre}.dw.b", (e,))
            b.dense(f"{pre}.up", e, 2 * cfg.eta * e)
            # zero: residual branch silent at init, block starts as identity
            b.dense(f"{pre}.down", cfg.eta * e, e, zero=True)
        else:
            b.layer_norm(f"{pre}.ln1", e)
            b.dense(f"{pre}.qkv", e, 3 * e)
            b.dense(f"{pre}.proj", e, e)
            b.layer_norm(f"{pre}.ln2", e)
            b.dense(f"{pre}.ffn1", e, 4 * e)
            b.dense(f"{pre}.ffn2", 4 * e, e)
    b.dense("dec.head", e, 1)
    if cfg.film:
        b.dense("dec.film.mlp.l1", 4, cfg.d_p)
        b.dense("dec.film.mlp.l2", cfg.d_p, cfg.d_p)
        b.zeros("dec.film.gate.w", (cfg.d_p, 1))
        for i in range(cfg.n_blocks):
            b.dense(f"dec.film.gamma{i}", cfg.d_p, e, zero=True)
            b.dense(f"dec.film.beta{i}", cfg.d_p, e, zero=True)
    return b.values


def dwcg_block(x: Tensor, p: dict[str, Tensor], prefix: str, eta: int) -> Tensor:
    """x + Contract(GELU(V) * sigmoid(G)) with [V, G] = Expand(DWConv(LN(x)))."""
    e = x.shape[-1]
    h = tz.layer_norm(x, p[f"{prefix}.ln.gain"], p[f"{prefix}.ln.bias"])
    h = tz.depthwise_conv1d(h, p[f"{prefix}.dw.k"], p[f"{prefix}.dw.b"])
    uv = tz.dense(h, p[f"{prefix}.up.w"], p[f"{prefix}.up.b"])
    mid = eta * e
    v = tz.slice_axis(uv, uv.value.ndim - 1, 0, mid)
    gate = tz.slice_axis(uv, uv.value.ndim - 1, mid, 2 * mid)
    mixed = tz.gelu(v) * tz.sigmoid(gate)
    return x + tz.dense(mixed, p[f"{prefix}.down.w"], p[f"{prefix}.down.b"])


def decoder_forward(g: Graph, p: dict[str, Tensor], cfg: DecoderConfig, z: Tensor, ctx_vec: np.ndarray | None = None) -> Tensor:
    """Latent batch [B, D] -> reconstructed maps [B, 1, H, W] (normalized units)."""
    if z.shape[-1] != cfg.latent_dim:
        raise ConfigError(f"decoder_forward: latent width {z.shape[-1]} != config {cfg.latent_dim}")
    bsz = z.shape[0]
    lat = tz.dense(z, p["dec.expand.w"], p["dec.expand.b"])
    lat = tz.reshape(lat, (bsz, cfg.t_dec, cfg.e))
    if cfg.kind == ATTENTION:
        lat = lat + p["dec.pos"]

    film = None
    if cfg.film:
        if ctx_vec is None:
            raise ConfigError("decoder_forward: cfg.film requires a context vector")
        ctx = g.constant(np.asarray(ctx_vec, dtype=np.float64).reshape(1, 4))
        p_f = mlp2(p, "dec.film.mlp", ctx, "relu")
        g_f = tz.sigmoid(tz.matmul(p_f, p["dec.film.gate.w"]))
        film = [
            (
                tz.dense(p_f, p[f"dec.film.gamma{i}.w"], p[f"dec.film.gamma{i}.b"]),
                tz.dense(p_f, p[f"dec.film.beta{i}.w"], p[f"dec.film.beta{i}.b"]),
                g_f,
            )
            for i in range(cfg.n_blocks)
        ]

    for i in range(cfg.n_blocks):
        if film is not None:
            gm, bt, gf = film[i]
            lat = film_modulate(lat, gm, bt, gf, channel_axis=-1)
        if cfg.kind == DWCG:
            lat = dwcg_block(lat, p, f"dec.block{i}", cfg.eta)
        else:
            lat = mha_block(lat, p, f"dec.block{i}", cfg.heads)

    out = tz.dense(lat, p["dec.head.w"], p["dec.head.b"])  # [B, T, 1]
    return tz.reshape(out, (bsz, 1, cfg.h, cfg.w))


def decode(z: np.ndarray, params: ParamDict, cfg: DecoderConfig, ctx_vec: np.ndarray | None = None, dtype=np.float64) -> np.ndarray:
    """Single latent [D] -> normalized map [H, W]."""
    g = Graph(dtype=dtype)
    p = bind_params(g, params, trainable=False)
    zt = g.constant(np.asarray(z, dtype=np.float64).reshape(1, cfg.latent_dim))
    x = decoder_forward(g, p, cfg, zt, ctx_vec)
    return x.value[0, 0].copy()
