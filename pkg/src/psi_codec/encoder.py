"""Context-conditioned encoder.

Pipeline: two-layer convolutional stem with FiLM modulation on both conv
outputs, learned positional embeddings on data tokens, soft prompt tokens
concatenated ahead of the data tokens before the first attention block,
a pre-norm ViT backbone, and a dense latent head over the flattened data
tokens. Conditioning enters only through the context vector; with the film
gate closed and no prompt tokens the encoder is exactly the unconditioned
backbone.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import ParamBuilder, ParamDict, mlp2
from .psi_data import CHAN_TYPES, RAYLEIGH, RICIAN
from . import tensor as tz
from .tensor import Graph, Tensor


class SnrClampWarning(UserWarning):
    """SNR fell outside the configured normalization range and was clamped."""


@dataclass(frozen=True)
class SideInfo:
    """Conditioning triple shared by transmitter and receiver side logic."""

    snr_db: float
    chan_type: str
    rate: float

    def __post_init__(self):
        if self.chan_type not in CHAN_TYPES:
            raise ConfigError(f"SideInfo: unknown chan_type {self.chan_type!r}")
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError(f"SideInfo: rate must be in (0, 1], got {self.rate}")


@dataclass(frozen=True)
class EncoderConfig:
    h: int = 4
    w: int = 4
    patch: int = 1
    d: int = 32                # token embed width
    depth: int = 2             # backbone blocks L
    heads: int = 4
    prompt_tokens: int = 4     # P
    d_p: int = 64              # descriptor width
    latent_dim: int = 16       # D
    stem_channels: int = 16    # conv1 output channels
    use_prompt: bool = True
    use_film: bool = True

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigError(f"EncoderConfig: d={self.d} not divisible by heads={self.heads}")
        if not 1 <= self.prompt_tokens <= 8:
            raise ConfigError(f"EncoderConfig: prompt_tokens must be in [1, 8], got {self.prompt_tokens}")
        if self.latent_dim < 1:
            raise ConfigError("EncoderConfig: latent_dim must be >= 1")
        if self.h % self.patch or self.w % self.patch:
            raise ConfigError(f"EncoderConfig: {self.h}x{self.w} not divisible by patch {self.patch}")

    @property
    def tokens(self) -> int:
        """Data token count N."""
        return (self.h // self.patch) * (self.w // self.patch)


def encode_side_info(s: SideInfo, snr_range_db: tuple[float, float]) -> np.ndarray:
    """Context vector [snr_norm, r, onehot_rayleigh, onehot_rician].

    SNR outside the configured range clamps to [0, 1] with a warning, which
    supports mismatched-SNR evaluation.
    """
    lo, hi = snr_range_db
    if hi <= lo:
        raise ConfigError(f"snr range must satisfy min < max, got [{lo}, {hi}]")
    norm = (s.snr_db - lo) / (hi - lo)
    if norm < 0.0 or norm > 1.0:
        warnings.warn(
            f"snr {s.snr_db} dB outside configured range [{lo}, {hi}]; clamping",
            SnrClampWarning,
            stacklevel=2,
        )
        norm = min(max(norm, 0.0), 1.0)
    one_ray = 1.0 if s.chan_type == RAYLEIGH else 0.0
    return np.array([norm, s.rate, one_ray, 1.0 - one_ray], dtype=np.float64)


# ---------------------------------------------------------------------------
# parameters

def init_encoder_params(cfg: EncoderConfig, seed: int, dtype=np.float32) -> ParamDict:
    b = ParamBuilder(seed, dtype)
    c1, d, dp = cfg.stem_channels, cfg.d, cfg.d_p
    b.uniform("enc.stem.conv1.w", (c1, 1, 3, 3), fan_in=9)
    b.zeros("enc.stem.conv1.b", (c1,))
    b.uniform("enc.stem.conv2.w", (d, c1, cfg.patch, cfg.patch), fan_in=c1 * cfg.patch * cfg.patch)
    b.zeros("enc.stem.conv2.b", (d,))
    b.uniform("enc.pos", (cfg.tokens, d), fan_in=d)
    for i in range(cfg.depth):
        pre = f"enc.block{i}"
        b.layer_norm(f"{pre}.ln1", d)
        b.dense(f"{pre}.qkv", d, 3 * d)
        b.dense(f"{pre}.proj", d, d)
        b.layer_norm(f"{pre}.ln2", d)
        b.dense(f"{pre}.ffn1", d, 4 * d)
        b.dense(f"{pre}.ffn2", 4 * d, d)
    b.dense("enc.head", cfg.tokens * d, cfg.latent_dim)
    if cfg.use_film:
        b.dense("enc.ctx.film.mlp.l1", 4, dp)
        b.dense("enc.ctx.film.mlp.l2", dp, dp)
        # conditioning starts neutral: projection outputs and gate at zero
        b.zeros("enc.ctx.film.gate.w", (dp, 1))
        b.dense("enc.ctx.film.gamma1", dp, c1, zero=True)
        b.dense("enc.ctx.film.beta1", dp, c1, zero=True)
        b.dense("enc.ctx.film.gamma2", dp, d, zero=True)
        b.dense("enc.ctx.film.beta2", dp, d, zero=True)
    if cfg.use_prompt:
        b.dense("enc.ctx.prompt.mlp.l1", 4, dp)
        b.dense("enc.ctx.prompt.mlp.l2", dp, dp)
        b.dense("enc.ctx.prompt.proj", dp, cfg.prompt_tokens * d, zero=True)
    return b.values


# ---------------------------------------------------------------------------
# conditioning paths

def prompt_descriptors(ctx: Tensor, p: dict[str, Tensor]) -> tuple[Tensor | None, Tensor | None]:
    """(p_f, p_s): ReLU MLP and GELU MLP views of the same context."""
    p_f = mlp2(p, "enc.ctx.film.mlp", ctx, "relu") if "enc.ctx.film.mlp.l1.w" in p else None
    p_s = mlp2(p, "enc.ctx.prompt.mlp", ctx, "gelu") if "enc.ctx.prompt.mlp.l1.w" in p else None
    return p_f, p_s


def film_gate(p_f: Tensor, p: dict[str, Tensor]) -> Tensor:
    """g_f = sigmoid(w_f . p_f), shape [1, 1]."""
    return tz.sigmoid(tz.matmul(p_f, p["enc.ctx.film.gate.w"]))


def film_modulate(h: Tensor, gamma: Tensor, beta: Tensor, g_f, channel_axis: int = -3) -> Tensor:
    """H' = H * (1 + g_f * gamma) + g_f * beta, broadcast per channel.

    h is [..., C, H', W'] for stem features (channel_axis -3) or [..., T, C]
    for token stacks (channel_axis -1). gamma/beta are [C] or [1, C]; g_f is
    a scalar Tensor, float, or [1, 1] Tensor.
    """
    g = h.graph
    if not isinstance(g_f, Tensor):
        g_f = g.constant(np.asarray(g_f, dtype=np.float64).reshape(1, 1))
    gamma = g.as_tensor(gamma)
    beta = g.as_tensor(beta)
    c = gamma.value.size
    if h.shape[channel_axis] != c:
        raise ShapeError(
            f"film_modulate: channel axis size {h.shape[channel_axis]} != modulation width {c}"
        )
    gf_flat = tz.reshape(g_f, (1,))
    shape = [1] * len(h.shape)
    shape[channel_axis] = c
    scale = tz.reshape(tz.add_scalar(tz.reshape(gamma, (c,)) * gf_flat, 1.0), shape)
    shift = tz.reshape(tz.reshape(beta, (c,)) * gf_flat, shape)
    return h * scale + shift


def soft_prompt_tokens(p_s: Tensor, p: dict[str, Tensor], prompt_count: int, d: int) -> Tensor:
    """S = Proj_s(p_s) reshaped to [P, d] prompt tokens (leading batch kept)."""
    flat = tz.dense(p_s, p["enc.ctx.prompt.proj.w"], p["enc.ctx.prompt.proj.b"])
    lead = flat.shape[:-1]
    return tz.reshape(flat, lead + (prompt_count, d))


# ---------------------------------------------------------------------------
# backbone

def embed_stem(x: Tensor, film: tuple | None, p: dict[str, Tensor], cfg: EncoderConfig) -> Tensor:
    """[B, 1, H, W] -> [B, N, d] tokens; film = (gamma1, beta1, gamma2, beta2, g_f)."""
    h = tz.conv2d(x, p["enc.stem.conv1.w"], p["enc.stem.conv1.b"], stride=1, padding=1)
    if film is not None:
        h = film_modulate(h, film[0], film[1], film[4], channel_axis=-3)
    h = tz.gelu(h)
    h = tz.conv2d(h, p["enc.stem.conv2.w"], p["enc.stem.conv2.b"], stride=cfg.patch, padding=0)
    if film is not None:
        h = film_modulate(h, film[2], film[3], film[4], channel_axis=-3)
    h = tz.gelu(h)
    bsz = h.shape[0]
    # [B, d, H', W'] -> [B, N, d]
    h = tz.reshape(h, (bsz, cfg.d, cfg.tokens))
    return tz.swapaxes(h, 1, 2)


def mha_block(x: Tensor, p: dict[str, Tensor], prefix: str, heads: int) -> Tensor:
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x))."""
    bsz, t, d = x.shape
    if d % heads:
        raise ConfigError(f"mha_block: width {d} not divisible by heads {heads}")
    dh = d // heads
    h = tz.layer_norm(x, p[f"{prefix}.ln1.gain"], p[f"{prefix}.ln1.bias"])
    qkv = tz.dense(h, p[f"{prefix}.qkv.w"], p[f"{prefix}.qkv.b"])

    def split(lo: int) -> Tensor:
        part = tz.slice_axis(qkv, 2, lo * d, (lo + 1) * d)
        part = tz.reshape(part, (bsz, t, heads, dh))
        return tz.swapaxes(part, 1, 2)  # [B, heads, T, dh]

    q, k, v = split(0), split(1), split(2)
    logits = tz.scale(tz.matmul(q, tz.swapaxes(k, 2, 3)), 1.0 / np.sqrt(dh))
    att = tz.softmax_rows(logits)
    ctx = tz.matmul(att, v)  # [B, heads, T, dh]
    ctx = tz.reshape(tz.swapaxes(ctx, 1, 2), (bsz, t, d))
    x = x + tz.dense(ctx, p[f"{prefix}.proj.w"], p[f"{prefix}.proj.b"])
    h2 = tz.layer_norm(x, p[f"{prefix}.ln2.gain"], p[f"{prefix}.ln2.bias"])
    ffn = tz.dense(tz.gelu(tz.dense(h2, p[f"{prefix}.ffn1.w"], p[f"{prefix}.ffn1.b"])), p[f"{prefix}.ffn2.w"], p[f"{prefix}.ffn2.b"])
    return x + ffn


def encoder_forward(g: Graph, p: dict[str, Tensor], cfg: EncoderConfig, x: Tensor, ctx_vec: np.ndarray) -> Tensor:
    """Batched encode: x [B, 1, H, W] and one shared context -> z [B, D]."""
    if x.shape[-2:] != (cfg.h, cfg.w):
        raise ConfigError(f"encoder_forward: input {x.shape} does not match config {cfg.h}x{cfg.w}")
    ctx = g.constant(np.asarray(ctx_vec, dtype=np.float64).reshape(1, 4))
    p_f, p_s = prompt_descriptors(ctx, p)

    film = None
    if cfg.use_film:
        g_f = film_gate(p_f, p)
        film = (
            tz.dense(p_f, p["enc.ctx.film.gamma1.w"], p["enc.ctx.film.gamma1.b"]),
            tz.dense(p_f, p["enc.ctx.film.beta1.w"], p["enc.ctx.film.beta1.b"]),
            tz.dense(p_f, p["enc.ctx.film.gamma2.w"], p["enc.ctx.film.gamma2.b"]),
            tz.dense(p_f, p["enc.ctx.film.beta2.w"], p["enc.ctx.film.beta2.b"]),
            g_f,
        )

    tokens = embed_stem(x, film, p, cfg)
    tokens = tokens + p["enc.pos"]
    bsz = tokens.shape[0]
    n = cfg.tokens

    p_count = 0
    if cfg.use_prompt:
        prompts = soft_prompt_tokens(p_s, p, cfg.prompt_tokens, cfg.d)  # [1, P, d]
        prompts = tz.broadcast_to(prompts, (bsz, cfg.prompt_tokens, cfg.d))
        tokens = tz.concat([prompts, tokens], axis=1)
        p_count = cfg.prompt_tokens

    for i in range(cfg.depth):
        tokens = mha_block(tokens, p, f"enc.block{i}", cfg.heads)

    if p_count:
        tokens = tz.slice_axis(tokens, 1, p_count, p_count + n)
    flat = tz.reshape(tokens, (bsz, n * cfg.d))
    return tz.dense(flat, p["enc.head.w"], p["enc.head.b"])


def encode(t_map, s: SideInfo, params: ParamDict, cfg: EncoderConfig, snr_range_db: tuple[float, float], dtype=np.float64) -> np.ndarray:
    """Single-map convenience wrapper: PSIMap + SideInfo -> latent z [D]."""
    from .psi_data import normalize_psi
    from .nn import bind_params

    g = Graph(dtype=dtype)
    p = bind_params(g, params, trainable=False)
    x = g.constant(normalize_psi(t_map)[None])  # [1, 1, H, W]
    ctx = encode_side_info(s, snr_range_db)
    z = encoder_forward(g, p, cfg, x, ctx)
    return z.value[0].copy()
