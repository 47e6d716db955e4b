"""Closed-form parameter and MAC accounting plus measured inference time.

Counting conventions, applied uniformly:
  - params: every weight and bias element.
  - MACs: dense in*out per application (bias adds free); conv2d
    C_out*C_in*k^2 per output position; depthwise conv E*k per token;
    attention scores and apply each T^2*d_head per head (2*T^2*d total);
    layer norm 2 multiplies per element (inverse-std, gain); activation
    evaluations, gating products, and plain adds are not counted.
All counts are exact integers derived from the configs, never sampled.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .decoder import ATTENTION, DWCG, DecoderConfig
from .encoder import EncoderConfig


@dataclass(frozen=True)
class OpCount:
    params: int
    macs: int

    def __add__(self, other: "OpCount") -> "OpCount":
        return OpCount(self.params + other.params, self.macs + other.macs)


ZERO = OpCount(0, 0)


def dense_count(n_in: int, n_out: int, applications: int = 1) -> OpCount:
    return OpCount(n_in * n_out + n_out, n_in * n_out * applications)


def conv2d_count(c_in: int, c_out: int, k: int, out_positions: int) -> OpCount:
    return OpCount(c_out * c_in * k * k + c_out, c_out * c_in * k * k * out_positions)


def depthwise1d_count(e: int, k: int, t: int) -> OpCount:
    return OpCount(e * k + e, e * k * t)


def layer_norm_count(e: int, t: int) -> OpCount:
    return OpCount(2 * e, 2 * e * t)


def attention_block_count(t: int, d: int) -> OpCount:
    """Pre-norm block: LN, QKV, scores, apply, output proj, LN, 4x FFN."""
    total = layer_norm_count(d, t)
    total += dense_count(d, 3 * d, applications=t)
    total += OpCount(0, 2 * t * t * d)
    total += dense_count(d, d, applications=t)
    total += layer_norm_count(d, t)
    total += dense_count(d, 4 * d, applications=t)
    total += dense_count(4 * d, d, applications=t)
    return total


def dwcg_block_count(t: int, e: int, k: int, eta: int) -> OpCount:
    total = layer_norm_count(e, t)
    total += depthwise1d_count(e, k, t)
    total += dense_count(e, 2 * eta * e, applications=t)
    total += dense_count(eta * e, e, applications=t)
    return total


def film_count(d_p: int, channels: int, positions: int) -> OpCount:
    """Two zero-initialized projections plus the per-element scale-and-shift."""
    proj = dense_count(d_p, channels) + dense_count(d_p, channels)
    return proj + OpCount(0, channels * positions)


def encoder_count(cfg: EncoderConfig) -> OpCount:
    n = cfg.tokens
    t_att = n + (cfg.prompt_tokens if cfg.use_prompt else 0)
    total = conv2d_count(1, cfg.stem_channels, 3, cfg.h * cfg.w)
    total += conv2d_count(cfg.stem_channels, cfg.d, cfg.patch, n)
    total += OpCount(n * cfg.d, 0)  # positional table
    for _ in range(cfg.depth):
        total += attention_block_count(t_att, cfg.d)
    total += dense_count(n * cfg.d, cfg.latent_dim)
    if cfg.use_film:
        total += dense_count(4, cfg.d_p) + dense_count(cfg.d_p, cfg.d_p)
        total += OpCount(cfg.d_p, cfg.d_p)  # gate, no bias
        total += film_count(cfg.d_p, cfg.stem_channels, cfg.h * cfg.w)
        total += film_count(cfg.d_p, cfg.d, n)
    if cfg.use_prompt:
        total += dense_count(4, cfg.d_p) + dense_count(cfg.d_p, cfg.d_p)
        total += dense_count(cfg.d_p, cfg.prompt_tokens * cfg.d)
    return total


def decoder_count(cfg: DecoderConfig) -> OpCount:
    t = cfg.t_dec
    total = dense_count(cfg.latent_dim, t * cfg.e)
    if cfg.kind == ATTENTION:
        total += OpCount(t * cfg.e, 0)
        for _ in range(cfg.n_blocks):
            total += attention_block_count(t, cfg.e)
    else:
        for _ in range(cfg.n_blocks):
            total += dwcg_block_count(t, cfg.e, cfg.k_dw, cfg.eta)
    total += dense_count(cfg.e, 1, applications=t)
    if cfg.film:
        total += dense_count(4, cfg.d_p) + dense_count(cfg.d_p, cfg.d_p)
        total += OpCount(cfg.d_p, cfg.d_p)
        for _ in range(cfg.n_blocks):
            total += film_count(cfg.d_p, cfg.e, t)
    return total


@dataclass(frozen=True)
class ComplexityReport:
    encoder_base: OpCount
    encoder_soft: OpCount
    encoder_soft_film: OpCount
    decoder_dwcg: OpCount
    decoder_attention: OpCount
    prompt_overhead_ratio: float
    decoder_param_ratio: float
    decoder_mac_ratio: float
    inference_ms: float | None = None


# paper-scale raster (256 elements) where the published table ratios live
REPORT_ENC = EncoderConfig(h=16, w=16, patch=1, latent_dim=256)
REPORT_DEC = DecoderConfig(h=16, w=16, latent_dim=256)
REPORT_DEC_ATT = DecoderConfig(h=16, w=16, latent_dim=256, kind=ATTENTION, e=128, heads=4)


def build_report(enc: EncoderConfig = REPORT_ENC, dec: DecoderConfig = REPORT_DEC,
                 dec_att: DecoderConfig = REPORT_DEC_ATT, measure: bool = False) -> ComplexityReport:
    from dataclasses import replace

    base = encoder_count(replace(enc, use_prompt=False, use_film=False))
    soft = encoder_count(replace(enc, use_prompt=True, use_film=False))
    full = encoder_count(replace(enc, use_prompt=True, use_film=True))
    dw = decoder_count(dec)
    att = decoder_count(dec_att)
    report = ComplexityReport(
        encoder_base=base,
        encoder_soft=soft,
        encoder_soft_film=full,
        decoder_dwcg=dw,
        decoder_attention=att,
        prompt_overhead_ratio=(full.params - base.params) / base.params,
        decoder_param_ratio=dw.params / att.params,
        decoder_mac_ratio=dw.macs / att.macs,
        inference_ms=measure_inference_ms() if measure else None,
    )
    return report


def measure_inference_ms(runs: int = 100) -> float:
    """Median single-map encode+link+decode wall time at the desk config."""
    from .encoder import SideInfo, init_encoder_params
    from .decoder import init_decoder_params
    from .psi_data import DatasetConfig, generate_dataset
    from .rate_link import LinkConfig
    from .rng import RngStream
    from .training import infer

    ecfg, dcfg = EncoderConfig(), DecoderConfig()
    ep = init_encoder_params(ecfg, 0)
    dp = init_decoder_params(dcfg, 0)
    ds = generate_dataset(DatasetConfig(count=1, seed=0))
    s = SideInfo(snr_db=10.0, chan_type="rayleigh", rate=0.5)
    link = LinkConfig(snr_db=10.0)
    rng = RngStream(0, "timing")
    times = []
    for i in range(max(runs, 1)):
        t0 = time.perf_counter()
        infer(ds.samples[0], s, ep, dp, ecfg, dcfg, (0.0, 20.0), link, rng.child(str(i)))
        times.append((time.perf_counter() - t0) * 1e3)
    return float(np.median(times))


def report_lines(rep: ComplexityReport) -> list[str]:
    """Human-readable summary used by the CLI and the timing sidecar."""
    rows = [
        ("encoder (no conditioning)", rep.encoder_base),
        ("encoder + soft prompt", rep.encoder_soft),
        ("encoder + soft prompt + film", rep.encoder_soft_film),
        ("decoder (gated depthwise)", rep.decoder_dwcg),
        ("decoder (attention baseline)", rep.decoder_attention),
    ]
    out = [f"{name:34s} params {c.params:>12,d}  macs {c.macs:>14,d}" for name, c in rows]
    out.append(f"prompt machinery overhead: {rep.prompt_overhead_ratio:.4%} of encoder params")
    out.append(f"decoder param ratio (gated/attention): {rep.decoder_param_ratio:.4%}")
    out.append(f"decoder mac ratio (gated/attention): {rep.decoder_mac_ratio:.4%}")
    if rep.inference_ms is not None:
        out.append(f"median single-map inference: {rep.inference_ms:.3f} ms")
    return out
