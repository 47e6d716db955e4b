"""Variable-rate prefix masking and the noisy control link.

The rate mechanism keeps the first k = max(floor(r*D), 1) latent coordinates
and rescales them by alpha = sqrt(D/k) so total latent energy is independent
of the rate. Lower rates reuse a prefix of higher rates, so one model serves
every rate. The link applies a per-coordinate gain and additive white
Gaussian noise to the transmitted (active) coordinates only; coordinates
that were masked off are never sent and stay exactly zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .rng import RngStream
from . import tensor as tz
from .tensor import Tensor

HC_MODES = ("identity", "scalar_gain", "diag_rayleigh", "diag_rician")


class ZeroEnergyWarning(UserWarning):
    """Latent carries no energy; noise scale degenerates to zero."""


@dataclass(frozen=True)
class RateMask:
    d: int
    r: float
    k: int
    alpha: float
    mask: np.ndarray  # [D] floats, ones on the active prefix

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=np.float64))
        if not 1 <= self.k <= self.d:
            raise ConfigError(f"RateMask: k={self.k} outside [1, {self.d}]")


@dataclass(frozen=True)
class LinkConfig:
    snr_db: float
    hc_mode: str = "identity"
    gain: float = 1.0          # scalar_gain mode
    k_factor: float = 3.0      # diag_rician mode
    seed: int = 0

    def __post_init__(self):
        if self.hc_mode not in HC_MODES:
            raise ConfigError(f"LinkConfig: unknown hc_mode {self.hc_mode!r}")
        if not math.isfinite(self.snr_db):
            raise ConfigError(f"LinkConfig: snr_db must be finite, got {self.snr_db}")
        if self.k_factor < 0:
            raise ConfigError("LinkConfig: k_factor must be >= 0")


def prefix_mask(r: float, d: int) -> RateMask:
    if not 0.0 < r <= 1.0:
        raise ConfigError(f"prefix_mask: rate must be in (0, 1], got {r}")
    if d < 1:
        raise ConfigError(f"prefix_mask: latent dim must be >= 1, got {d}")
    k = max(int(math.floor(r * d)), 1)
    alpha = math.sqrt(d / k)
    mask = np.zeros(d, dtype=np.float64)
    mask[:k] = 1.0
    return RateMask(d=d, r=r, k=k, alpha=alpha, mask=mask)


def apply_mask(z, m: RateMask):
    """z_r = alpha * (mask (*) z); accepts [.., D] arrays or graph tensors."""
    if isinstance(z, Tensor):
        if z.shape[-1] != m.d:
            raise ShapeError(f"apply_mask: latent width {z.shape[-1]} != mask dim {m.d}")
        scaled = z.graph.constant(m.alpha * m.mask)
        return z * scaled
    z = np.asarray(z)
    if z.shape[-1] != m.d:
        raise ShapeError(f"apply_mask: latent width {z.shape[-1]} != mask dim {m.d}")
    return z * (m.alpha * m.mask).astype(z.dtype, copy=False)


def noise_sigma_from_snr(z_r: np.ndarray, k: int, snr_db: float):
    """Per-sample noise scale: sigma^2 = mean active power / 10^(snr/10).

    z_r: [.., D]; active prefix is the first k coordinates. Returns a scalar
    for 1-D input, else an array over the leading axes.
    """
    if k < 1:
        raise ConfigError(f"noise_sigma_from_snr: k must be >= 1, got {k}")
    z_r = np.asarray(z_r, dtype=np.float64)
    power = np.sum(z_r[..., :k] ** 2, axis=-1) / k
    if np.any(power == 0.0):
        warnings.warn("zero-energy latent; noise scale set to 0", ZeroEnergyWarning, stacklevel=2)
    sigma = np.sqrt(power * 10.0 ** (-snr_db / 10.0))
    return float(sigma) if sigma.ndim == 0 else sigma


def _draw_hc(cfg: LinkConfig, k: int, lead_shape: tuple, rng: RngStream | None) -> np.ndarray | float:
    if cfg.hc_mode == "identity":
        return 1.0
    if cfg.hc_mode == "scalar_gain":
        return float(cfg.gain)
    if rng is None:
        raise ConfigError(f"transmit: hc_mode {cfg.hc_mode!r} needs an rng")
    cn = rng.complex_normal(lead_shape + (k,))
    if cfg.hc_mode == "diag_rayleigh":
        return np.abs(cn)
    los = math.sqrt(cfg.k_factor / (cfg.k_factor + 1.0))
    return np.abs(los + math.sqrt(1.0 / (cfg.k_factor + 1.0)) * cn)


def transmit(z_r: np.ndarray, m: RateMask, cfg: LinkConfig, rng: RngStream | None = None) -> np.ndarray:
    """Push masked latents through the link: active prefix gets H_c and AWGN.

    z_r: [.., D]. Masked coordinates stay exactly zero.
    """
    z_r = np.asarray(z_r, dtype=np.float64)
    if z_r.shape[-1] != m.d:
        raise ShapeError(f"transmit: latent width {z_r.shape[-1]} != mask dim {m.d}")
    k = m.k
    out = np.zeros_like(z_r)
    hc = _draw_hc(cfg, k, z_r.shape[:-1], rng)
    sigma = noise_sigma_from_snr(z_r, k, cfg.snr_db)
    if rng is None:
        if cfg.hc_mode in ("diag_rayleigh", "diag_rician"):
            raise ConfigError(f"transmit: hc_mode {cfg.hc_mode!r} needs an rng")
        noise = 0.0
    else:
        noise = np.asarray(sigma)[..., None] * rng.normal(z_r.shape[:-1] + (k,))
    out[..., :k] = hc * z_r[..., :k] + noise
    return out


def transmit_graph(z_r: Tensor, m: RateMask, cfg: LinkConfig, rng: RngStream | None = None) -> Tensor:
    """Graph version for training: gain and noise enter as constants.

    The noise scale is computed from the current latent values and detached,
    so gradients flow through the signal path only.
    """
    g = z_r.graph
    if z_r.shape[-1] != m.d:
        raise ShapeError(f"transmit_graph: latent width {z_r.shape[-1]} != mask dim {m.d}")
    k = m.k
    keep = np.zeros(m.d)
    keep[:k] = 1.0
    hc = _draw_hc(cfg, k, z_r.shape[:-1], rng)
    hc_full = np.ones(z_r.shape) * keep
    hc_full[..., :k] = hc
    sigma = noise_sigma_from_snr(z_r.value, k, cfg.snr_db)
    w_full = np.zeros(z_r.shape)
    if rng is not None:
        w_full[..., :k] = np.asarray(sigma)[..., None] * rng.normal(z_r.shape[:-1] + (k,))
    return z_r * g.constant(hc_full) + g.constant(w_full)
