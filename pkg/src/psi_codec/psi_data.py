"""Synthetic phase-shift-map generation, quantization, and persistence.

A PSI map is an H x W raster of per-element phase shifts, each restricted to
the B-bit grid Q = {0, 2pi/2^B, ..., (2^B-1) * 2pi/2^B}. Two generator modes
exist: "aligned" co-phases a sampled cascaded fading channel (the canonical
IRS configuration rule, so maps inherit channel-type-dependent structure)
and "uniform" draws grid indices independently (ablation data).
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    BadVersionError,
    ConfigError,
    CrcMismatchError,
    DataError,
    TruncatedFileError,
    UsageError,
)
from .rng import RngStream

TWO_PI = 2.0 * np.pi

RAYLEIGH = "rayleigh"
RICIAN = "rician"
CHAN_TYPES = (RAYLEIGH, RICIAN)

_MAGIC = b"PSI1"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")  # magic, version, count, H, W, B


def quantize_phase(theta, bits: int):
    """Snap phases to the nearest B-bit grid point under circular distance.

    Input is reduced mod 2pi first; exact halfway cases resolve to the
    smaller grid index. Scalar in, scalar out; arrays pass through
    elementwise.
    """
    if bits < 1:
        raise ConfigError(f"quantize_phase: bits must be >= 1, got {bits}")
    theta = np.asarray(theta, dtype=np.float64)
    levels = 1 << bits
    u = np.mod(theta, TWO_PI) * (levels / TWO_PI)
    # ceil(u - 0.5) rounds half-down, sending interior ties to the smaller
    # index; at the wrap seam (u >= levels - 0.5) the tied pair is
    # {levels - 1, 0} and the smaller index is 0.
    idx = np.where(u >= levels - 0.5, 0, np.ceil(u - 0.5)).astype(np.int64)
    out = idx * (TWO_PI / levels)
    return out if out.ndim else float(out)


def phase_grid(bits: int) -> np.ndarray:
    levels = 1 << bits
    return np.arange(levels, dtype=np.float64) * (TWO_PI / levels)


@dataclass(frozen=True)
class PSIMap:
    """One rasterized phase-shift map with all entries on the B-bit grid."""

    phases: np.ndarray  # [H, W] float64
    bits: int

    def __post_init__(self):
        phases = np.ascontiguousarray(self.phases, dtype=np.float64)
        if phases.ndim != 2:
            raise ConfigError(f"PSIMap: phases must be 2-D, got rank {phases.ndim}")
        if self.bits < 1:
            raise ConfigError(f"PSIMap: bits must be >= 1, got {self.bits}")
        levels = 1 << self.bits
        resid = np.abs(phases * (levels / TWO_PI) - np.round(phases * (levels / TWO_PI)))
        if resid.size and float(resid.max()) > 1e-9:
            raise ConfigError("PSIMap: phases are not on the quantization grid")
        object.__setattr__(self, "phases", phases)

    @property
    def h(self) -> int:
        return self.phases.shape[0]

    @property
    def w(self) -> int:
        return self.phases.shape[1]

    @property
    def m(self) -> int:
        return self.phases.size


@dataclass(frozen=True)
class ChannelDraw:
    chan_type: str
    k_factor: float
    gains: np.ndarray  # complex [M]

    def __post_init__(self):
        if self.chan_type not in CHAN_TYPES:
            raise ConfigError(f"unknown channel type {self.chan_type!r}")
        if self.chan_type == RAYLEIGH and self.k_factor != 0.0:
            raise ConfigError("Rayleigh draws must have k_factor == 0")


@dataclass(frozen=True)
class DatasetConfig:
    m: int = 16
    h: int = 4
    w: int = 4
    bits: int = 4
    count: int = 8192
    mix_rayleigh: float = 0.5  # fraction of Rayleigh samples; rest Rician
    k_factor: float = 3.0
    mode: str = "aligned"
    seed: int = 0

    def __post_init__(self):
        if self.h * self.w != self.m:
            raise ConfigError(f"DatasetConfig: H*W = {self.h * self.w} != M = {self.m}")
        if self.count < 1:
            raise ConfigError("DatasetConfig: count must be >= 1")
        if self.mode not in ("aligned", "uniform"):
            raise ConfigError(f"DatasetConfig: unknown mode {self.mode!r}")
        if not 0.0 <= self.mix_rayleigh <= 1.0:
            raise ConfigError("DatasetConfig: mix_rayleigh must be in [0, 1]")
        if self.k_factor < 0:
            raise ConfigError("DatasetConfig: k_factor must be >= 0")
        if self.bits < 1:
            raise ConfigError("DatasetConfig: bits must be >= 1")


def los_phases(m: int) -> np.ndarray:
    """Deterministic line-of-sight phase ramp for the Rician component.

    Spans [pi/2, 3pi/2] so that co-phased maps sit away from the 0/2pi wrap
    point; per-element phases stay distinct, giving a spatial pattern.
    """
    if m == 1:
        return np.array([np.pi])
    return np.pi / 2.0 + np.pi * np.arange(m) / (m - 1)


def sample_fading(chan_type: str, k_factor: float, m: int, rng: RngStream) -> ChannelDraw:
    """Draw cascaded per-element complex gains with unit mean power."""
    if chan_type not in CHAN_TYPES:
        raise ConfigError(f"unknown channel type {chan_type!r}")
    if k_factor < 0:
        raise ConfigError(f"k_factor must be >= 0, got {k_factor}")
    scatter = rng.complex_normal((m,))
    if chan_type == RAYLEIGH:
        return ChannelDraw(RAYLEIGH, 0.0, scatter)
    los = np.exp(1j * los_phases(m))
    k = float(k_factor)
    gains = np.sqrt(k / (k + 1.0)) * los + np.sqrt(1.0 / (k + 1.0)) * scatter
    return ChannelDraw(RICIAN, k, gains)


def chan_type_for_index(cfg: DatasetConfig, index: int) -> str:
    """Channel type of sample `index`; recomputable from the config alone."""
    draw = RngStream(cfg.seed, f"data/{index}/type").uniform(0.0, 1.0)
    return RAYLEIGH if float(draw) < cfg.mix_rayleigh else RICIAN


def aligned_phases(gains: np.ndarray, bits: int) -> np.ndarray:
    """Quantized co-phasing rule: theta_m = quantize(mod(-arg(g_m), 2pi))."""
    return np.asarray(quantize_phase(np.mod(-np.angle(gains), TWO_PI), bits))


def generate_psi(cfg: DatasetConfig, rng: RngStream, chan_type: str | None = None) -> PSIMap:
    """Generate one PSI map.

    Aligned mode: theta_m = quantize(mod(-arg(gain_m), 2pi)), the phase that
    co-phases the cascaded channel. Uniform mode: independent grid indices.
    """
    if cfg.mode == "uniform":
        levels = 1 << cfg.bits
        idx = rng.integers(0, levels, (cfg.h, cfg.w))
        phases = idx.astype(np.float64) * (TWO_PI / levels)
        return PSIMap(phases, cfg.bits)
    if chan_type is None:
        chan_type = RAYLEIGH if float(rng.uniform(0.0, 1.0)) < cfg.mix_rayleigh else RICIAN
    k = cfg.k_factor if chan_type == RICIAN else 0.0
    draw = sample_fading(chan_type, k, cfg.m, rng)
    theta = aligned_phases(draw.gains, cfg.bits)
    return PSIMap(theta.reshape(cfg.h, cfg.w), cfg.bits)


@dataclass
class Dataset:
    """In-memory dataset: maps plus per-sample channel-type labels."""

    samples: list[PSIMap]
    chan_types: list[str]
    cfg: DatasetConfig

    def __len__(self) -> int:
        return len(self.samples)

    def normalized_array(self) -> np.ndarray:
        """Stack of normalized maps, shape [n, 1, H, W] float64."""
        return np.stack([normalize_psi(s) for s in self.samples])


def generate_dataset(cfg: DatasetConfig) -> Dataset:
    """Generate cfg.count samples; sample i is fully determined by (seed, i)."""
    samples = []
    types = []
    for i in range(cfg.count):
        ctype = chan_type_for_index(cfg, i)
        rng = RngStream(cfg.seed, f"data/{i}")
        samples.append(generate_psi(cfg, rng, chan_type=ctype))
        types.append(ctype)
    return Dataset(samples, types, cfg)


def normalize_psi(t: PSIMap) -> np.ndarray:
    """Map phases to x = theta / 2pi in [0, 1); shape [1, H, W]."""
    return (t.phases / TWO_PI)[None, :, :]


def denormalize_psi(x: np.ndarray, bits: int) -> PSIMap:
    """Inverse of normalize_psi with a grid snap.

    The snap absorbs the one-ulp rounding of the divide/multiply round trip;
    physical phases live on the grid, so this is lossless for valid inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        if x.shape[0] != 1:
            raise ConfigError(f"denormalize_psi: expected leading channel 1, got {x.shape[0]}")
        x = x[0]
    phases = quantize_phase(x * TWO_PI, bits)
    return PSIMap(np.asarray(phases), bits)


# ---------------------------------------------------------------------------
# dataset file I/O
#
# Layout (little-endian): magic "PSI1"; u32 version = 1; u32 count; u32 H;
# u32 W; u32 B; count payloads of H*W float32 phases, row-major; trailing
# u32 CRC32 over the payload region.

def write_dataset(path, samples: list[PSIMap]) -> None:
    if samples:
        h, w, bits = samples[0].h, samples[0].w, samples[0].bits
        for s in samples:
            if (s.h, s.w, s.bits) != (h, w, bits):
                raise UsageError("write_dataset: samples disagree on (H, W, B)")
    else:
        h = w = bits = 0
    payload = io.BytesIO()
    for s in samples:
        payload.write(s.phases.astype("<f4").tobytes(order="C"))
    payload_bytes = payload.getvalue()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, len(samples), h, w, bits))
        fh.write(payload_bytes)
        fh.write(struct.pack("<I", zlib.crc32(payload_bytes) & 0xFFFFFFFF))


def read_dataset(path) -> list[PSIMap]:
    """Read a dataset file; phases are snapped back onto the f64 grid."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than header ({len(raw)} bytes)")
    magic, version, count, h, w, bits = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if version != _VERSION:
        raise BadVersionError(f"{path}: unsupported version {version}, expected {_VERSION}")
    payload_size = count * h * w * 4
    expected = _HEADER.size + payload_size + 4
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(raw)}")
    if len(raw) > expected:
        raise DataError(f"{path}: {len(raw) - expected} unexpected trailing bytes")
    payload = raw[_HEADER.size : _HEADER.size + payload_size]
    stored_crc = struct.unpack_from("<I", raw, _HEADER.size + payload_size)[0]
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CrcMismatchError(
            f"{path}: CRC mismatch over payload region at byte offsets "
            f"[{_HEADER.size}, {_HEADER.size + payload_size}): "
            f"stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    if count == 0:
        return []
    arr = np.frombuffer(payload, dtype="<f4").reshape(count, h, w).astype(np.float64)
    return [PSIMap(quantize_phase(arr[i], bits), bits) for i in range(count)]
