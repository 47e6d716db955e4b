"""Phase quantization, fading draws, generator structure, and file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psi_codec import psi_data as pd
from psi_codec.errors import (
    BadMagicError,
    BadVersionError,
    ConfigError,
    CrcMismatchError,
    DataError,
    TruncatedFileError,
    UsageError,
)
from psi_codec.rng import RngStream

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# quantization

def brute_force_quantize(theta: float, bits: int) -> float:
    """Independent oracle: enumerate all grid points, circular argmin,
    ties to the smaller index."""
    theta = theta % TWO_PI
    grid = pd.phase_grid(bits)
    diff = np.abs(theta - grid)
    circ = np.minimum(diff, TWO_PI - diff)
    return float(grid[int(np.argmin(circ))])  # argmin takes first (smaller index) on ties


def test_quantize_spec_points():
    assert pd.quantize_phase(np.pi / 3.0, 1) == 0.0
    assert pd.quantize_phase(TWO_PI - 0.01, 2) == 0.0


def test_quantize_tie_breaks_to_smaller_index():
    # B=1: pi/2 is exactly halfway between 0 and pi
    assert pd.quantize_phase(np.pi / 2.0, 1) == 0.0
    # B=2: pi/4 halfway between 0 and pi/2
    assert pd.quantize_phase(np.pi / 4.0, 2) == 0.0
    # halfway between the last grid point and the wrap target 0: smaller index
    # is the last point itself (index 2^B - 1 < wrap index 0? ties compare
    # indices of the two candidates: 0 < 2^B - 1, so 0 wins)
    b = 2
    last = pd.phase_grid(b)[-1]
    halfway = (last + TWO_PI) / 2.0
    assert pd.quantize_phase(halfway, b) == 0.0


@pytest.mark.parametrize("bits", [1, 2, 3, 4])
def test_quantize_matches_brute_force(bits):
    rng = RngStream(50 + bits, "quant-oracle")
    thetas = rng.uniform(-3 * TWO_PI, 3 * TWO_PI, (2500,))
    got = pd.quantize_phase(thetas, bits)
    want = np.array([brute_force_quantize(t, bits) for t in thetas])
    assert np.array_equal(got, want)


@given(theta=st.floats(-100.0, 100.0), bits=st.integers(1, 6))
@settings(max_examples=200, deadline=None)
def test_quantize_output_on_grid(theta, bits):
    q = pd.quantize_phase(theta, bits)
    levels = 1 << bits
    u = q * levels / TWO_PI
    assert abs(u - round(u)) < 1e-9
    assert 0.0 <= q < TWO_PI


def test_quantize_rejects_bad_bits():
    with pytest.raises(ConfigError):
        pd.quantize_phase(1.0, 0)


# ---------------------------------------------------------------------------
# fading

def test_pure_los_limit():
    draw = pd.sample_fading(pd.RICIAN, 1e9, 64, RngStream(1, "los"))
    assert np.max(np.abs(np.abs(draw.gains) - 1.0)) < 1e-4


@pytest.mark.parametrize("k", [0.0, 1.0, 3.0, 10.0])
def test_fading_unit_mean_power(k):
    ctype = pd.RAYLEIGH if k == 0.0 else pd.RICIAN
    total = 0.0
    n = 0
    for i in range(16):
        draw = pd.sample_fading(ctype, k, 62500, RngStream(2, f"pow/{k}/{i}"))
        total += float(np.sum(np.abs(draw.gains) ** 2))
        n += draw.gains.size
    assert n == 10 ** 6
    assert abs(total / n - 1.0) < 0.01


def test_fading_validation():
    with pytest.raises(ConfigError):
        pd.sample_fading("awgn", 0.0, 4, RngStream(0, "x"))
    with pytest.raises(ConfigError):
        pd.sample_fading(pd.RICIAN, -1.0, 4, RngStream(0, "x"))
    with pytest.raises(ConfigError):
        pd.ChannelDraw(pd.RAYLEIGH, 1.0, np.ones(4, dtype=complex))


# ---------------------------------------------------------------------------
# generation

def test_uniform_mode_b1_levels():
    cfg = pd.DatasetConfig(m=16, h=4, w=4, bits=1, count=1, mode="uniform", seed=3)
    s = pd.generate_psi(cfg, RngStream(3, "u"))
    assert set(np.unique(s.phases)).issubset({0.0, np.pi})


def test_aligned_all_ones_gains_is_zero_map():
    assert np.array_equal(pd.aligned_phases(np.ones(16, dtype=complex), 4), np.zeros(16))


def test_aligned_rayleigh_histogram_uniform():
    cfg = pd.DatasetConfig(m=100, h=10, w=10, bits=2, count=1000, mix_rayleigh=1.0, mode="aligned", seed=4)
    counts = np.zeros(4)
    for i in range(cfg.count):
        s = pd.generate_psi(cfg, RngStream(cfg.seed, f"data/{i}"), chan_type=pd.RAYLEIGH)
        idx = np.round(s.phases * 4 / TWO_PI).astype(int) % 4
        counts += np.bincount(idx.ravel(), minlength=4)
    freq = counts / counts.sum()
    assert np.max(np.abs(freq - 0.25)) < 0.02


def test_generated_phases_exactly_on_grid():
    cfg = pd.DatasetConfig(count=64, seed=5)
    ds = pd.generate_dataset(cfg)
    levels = 1 << cfg.bits
    for s in ds.samples:
        u = s.phases * levels / TWO_PI
        assert np.max(np.abs(u - np.round(u))) < 1e-9


def test_generation_deterministic_and_mix():
    cfg = pd.DatasetConfig(count=400, mix_rayleigh=0.5, seed=6)
    a = pd.generate_dataset(cfg)
    b = pd.generate_dataset(cfg)
    for x, y in zip(a.samples, b.samples):
        assert np.array_equal(x.phases, y.phases)
    assert a.chan_types == b.chan_types
    frac = a.chan_types.count(pd.RAYLEIGH) / len(a)
    assert 0.4 < frac < 0.6
    assert [pd.chan_type_for_index(cfg, i) for i in range(10)] == a.chan_types[:10]


def test_rician_aligned_maps_concentrate_near_los_pattern():
    # Co-phased Rician maps should cluster around the deterministic ramp.
    cfg = pd.DatasetConfig(count=200, mix_rayleigh=0.0, k_factor=3.0, seed=7)
    ds = pd.generate_dataset(cfg)
    stack = np.stack([s.phases.ravel() for s in ds.samples])
    expect = np.mod(-pd.los_phases(cfg.m), TWO_PI)
    med = np.median(stack, axis=0)
    assert np.max(np.abs(med - expect)) < 0.5  # within ~one phase-noise std


# ---------------------------------------------------------------------------
# normalization

def test_normalize_values_and_shape():
    m = pd.PSIMap(np.array([[0.0, np.pi], [np.pi, 0.0]]), bits=1)
    x = pd.normalize_psi(m)
    assert x.shape == (1, 2, 2)
    assert x[0, 0, 0] == 0.0
    assert x[0, 0, 1] == 0.5


def test_denormalize_roundtrip_exact():
    cfg = pd.DatasetConfig(count=20, seed=8)
    for s in pd.generate_dataset(cfg).samples:
        back = pd.denormalize_psi(pd.normalize_psi(s), s.bits)
        assert np.array_equal(back.phases, s.phases)


def test_nmse_scale_invariance_of_normalized_domain():
    rng = RngStream(9, "nmse-scale")
    x = rng.uniform(0.0, 1.0, (16,))
    xhat = x + 0.1 * rng.normal((16,))

    def nmse(a, b):
        return float(np.sum((a - b) ** 2) / np.sum(a ** 2))

    assert abs(nmse(x, xhat) - nmse(TWO_PI * x, TWO_PI * xhat)) < 1e-12


# ---------------------------------------------------------------------------
# file format

def _mk_samples(n, bits=4, h=4, w=4, seed=10):
    cfg = pd.DatasetConfig(m=h * w, h=h, w=w, bits=bits, count=max(n, 1), seed=seed)
    return pd.generate_dataset(cfg).samples[:n]


def test_roundtrip_100_samples(tmp_path):
    samples = _mk_samples(100)
    path = tmp_path / "d.psi"
    pd.write_dataset(path, samples)
    back = pd.read_dataset(path)
    assert len(back) == 100
    for a, b in zip(samples, back):
        assert np.array_equal(a.phases, b.phases)
        assert a.bits == b.bits


def test_empty_dataset_roundtrip(tmp_path):
    path = tmp_path / "e.psi"
    pd.write_dataset(path, [])
    assert pd.read_dataset(path) == []


def test_corrupt_payload_byte_reports_crc_with_offset(tmp_path):
    path = tmp_path / "c.psi"
    pd.write_dataset(path, _mk_samples(8))
    raw = bytearray(path.read_bytes())
    raw[40] ^= 0xFF  # inside the payload region
    path.write_bytes(bytes(raw))
    with pytest.raises(CrcMismatchError, match=r"byte offsets \[24, "):
        pd.read_dataset(path)


def test_bad_magic_and_version(tmp_path):
    path = tmp_path / "m.psi"
    pd.write_dataset(path, _mk_samples(2))
    raw = bytearray(path.read_bytes())
    bad = raw.copy()
    bad[:4] = b"XXXX"
    path.write_bytes(bytes(bad))
    with pytest.raises(BadMagicError):
        pd.read_dataset(path)
    bad = raw.copy()
    bad[4] = 9
    path.write_bytes(bytes(bad))
    with pytest.raises(BadVersionError):
        pd.read_dataset(path)


def test_truncated_and_trailing(tmp_path):
    path = tmp_path / "t.psi"
    pd.write_dataset(path, _mk_samples(4))
    raw = path.read_bytes()
    path.write_bytes(raw[:-10])
    with pytest.raises(TruncatedFileError):
        pd.read_dataset(path)
    path.write_bytes(raw + b"zz")
    with pytest.raises(DataError):
        pd.read_dataset(path)


def test_write_rejects_mismatched_samples(tmp_path):
    a = _mk_samples(1, bits=4)[0]
    b = _mk_samples(1, bits=3)[0]
    with pytest.raises(UsageError):
        pd.write_dataset(tmp_path / "x.psi", [a, b])


def test_psimap_rejects_off_grid():
    with pytest.raises(ConfigError):
        pd.PSIMap(np.array([[0.1, 0.0]]), bits=2)
