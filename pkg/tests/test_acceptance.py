"""End-to-end acceptance suite.

One test per shipped guarantee, in order; each prints a single summary line
with the measured numbers (visible with -s / -rA or on failure). Training
criteria are marked slow and reuse checkpoints cached under .cache/acceptance,
keyed by exact configuration, so re-runs are cheap while a clean clone still
trains everything from scratch.
"""

import itertools
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from psi_codec.complexity import build_report, dwcg_block_count
from psi_codec.checkpoint import (load_checkpoint, save_checkpoint,
                                  split_model_params)
from psi_codec.decoder import DecoderConfig, dwcg_block, init_decoder_params
from psi_codec.encoder import EncoderConfig, film_modulate, init_encoder_params
from psi_codec.errors import PsiCodecError
from psi_codec.harness import desk_spec, run_experiment
from psi_codec.nn import bind_params
from psi_codec.pipecheck import full_pipeline_check, op_suite_check
from psi_codec.psi_data import DatasetConfig, generate_dataset
from psi_codec.rate_link import LinkConfig, apply_mask, prefix_mask, transmit
from psi_codec.rng import RngStream
from psi_codec.tensor import Graph
from psi_codec.training import (TrainConfig, evaluate_split, split_indices,
                                train)

_REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
_CACHE = os.path.join(_REPO, ".cache", "acceptance")


def _report(num, label, ok, detail):
    print(f"criterion {num:02d} {label}: {'PASS' if ok else 'FAIL'} -- {detail}")


# ---------------------------------------------------------------------------
# 1. gradients

def test_c01_gradient_correctness():
    t0 = time.perf_counter()
    ops_err = op_suite_check()
    pipe_err = full_pipeline_check()
    elapsed = time.perf_counter() - t0
    worst = max(ops_err, pipe_err)
    ok = worst < 1e-4 and elapsed < 120.0
    _report(1, "gradient correctness", ok,
            f"op suite {ops_err:.3g}, pipeline {pipe_err:.3g}, {elapsed:.1f}s")
    assert ops_err < 1e-4
    assert pipe_err < 1e-4
    assert elapsed < 120.0


# ---------------------------------------------------------------------------
# 2. rate masking exactness

def test_c02_rate_mask_exactness():
    dims = (8, 16, 64)
    rates = (0.001, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
    worst = 0.0
    for d in dims:
        for r in rates:
            m = prefix_mask(r, d)
            assert m.k == max(int(math.floor(r * d)), 1), (d, r)
            worst = max(worst, abs(m.alpha * m.alpha * m.k - d))
        for r1, r2 in itertools.combinations(rates, 2):
            lo, hi = prefix_mask(min(r1, r2), d), prefix_mask(max(r1, r2), d)
            assert not np.any((lo.mask > 0) & ~(hi.mask > 0)), (d, r1, r2)
    ok = worst <= 1e-12
    _report(2, "rate mask exactness", ok,
            f"max |alpha^2 k - D| = {worst:.3g} over {len(dims) * len(rates)} cells, nesting holds")
    assert worst <= 1e-12


# ---------------------------------------------------------------------------
# 3. modulation neutrality and variance

def test_c03_modulation_neutrality_and_variance():
    rng = np.random.default_rng(303)
    h_np = rng.normal(size=(16, 6, 20, 20))
    g = Graph(dtype=np.float64)
    h = g.constant(h_np)
    gamma_r = g.constant(rng.normal(size=(1, 6)))
    beta_r = g.constant(rng.normal(size=(1, 6)))
    closed = film_modulate(h, gamma_r, beta_r, 0.0, channel_axis=-3)
    bit_identical = closed.value.tobytes() == h_np.tobytes()

    ones = g.constant(np.ones((1, 6)))
    zeros = g.constant(np.zeros((1, 6)))
    doubled = film_modulate(h, ones, zeros, 1.0, channel_axis=-3)
    ratios = [np.var(doubled.value[:, c]) / np.var(h_np[:, c]) for c in range(6)]
    worst = max(abs(rat - 4.0) for rat in ratios)
    ok = bit_identical and worst <= 1e-10
    _report(3, "modulation neutrality/variance", ok,
            f"closed gate bit-identical={bit_identical}, max |var ratio - 4| = {worst:.3g}")
    assert bit_identical
    assert worst <= 1e-10


# ---------------------------------------------------------------------------
# 4. residual identity and MAC linearity

def test_c04_residual_identity_and_mac_linearity():
    cfg = DecoderConfig()
    params = init_decoder_params(cfg, seed=404)
    g = Graph(dtype=np.float64)
    p = bind_params(g, params, trainable=False)
    x_np = np.random.default_rng(404).normal(size=(4, cfg.t_dec, cfg.e))
    out = dwcg_block(g.constant(x_np), p, "dec.block0", cfg.eta)
    dev = float(np.max(np.abs(out.value - x_np)))

    linear = all(
        dwcg_block_count(2 * t, e, k, eta).macs == 2 * dwcg_block_count(t, e, k, eta).macs
        for t, e, k, eta in ((16, 32, 7, 2), (64, 16, 3, 4), (256, 128, 7, 2)))
    ok = dev <= 1e-12 and linear
    _report(4, "residual identity / MAC linearity", ok,
            f"max |block(x) - x| = {dev:.3g}, T-linearity exact = {linear}")
    assert dev <= 1e-12
    assert linear


# ---------------------------------------------------------------------------
# 5. link calibration

def test_c05_link_calibration():
    d, rate = 64, 0.5
    m = prefix_mask(rate, d)
    n_rows = 1_000_000 // m.k  # one million active noise draws per target
    z_r = apply_mask(np.random.default_rng(505).normal(size=(n_rows, d)), m)
    worst = 0.0
    masked_clean = True
    for target in (0.0, 10.0, 20.0):
        out = transmit(z_r, m, LinkConfig(snr_db=target), RngStream(505, f"cal/{target}"))
        masked_clean &= bool(np.all(out[:, m.k:] == 0.0))
        noise = out[:, :m.k] - z_r[:, :m.k]
        measured = 10.0 * np.log10(np.mean(z_r[:, :m.k] ** 2) / np.mean(noise ** 2))
        worst = max(worst, abs(measured - target))
    ok = worst <= 0.2 and masked_clean
    _report(5, "link calibration", ok,
            f"max |measured - target| = {worst:.4f} dB over 1e6 draws, masked exactly zero = {masked_clean}")
    assert worst <= 0.2
    assert masked_clean


# ---------------------------------------------------------------------------
# 6. overfit oracle

def test_c06_overfit_oracle():
    ds = generate_dataset(DatasetConfig(count=1, seed=606))
    ecfg, dcfg = EncoderConfig(), DecoderConfig()
    enc = init_encoder_params(ecfg, seed=606)
    dec = init_decoder_params(dcfg, seed=606)
    cfg = TrainConfig(epochs=500, batch_size=1, lr0=1e-2, seed=606,
                      rate_mode="fixed", rate_fixed=0.5, noiseless=True, val_frac=0.0)
    t0 = time.perf_counter()
    res = train(ds, cfg, ecfg, dcfg, enc, dec)
    elapsed = time.perf_counter() - t0
    final_db = res.log[-1].train_nmse_db
    ok = final_db < -30.0 and elapsed < 60.0
    _report(6, "overfit oracle", ok, f"{final_db:.1f} dB after 500 steps in {elapsed:.1f}s")
    assert not res.diverged
    assert final_db < -30.0
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# 7. desk-scale learning

_C7_TEXT = "acceptance-c7 n16 samples8192 seed7 epochs2000 batch128 lr1e-3 snr5-20 r0.5"


@pytest.mark.slow
def test_c07_desk_scale_learning():
    ds = generate_dataset(DatasetConfig(count=8192, seed=7))
    ecfg, dcfg = EncoderConfig(), DecoderConfig()
    cfg = TrainConfig(epochs=2000, batch_size=128, lr0=1e-3, seed=7,
                      snr_lo_db=5.0, snr_hi_db=20.0, rate_mode="fixed", rate_fixed=0.5)

    ckpt_path = os.path.join(_CACHE, "c7.ckpt")
    cached = False
    val_db = None
    elapsed = None
    if os.path.exists(ckpt_path):
        try:
            ckpt = load_checkpoint(ckpt_path)
            if ckpt.config_text == _C7_TEXT:
                enc, dec = split_model_params(ckpt.params)
                cached = True
        except PsiCodecError:
            cached = False
    if not cached:
        enc = init_encoder_params(ecfg, seed=7)
        dec = init_decoder_params(dcfg, seed=7)
        t0 = time.perf_counter()
        res = train(ds, cfg, ecfg, dcfg, enc, dec, log_every=200)
        elapsed = time.perf_counter() - t0
        assert not res.diverged
        enc, dec = res.enc_params, res.dec_params
        os.makedirs(_CACHE, exist_ok=True)
        save_checkpoint(ckpt_path, _C7_TEXT, {**enc, **dec}, res.opt_state,
                        seed=7, epoch=res.epochs_run)
        val_db = res.log[-1].val_nmse_db

    if val_db is None:
        x_all = ds.normalized_array()
        types = np.asarray(ds.chan_types)
        _, val_idx = split_indices(len(ds.samples), cfg.val_frac, cfg.seed)
        val_db = evaluate_split(x_all, types, val_idx, cfg, ecfg, dcfg, enc, dec,
                                epoch=cfg.epochs - 1)

    runtime = "cached model" if elapsed is None else f"{elapsed / 60:.0f} min (target 30 min)"
    ok = val_db <= -10.0 and val_db < 0.0
    _report(7, "desk-scale learning", ok, f"held-out {val_db:.2f} dB, {runtime}")
    assert val_db <= -10.0
    assert val_db < 0.0  # strictly better than predicting zeros


# ---------------------------------------------------------------------------
# 8. one variable-rate model vs per-rate specialists

def _rows_by(rows, **match):
    out = []
    for r in rows:
        if all(getattr(r, k) == v for k, v in match.items()):
            out.append(r)
    return out


def _mean_db(rows):
    return 10.0 * np.log10(np.mean([r.nmse_linear for r in rows]))


@pytest.mark.slow
def test_c08_variable_rate_trend():
    work = os.path.join(_CACHE, "variable_rate")
    spec = desk_spec("variable_rate", out_dir=os.path.join(work, "results"))
    rows, _ = run_experiment(spec, workdir=work, timestamp="acceptance")

    gaps = {}
    for rate in spec.rate_list:
        mixed = _rows_by(rows, variant="mixed_prompt", rate=rate)
        fixed = _rows_by(rows, variant=f"fixed_r{rate:g}", rate=rate)
        assert mixed and fixed, rate
        gaps[rate] = _mean_db(mixed) - _mean_db(fixed)
    worst_gap = max(gaps.values())

    medians = []
    for rate in spec.rate_list:
        per_seed = [np.mean([r.nmse_linear for r in _rows_by(rows, variant="mixed_prompt",
                                                             rate=rate, seed=s)])
                    for s in spec.seeds]
        medians.append(float(np.median(per_seed)))
    nonincreasing = all(b <= a for a, b in zip(medians, medians[1:]))

    ok = worst_gap <= 1.0 and nonincreasing
    med_txt = ", ".join(f"{10 * np.log10(v):.1f}" for v in medians)
    _report(8, "variable-rate trend", ok,
            f"worst gap to specialist {worst_gap:+.2f} dB over {len(spec.seeds)} seeds; "
            f"median dB by rate [{med_txt}] nonincreasing={nonincreasing}")
    assert worst_gap <= 1.0
    assert nonincreasing


# ---------------------------------------------------------------------------
# 9. conditioning ablation ordering

@pytest.mark.slow
def test_c09_prompt_benefit_ordering():
    work = os.path.join(_CACHE, "ablation_prompt")
    spec = desk_spec("ablation_prompt", out_dir=os.path.join(work, "results"))
    rows, _ = run_experiment(spec, workdir=work, timestamp="acceptance")

    mean_db = {name: _mean_db(_rows_by(rows, variant=name))
               for name in ("soft_film", "soft_only", "noprompt", "joint")}
    ok = mean_db["soft_film"] <= mean_db["soft_only"] <= mean_db["noprompt"]
    _report(9, "prompt benefit ordering", ok,
            "mean dB over {} seeds: soft_film {soft_film:.2f} <= soft_only {soft_only:.2f} "
            "<= noprompt {noprompt:.2f} (joint {joint:.2f})".format(len(spec.seeds), **mean_db))
    assert mean_db["soft_film"] <= mean_db["soft_only"]
    assert mean_db["soft_only"] <= mean_db["noprompt"]


# ---------------------------------------------------------------------------
# 10. complexity ratios

def test_c10_complexity_ratios():
    rep = build_report()
    prompt_pct = rep.prompt_overhead_ratio * 100.0
    param_pct = rep.decoder_param_ratio * 100.0
    mac_pct = rep.decoder_mac_ratio * 100.0
    ok = prompt_pct <= 6.0 and param_pct <= 25.0 and mac_pct <= 25.0
    _report(10, "complexity ratios", ok,
            f"prompt overhead {prompt_pct:.2f}% (<=6), decoder params {param_pct:.2f}% (<=25), "
            f"decoder MACs {mac_pct:.2f}% (<=25) at 256 tokens")
    assert prompt_pct <= 6.0
    assert param_pct <= 25.0
    assert mac_pct <= 25.0


# ---------------------------------------------------------------------------
# 11. CLI determinism

_MICRO_INI = """
[experiment]
seeds = 0
snr_list = 0 10
rate_list = 0.3 0.7
trials = 8
samples = 96
epochs = 3
batch_size = 32
"""


def _strip_timestamp(text: str) -> str:
    return "\n".join(ln for ln in text.split("\n") if not ln.startswith("# timestamp"))


@pytest.mark.slow
def test_c11_cli_determinism(tmp_path):
    cfg = tmp_path / "micro.ini"
    cfg.write_text(_MICRO_INI)
    csvs = []
    for tag in ("a", "b"):
        out = tmp_path / f"run_{tag}"
        r = subprocess.run([sys.executable, "-m", "psi_codec.cli", "--config", str(cfg),
                            "--seed", "0", "--out", str(out), "experiment", "cross_snr"],
                           capture_output=True, text=True, timeout=1200)
        assert r.returncode == 0, r.stderr
        found = [p for p in os.listdir(out) if p.endswith(".csv")]
        assert len(found) == 1
        csvs.append((out / found[0]).read_text())
    identical = _strip_timestamp(csvs[0]) == _strip_timestamp(csvs[1])
    _report(11, "CLI determinism", identical,
            f"two fresh runs, {len(csvs[0].splitlines())} CSV lines, byte-identical modulo timestamp")
    assert identical
