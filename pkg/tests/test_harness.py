import os

import pytest

from psi_codec.errors import ConfigError
from psi_codec.harness import (EXPERIMENTS, ExperimentSpec, desk_spec, get_model,
                               model_path, paper_spec, run_experiment,
                               spec_from_mapping, spec_hash, spec_text,
                               variants_for, worker_count)
from psi_codec.results import read_results

_MICRO = dict(snr_list=(0.0, 10.0), rate_list=(0.5,), n_list=(16,), trials=4,
              seeds=(0,), samples=64, epochs=2, batch_size=32)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec(experiment="mystery")
    with pytest.raises(ConfigError):
        ExperimentSpec(experiment="cross_snr", snr_list=())
    with pytest.raises(ConfigError):
        ExperimentSpec(experiment="cross_snr", trials=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(experiment="scalability", n_list=(15,))  # not a square


def test_spec_text_skips_output_location():
    a = ExperimentSpec(experiment="cross_snr", out_dir="here", **_MICRO)
    b = ExperimentSpec(experiment="cross_snr", out_dir="there", **_MICRO)
    assert spec_text(a) == spec_text(b)
    assert spec_hash(a) == spec_hash(b)
    c = ExperimentSpec(experiment="cross_snr", **{**_MICRO, "trials": 8})
    assert spec_hash(c) != spec_hash(a)


def test_worker_count_env_override(monkeypatch):
    monkeypatch.setenv("PSI_CODEC_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("PSI_CODEC_THREADS", "zero")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.delenv("PSI_CODEC_THREADS")
    assert worker_count() >= 1


def test_variant_sets_per_experiment():
    spec = ExperimentSpec(experiment="cross_snr", **_MICRO)
    names = [v.name for v in variants_for(spec, seed=0)]
    assert names == ["prompt", "noprompt", "fixed_rayleigh"]

    spec = ExperimentSpec(experiment="variable_rate", **_MICRO)
    names = [v.name for v in variants_for(spec, seed=0)]
    assert names[:2] == ["mixed_prompt", "mixed_noprompt"]
    assert "fixed_r0.5" in names

    spec = ExperimentSpec(experiment="scalability", **_MICRO)
    assert [v.name for v in variants_for(spec, seed=0)] == ["n16"]

    spec = ExperimentSpec(experiment="ablation_prompt", **_MICRO)
    names = [v.name for v in variants_for(spec, seed=0)]
    assert names == ["soft_film", "soft_only", "joint", "noprompt"]

    spec = ExperimentSpec(experiment="ablation_decoder", **_MICRO)
    assert [v.name for v in variants_for(spec, seed=0)] == ["dwcg", "attention"]


def test_variant_wiring_details():
    spec = ExperimentSpec(experiment="cross_snr", **_MICRO)
    by_name = {v.name: v for v in variants_for(spec, seed=0)}
    assert by_name["prompt"].encoder.use_prompt and by_name["prompt"].encoder.use_film
    assert not by_name["noprompt"].encoder.use_prompt
    assert by_name["fixed_rayleigh"].train_cfg.mix_rayleigh == 1.0
    # the nonadaptive reference trains at a single SNR on a single channel family
    assert by_name["fixed_rayleigh"].train_cfg.snr_lo_db == by_name["fixed_rayleigh"].train_cfg.snr_hi_db == 15.0
    spec_vr = ExperimentSpec(experiment="variable_rate", **_MICRO)
    vr = {v.name: v for v in variants_for(spec_vr, seed=0)}
    assert vr["mixed_prompt"].train_cfg.rate_mode == "uniform"
    assert vr["fixed_r0.5"].train_cfg.rate_mode == "fixed"
    spec_ab = ExperimentSpec(experiment="ablation_prompt", **_MICRO)
    ab = {v.name: v for v in variants_for(spec_ab, seed=0)}
    assert ab["joint"].decoder.film
    assert not ab["soft_film"].decoder.film
    assert ab["soft_only"].encoder.use_prompt and not ab["soft_only"].encoder.use_film
    # every conditioning variant trains mixed-rate so the context stays informative
    assert all(v.train_cfg.rate_mode == "uniform" for v in ab.values())
    spec_ad = ExperimentSpec(experiment="ablation_decoder", **_MICRO)
    ad = {v.name: v for v in variants_for(spec_ad, seed=0)}
    assert all(v.train_cfg.rate_mode == "uniform" and v.encoder.use_prompt for v in ad.values())


def test_model_cache_roundtrip(tmp_path):
    spec = ExperimentSpec(experiment="cross_snr", **_MICRO)
    v = variants_for(spec, seed=0)[0]
    path = model_path(str(tmp_path), "cross_snr", v)
    assert not os.path.exists(path)
    get_model(str(tmp_path), spec, v)
    assert os.path.exists(path)
    stamp = os.path.getmtime(path)
    get_model(str(tmp_path), spec, v)  # second call loads, does not retrain
    assert os.path.getmtime(path) == stamp


def test_missing_model_without_training_is_actionable(tmp_path):
    spec = ExperimentSpec(experiment="cross_snr", train_if_missing=False, **_MICRO)
    v = variants_for(spec, seed=0)[0]
    with pytest.raises(ConfigError) as err:
        get_model(str(tmp_path), spec, v)
    assert "train" in str(err.value).lower()


def test_micro_experiment_end_to_end(tmp_path):
    spec = ExperimentSpec(experiment="cross_snr", out_dir=str(tmp_path / "res"), **_MICRO)
    rows, csv_path = run_experiment(spec, workdir=str(tmp_path), timestamp="t0")
    assert os.path.exists(csv_path)
    back = read_results(csv_path)
    # file stores 10 significant digits; identity up to that precision
    assert len(back) == len(rows)
    for a, b in zip(back, rows):
        assert (a.experiment, a.variant, a.seed, a.chan_type, a.trials) == \
               (b.experiment, b.variant, b.seed, b.chan_type, b.trials)
        assert a.nmse_linear == pytest.approx(b.nmse_linear, rel=1e-9)
        assert a.nmse_db == pytest.approx(b.nmse_db, rel=1e-9)
    # grid coverage: 3 variants x (2 snr + 1 noiseless sanity) x 2 channels
    assert len(rows) == 18
    assert {r.chan_type for r in rows} == {"rayleigh", "rician"}
    assert {r.snr_db for r in rows} == {0.0, 10.0, 300.0}
    assert all(r.trials == 4 for r in rows)
    assert sorted(rows, key=lambda r: (r.variant, r.seed, r.n_elements, r.chan_type, r.snr_db, r.rate)) == rows
    svgs = [f for f in os.listdir(tmp_path / "res") if f.endswith(".svg")]
    assert svgs


def test_micro_ablation_rate_sweep(tmp_path):
    spec = ExperimentSpec(experiment="ablation_prompt", out_dir=str(tmp_path / "res"),
                          **{**_MICRO, "rate_list": (0.3, 0.7)})
    rows, _ = run_experiment(spec, workdir=str(tmp_path), timestamp="t0")
    # 4 variants x 2 channels x 2 rates, each channel at its representative snr
    assert len(rows) == 16
    assert {r.rate for r in rows} == {0.3, 0.7}
    assert {(r.chan_type, r.snr_db) for r in rows} == {("rayleigh", 20.0), ("rician", 15.0)}


def test_micro_variable_rate_eval_snrs(tmp_path):
    spec = ExperimentSpec(experiment="variable_rate", out_dir=str(tmp_path / "res"), **_MICRO)
    rows, _ = run_experiment(spec, workdir=str(tmp_path), timestamp="t0")
    # each channel family is scored at its own representative snr
    assert {(r.chan_type, r.snr_db) for r in rows} == {("rayleigh", 15.0), ("rician", 10.0)}


def test_preset_budgets_scale_sanely():
    d = desk_spec("cross_snr")
    p = paper_spec("cross_snr")
    assert p.samples > d.samples * 10
    assert p.epochs > d.epochs * 10
    assert d.scale == "desk" and p.scale == "paper"


def test_spec_from_mapping_parses_experiment_section():
    mapping = {"snr_list": "0 10", "rate_list": "0.5", "n_list": "16",
               "trials": "8", "samples": "64", "epochs": "2"}
    spec = spec_from_mapping("cross_snr", mapping, out_dir="r", seed=3)
    assert spec.snr_list == (0.0, 10.0)
    assert spec.n_list == (16,)
    assert spec.trials == 8
    assert spec.seeds == (3,)
    with pytest.raises(ConfigError):
        spec_from_mapping("cross_snr", {"bogus": "1"}, out_dir="r", seed=0)
