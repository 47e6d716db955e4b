"""Experiment orchestration: train-if-missing model pools, Monte-Carlo
evaluation grids, and deterministic result emission.

Five experiment ids are understood:

  cross_snr        three models (conditioned, unconditioned, single-channel)
                   evaluated across an SNR grid on both channel families
  variable_rate    one mixed-rate conditioned model against per-rate fixed
                   models and a mixed-rate unconditioned baseline
  scalability      per-element-count models on square rasters
  ablation_prompt  conditioning variants (soft+film, soft, joint, none), all
                   trained mixed-rate
  ablation_decoder gated depthwise decoder vs attention decoder behind the
                   same mixed-rate conditioned encoder

All experiments except cross_snr sweep the rate grid and evaluate each
channel family at one representative SNR (the EVAL_SNR_DB table);
cross_snr sweeps the SNR grid itself.

Every grid cell is a pure function of (spec, seed), so reruns reproduce
result files byte for byte apart from the timestamp comment. Evaluation
maps are shared across variants of one experiment, which pairs the
comparisons and keeps ordering checks low-variance. Desk-scale budgets are
the defaults; paper-scale presets are emitted for reference but are far
outside a single-core time budget (marked not CI-run).
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint, split_model_params
from .config import ConfigBundle, bundle_text, config_hash
from .decoder import ATTENTION, DecoderConfig, decoder_forward, init_decoder_params
from .encoder import (EncoderConfig, SideInfo, SnrClampWarning, encode_side_info,
                      encoder_forward, init_encoder_params)
from .errors import ConfigError
from .nn import bind_params
from .psi_data import CHAN_TYPES, RAYLEIGH, RICIAN, DatasetConfig, generate_dataset
from .rate_link import LinkConfig, apply_mask, prefix_mask, transmit
from .results import ResultRow, emit_results, ensure_dir, write_svg_lines
from .rng import RngStream
from .tensor import Graph
from .training import TrainConfig, train

EXPERIMENTS = ("cross_snr", "variable_rate", "scalability", "ablation_prompt", "ablation_decoder")
NOISELESS_SANITY_DB = 300.0

# representative evaluation SNR per channel family for the rate-swept
# experiments (cross_snr sweeps SNR itself and ignores this table)
EVAL_SNR_DB = {
    "variable_rate": {RAYLEIGH: 15.0, RICIAN: 10.0},
    "scalability": {RAYLEIGH: 15.0, RICIAN: 10.0},
    "ablation_prompt": {RAYLEIGH: 20.0, RICIAN: 15.0},
    "ablation_decoder": {RAYLEIGH: 10.0, RICIAN: 20.0},
}


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    snr_list: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    rate_list: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    n_list: tuple = (16, 64, 144)
    trials: int = 100
    seeds: tuple = (0, 1, 2, 3, 4)
    out_dir: str = "results"
    samples: int = 1024
    epochs: int = 200
    batch_size: int = 128
    lr0: float = 1e-3
    snr_lo_db: float = 0.0
    snr_hi_db: float = 20.0
    eval_seed: int = 9000
    train_if_missing: bool = True
    scale: str = "desk"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; valid: {EXPERIMENTS}")
        if not self.snr_list or not self.rate_list or not self.n_list:
            raise ConfigError("ExperimentSpec: sweep axes must be nonempty")
        if self.trials < 1:
            raise ConfigError("ExperimentSpec: trials must be >= 1")
        if not self.seeds:
            raise ConfigError("ExperimentSpec: need at least one seed")
        for n in self.n_list:
            side = int(round(n ** 0.5))
            if side * side != n:
                raise ConfigError(f"ExperimentSpec: element count {n} is not a square raster")


def spec_text(spec: ExperimentSpec) -> str:
    parts = []
    for f in sorted(dataclasses.fields(spec), key=lambda f: f.name):
        if f.name == "out_dir":
            continue  # output location must not change result content
        val = getattr(spec, f.name)
        if isinstance(val, tuple):
            val = " ".join("%.10g" % v if isinstance(v, float) else str(v) for v in val)
        parts.append(f"{f.name} = {val}")
    return "\n".join(parts) + "\n"


def spec_hash(spec: ExperimentSpec) -> str:
    return hashlib.sha256(spec_text(spec).encode("utf-8")).hexdigest()[:16]


def worker_count() -> int:
    env = os.environ.get("PSI_CODEC_THREADS", "")
    if env.strip():
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"PSI_CODEC_THREADS must be an integer, got {env!r}") from exc
        return max(n, 1)
    return min(4, os.cpu_count() or 1)


def _map_cells(fn, cells):
    workers = worker_count()
    if workers == 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


# ---------------------------------------------------------------------------
# variants

@dataclass(frozen=True)
class Variant:
    name: str
    encoder: EncoderConfig
    decoder: DecoderConfig
    train_cfg: TrainConfig
    data_cfg: DatasetConfig


def _grid_side(n: int) -> int:
    return int(round(n ** 0.5))


def _base_cfgs(spec: ExperimentSpec, seed: int, n: int = 16):
    side = _grid_side(n)
    enc = EncoderConfig(h=side, w=side, latent_dim=n)
    dec = DecoderConfig(h=side, w=side, latent_dim=n)
    data = DatasetConfig(m=n, h=side, w=side, count=spec.samples, seed=10_000 + seed)
    tcfg = TrainConfig(epochs=spec.epochs, batch_size=spec.batch_size, lr0=spec.lr0,
                       seed=seed, snr_lo_db=spec.snr_lo_db, snr_hi_db=spec.snr_hi_db,
                       rate_mode="fixed", rate_fixed=0.5)
    return enc, dec, tcfg, data


def variants_for(spec: ExperimentSpec, seed: int) -> list[Variant]:
    enc, dec, tcfg, data = _base_cfgs(spec, seed)
    bare = replace(enc, use_prompt=False, use_film=False)
    out: list[Variant] = []
    mixed = replace(tcfg, rate_mode="uniform", rates=spec.rate_list)
    if spec.experiment == "cross_snr":
        out.append(Variant("prompt", enc, dec, tcfg, data))
        out.append(Variant("noprompt", bare, dec, tcfg, data))
        # matched-but-nonadaptive reference: single channel family, single SNR
        out.append(Variant("fixed_rayleigh", bare, dec,
                           replace(tcfg, mix_rayleigh=1.0, snr_lo_db=15.0, snr_hi_db=15.0),
                           replace(data, mix_rayleigh=1.0)))
    elif spec.experiment == "variable_rate":
        out.append(Variant("mixed_prompt", enc, dec, mixed, data))
        out.append(Variant("mixed_noprompt", bare, dec, mixed, data))
        for r in spec.rate_list:
            out.append(Variant(f"fixed_r{r:g}", bare, dec, replace(tcfg, rate_fixed=float(r)), data))
    elif spec.experiment == "scalability":
        for n in spec.n_list:
            enc_n, dec_n, tcfg_n, data_n = _base_cfgs(spec, seed, n=n)
            out.append(Variant(f"n{n}", enc_n, dec_n, tcfg_n, data_n))
    elif spec.experiment == "ablation_prompt":
        # conditioning only has value when the context carries live information,
        # so every ablation variant trains in the mixed-rate regime
        out.append(Variant("soft_film", enc, dec, mixed, data))
        out.append(Variant("soft_only", replace(enc, use_film=False), dec, mixed, data))
        out.append(Variant("joint", enc, replace(dec, film=True), mixed, data))
        out.append(Variant("noprompt", bare, dec, mixed, data))
    else:  # ablation_decoder
        att = replace(dec, kind=ATTENTION, e=128, heads=4)
        out.append(Variant("dwcg", enc, dec, mixed, data))
        out.append(Variant("attention", enc, att, mixed, data))
    return out


# ---------------------------------------------------------------------------
# model pool

def _variant_bundle(v: Variant) -> ConfigBundle:
    return ConfigBundle(data=v.data_cfg, encoder=v.encoder, decoder=v.decoder, train=v.train_cfg)


def model_path(workdir: str, experiment: str, v: Variant) -> str:
    h = config_hash(_variant_bundle(v))
    return os.path.join(workdir, "models", f"{experiment}_{v.name}_s{v.train_cfg.seed}_{h}.ckpt")


def get_model(workdir: str, spec: ExperimentSpec, v: Variant):
    """Load the variant checkpoint, training it first if permitted."""
    path = model_path(workdir, spec.experiment, v)
    bundle = _variant_bundle(v)
    if os.path.exists(path):
        ckpt = load_checkpoint(path)
        if ckpt.config_text == bundle_text(bundle):
            return split_model_params(ckpt.params)
    if not spec.train_if_missing:
        raise ConfigError(
            f"missing checkpoint for variant {v.name!r} (seed {v.train_cfg.seed}) at {path}; "
            "enable training (train_if_missing) or provide the file"
        )
    ensure_dir(os.path.dirname(path))
    ds = generate_dataset(v.data_cfg)
    enc_params = init_encoder_params(v.encoder, v.train_cfg.seed)
    dec_params = init_decoder_params(v.decoder, v.train_cfg.seed)
    res = train(ds, v.train_cfg, v.encoder, v.decoder, enc_params, dec_params,
                log_every=max(v.train_cfg.epochs // 4, 1))
    merged = {**res.enc_params, **res.dec_params}
    save_checkpoint(path, bundle_text(bundle), merged, res.opt_state,
                    seed=v.train_cfg.seed, epoch=res.epochs_run)
    return res.enc_params, res.dec_params


# ---------------------------------------------------------------------------
# evaluation

def _eval_maps(spec: ExperimentSpec, chan: str, n: int = 16) -> np.ndarray:
    """Shared held-out maps for one channel family, [trials, 1, H, W]."""
    side = _grid_side(n)
    cfg = DatasetConfig(m=n, h=side, w=side, count=spec.trials,
                        mix_rayleigh=1.0 if chan == RAYLEIGH else 0.0,
                        seed=spec.eval_seed + (0 if chan == RAYLEIGH else 1))
    return generate_dataset(cfg).normalized_array()


def eval_cell(enc_params, dec_params, ecfg: EncoderConfig, dcfg: DecoderConfig,
              maps: np.ndarray, s: SideInfo, snr_range, noise_rng: RngStream,
              noiseless: bool = False) -> tuple[float, float]:
    """Mean linear NMSE and its dB value for one (model, context) cell."""
    from .training import nmse_batch, nmse_db

    g = Graph(dtype=np.float64)
    pe = bind_params(g, enc_params, trainable=False)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SnrClampWarning)
        ctx = encode_side_info(s, snr_range)
    z = encoder_forward(g, pe, ecfg, g.constant(maps), ctx)
    m = prefix_mask(s.rate, ecfg.latent_dim)
    z_r = apply_mask(z.value, m)
    if noiseless:
        z_t = z_r
    else:
        z_t = transmit(z_r, m, LinkConfig(snr_db=s.snr_db), noise_rng)
    g2 = Graph(dtype=np.float64)
    pd = bind_params(g2, dec_params, trainable=False)
    dec_ctx = ctx if dcfg.film else None
    x_hat = decoder_forward(g2, pd, dcfg, g2.constant(z_t), dec_ctx)
    linear = nmse_batch(maps, x_hat.value)
    return float(np.mean(linear)), nmse_db(linear)


# ---------------------------------------------------------------------------
# experiment drivers

def _run_grid(spec: ExperimentSpec, workdir: str, grid_fn) -> list[ResultRow]:
    """Train all variant models, then map grid_fn over the evaluation cells."""
    rows: list[ResultRow] = []
    for seed in spec.seeds:
        for v in variants_for(spec, seed):
            enc_params, dec_params = get_model(workdir, spec, v)
            rows.extend(grid_fn(seed, v, enc_params, dec_params))
    rows.sort(key=lambda r: (r.variant, r.seed, r.n_elements, r.chan_type, r.snr_db, r.rate))
    return rows


def _snr_grid_cells(spec: ExperimentSpec):
    snrs = list(spec.snr_list) + [NOISELESS_SANITY_DB]
    return [(snr, chan) for chan in CHAN_TYPES for snr in snrs]


def run_cross_snr(spec: ExperimentSpec, workdir: str) -> list[ResultRow]:
    maps = {chan: _eval_maps(spec, chan) for chan in CHAN_TYPES}

    def grid(seed, v, enc_params, dec_params):
        def cell(args):
            snr, chan = args
            s = SideInfo(snr_db=snr, chan_type=chan, rate=0.5)
            noiseless = snr >= NOISELESS_SANITY_DB
            rng = RngStream(spec.eval_seed, f"link/{v.name}/{seed}/{chan}/{snr:g}")
            lin, db = eval_cell(enc_params, dec_params, v.encoder, v.decoder, maps[chan],
                                s, v.train_cfg.snr_range, rng, noiseless=noiseless)
            return ResultRow(spec.experiment, v.name, seed, snr, chan, 0.5, 16, lin, db, spec.trials)
        return _map_cells(cell, _snr_grid_cells(spec))

    return _run_grid(spec, workdir, grid)


def run_variable_rate(spec: ExperimentSpec, workdir: str) -> list[ResultRow]:
    maps = {chan: _eval_maps(spec, chan) for chan in CHAN_TYPES}
    snr_by_chan = EVAL_SNR_DB[spec.experiment]

    def grid(seed, v, enc_params, dec_params):
        if v.name.startswith("fixed_r"):
            rates = [v.train_cfg.rate_fixed]
        else:
            rates = list(spec.rate_list)
        def cell(args):
            rate, chan = args
            snr = snr_by_chan[chan]
            s = SideInfo(snr_db=snr, chan_type=chan, rate=rate)
            rng = RngStream(spec.eval_seed, f"link/{v.name}/{seed}/{chan}/{rate:g}")
            lin, db = eval_cell(enc_params, dec_params, v.encoder, v.decoder, maps[chan],
                                s, v.train_cfg.snr_range, rng)
            return ResultRow(spec.experiment, v.name, seed, snr, chan, rate,
                             16, lin, db, spec.trials)
        return _map_cells(cell, [(r, c) for c in CHAN_TYPES for r in rates])

    return _run_grid(spec, workdir, grid)


def run_scalability(spec: ExperimentSpec, workdir: str) -> list[ResultRow]:
    snr_by_chan = EVAL_SNR_DB[spec.experiment]

    def grid(seed, v, enc_params, dec_params):
        n = v.encoder.latent_dim
        maps = {chan: _eval_maps(spec, chan, n=n) for chan in CHAN_TYPES}
        def cell(args):
            rate, chan = args
            snr = snr_by_chan[chan]
            s = SideInfo(snr_db=snr, chan_type=chan, rate=rate)
            rng = RngStream(spec.eval_seed, f"link/{v.name}/{seed}/{chan}/{rate:g}")
            lin, db = eval_cell(enc_params, dec_params, v.encoder, v.decoder, maps[chan],
                                s, v.train_cfg.snr_range, rng)
            return ResultRow(spec.experiment, v.name, seed, snr, chan, rate,
                             n, lin, db, spec.trials)
        return _map_cells(cell, [(r, c) for c in CHAN_TYPES for r in spec.rate_list])

    return _run_grid(spec, workdir, grid)


def run_ablation(spec: ExperimentSpec, workdir: str) -> list[ResultRow]:
    maps = {chan: _eval_maps(spec, chan) for chan in CHAN_TYPES}
    snr_by_chan = EVAL_SNR_DB[spec.experiment]

    def grid(seed, v, enc_params, dec_params):
        def cell(args):
            rate, chan = args
            snr = snr_by_chan[chan]
            s = SideInfo(snr_db=snr, chan_type=chan, rate=rate)
            rng = RngStream(spec.eval_seed, f"link/{v.name}/{seed}/{chan}/{rate:g}")
            lin, db = eval_cell(enc_params, dec_params, v.encoder, v.decoder, maps[chan],
                                s, v.train_cfg.snr_range, rng)
            return ResultRow(spec.experiment, v.name, seed, snr, chan, rate,
                             16, lin, db, spec.trials)
        return _map_cells(cell, [(r, c) for c in CHAN_TYPES for r in spec.rate_list])

    return _run_grid(spec, workdir, grid)


_RUNNERS = {
    "cross_snr": run_cross_snr,
    "variable_rate": run_variable_rate,
    "scalability": run_scalability,
    "ablation_prompt": run_ablation,
    "ablation_decoder": run_ablation,
}


def run_experiment(spec: ExperimentSpec, workdir: str | None = None,
                   timestamp: str | None = None) -> tuple[list[ResultRow], str]:
    """Run one experiment end to end; returns (rows, csv path)."""
    workdir = workdir or spec.out_dir
    ensure_dir(workdir)
    ensure_dir(spec.out_dir)
    rows = _RUNNERS[spec.experiment](spec, workdir)
    csv_path = os.path.join(spec.out_dir, f"{spec.experiment}.csv")
    emit_results(rows, csv_path, spec_hash(spec), timestamp)
    _emit_plots(spec, rows)
    return rows, csv_path


def _emit_plots(spec: ExperimentSpec, rows: list[ResultRow]) -> None:
    axis = "snr_db" if spec.experiment == "cross_snr" else "rate"
    series: dict[str, list] = {}
    for row in rows:
        if row.snr_db >= NOISELESS_SANITY_DB:
            continue
        x = getattr(row, axis)
        series.setdefault(f"{row.variant}/{row.chan_type}", []).append((x, row.nmse_db))
    merged = {}
    for name, pts in series.items():
        by_x: dict[float, list] = {}
        for x, y in pts:
            by_x.setdefault(x, []).append(y)
        merged[name] = [(x, float(np.mean(ys))) for x, ys in sorted(by_x.items())]
    path = os.path.join(spec.out_dir, f"{spec.experiment}_{axis}.svg")
    write_svg_lines(path, merged, x_label=axis, y_label="nmse_db")


# ---------------------------------------------------------------------------
# presets

def desk_spec(experiment: str, out_dir: str = "results", **overrides) -> ExperimentSpec:
    base = dict(experiment=experiment, out_dir=out_dir)
    if experiment == "scalability":
        base.update(seeds=(0, 1), epochs=120)
    base.update(overrides)
    return ExperimentSpec(**base)


def paper_spec(experiment: str, out_dir: str = "results-paper") -> ExperimentSpec:
    """Published-protocol scale; recorded for reference, not CI-run."""
    return ExperimentSpec(
        experiment=experiment,
        out_dir=out_dir,
        snr_list=(0.0, 5.0, 10.0, 15.0, 20.0, 25.0),
        n_list=(64, 144, 256, 400, 576),
        trials=100,
        seeds=(0, 1, 2, 3, 4),
        samples=100_000,
        epochs=10_000,
        batch_size=200,
        lr0=1e-4,
        scale="paper",
    )


def spec_from_mapping(experiment: str, mapping: dict, out_dir: str,
                      seed: int | None = None) -> ExperimentSpec:
    """Build a spec from the free-form [experiment] config section."""
    kwargs: dict = {}
    fields = {f.name: f for f in dataclasses.fields(ExperimentSpec)}
    for key, raw in mapping.items():
        if key == "experiment":
            continue
        if key not in fields:
            raise ConfigError(f"[experiment] unknown key {key!r}; valid: {sorted(fields)}")
        ann = str(fields[key].type)
        raw = raw.strip()
        try:
            if "tuple" in ann:
                parts = [p for p in raw.replace(",", " ").split() if p]
                if key in ("seeds", "n_list"):
                    kwargs[key] = tuple(int(p) for p in parts)
                else:
                    kwargs[key] = tuple(float(p) for p in parts)
            elif ann == "int":
                kwargs[key] = int(raw)
            elif ann == "float":
                kwargs[key] = float(raw)
            elif ann == "bool":
                kwargs[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                kwargs[key] = raw
        except ValueError as exc:
            raise ConfigError(f"[experiment] {key}: cannot parse {raw!r}") from exc
    if seed is not None and "seeds" not in kwargs:
        kwargs["seeds"] = (seed,)
    kwargs["out_dir"] = out_dir
    return desk_spec(experiment, **kwargs)
