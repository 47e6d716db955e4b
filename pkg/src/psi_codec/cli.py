"""Command-line entry point.

Subcommands: gen-data, train, eval, experiment <id>, complexity, grad-check.
Global flags: --config (INI), --seed, --out, --precision. Exit codes:
0 success, 2 configuration error, 3 numeric failure, 4 I/O or data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .config import bundle_text, config_hash, load_bundle
from .errors import ConfigError, DataError, NumericError, PsiCodecError, UsageError
from .results import ensure_dir


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="psi-codec",
                                 description="prompt-conditioned variable-rate phase-map codec")
    ap.add_argument("--config", help="INI config file", default=None)
    ap.add_argument("--seed", type=int, default=None, help="override the base seed")
    ap.add_argument("--out", default="out", help="output directory (or file for gen-data)")
    ap.add_argument("--precision", choices=("f32", "f64"), default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", help="generate a synthetic phase-map dataset file")

    sub.add_parser("train", help="train a model from the config sections")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--snr", type=float, default=10.0)
    p_eval.add_argument("--chan", choices=("rayleigh", "rician"), default="rayleigh")
    p_eval.add_argument("--rate", type=float, default=0.5)
    p_eval.add_argument("--trials", type=int, default=100)

    p_exp = sub.add_parser("experiment", help="run an experiment grid")
    p_exp.add_argument("experiment_id", choices=("cross_snr", "variable_rate", "scalability",
                                                 "ablation_prompt", "ablation_decoder"))

    p_cx = sub.add_parser("complexity", help="closed-form parameter/MAC report")
    p_cx.add_argument("--measure", action="store_true", help="also time single-map inference")

    sub.add_parser("grad-check", help="finite-difference check of ops and full pipeline")
    return ap


def _cmd_gen_data(args, bundle) -> int:
    from .psi_data import generate_dataset, write_dataset

    data_cfg = bundle.data
    if args.seed is not None:
        data_cfg = dataclasses.replace(data_cfg, seed=args.seed)
    ds = generate_dataset(data_cfg)
    out = args.out
    parent = os.path.dirname(os.path.abspath(out))
    os.makedirs(parent, exist_ok=True)
    write_dataset(out, ds.samples)
    print(f"wrote {len(ds.samples)} maps ({data_cfg.h}x{data_cfg.w}, {data_cfg.bits}-bit) to {out}")
    return 0


def _cmd_train(args, bundle) -> int:
    from .checkpoint import save_checkpoint
    from .decoder import init_decoder_params
    from .encoder import init_encoder_params
    from .psi_data import generate_dataset
    from .training import train

    tcfg, data_cfg = bundle.train, bundle.data
    if args.seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=args.seed)
        data_cfg = dataclasses.replace(data_cfg, seed=args.seed)
    if args.precision is not None:
        tcfg = dataclasses.replace(tcfg, precision=args.precision)
    bundle.train, bundle.data = tcfg, data_cfg
    ds = generate_dataset(data_cfg)
    enc_params = init_encoder_params(bundle.encoder, tcfg.seed)
    dec_params = init_decoder_params(bundle.decoder, tcfg.seed)
    res = train(ds, tcfg, bundle.encoder, bundle.decoder, enc_params, dec_params)
    ensure_dir(args.out)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    save_checkpoint(ckpt_path, bundle_text(bundle), {**res.enc_params, **res.dec_params},
                    res.opt_state, seed=tcfg.seed, epoch=res.epochs_run)
    log_path = os.path.join(args.out, "train_log.csv")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,lr,train_nmse_db,val_nmse_db\n")
        for row in res.log:
            fh.write(f"{row.epoch},{row.lr:.10g},{row.train_nmse_db:.6f},{row.val_nmse_db:.6f}\n")
    if res.diverged:
        print(f"training diverged at epoch {res.epochs_run}; last-good checkpoint kept", file=sys.stderr)
        raise NumericError("non-finite training loss")
    last = res.log[-1] if res.log else None
    tail = f" final val {last.val_nmse_db:.2f} dB" if last else ""
    print(f"trained {res.epochs_run} epochs;{tail}; checkpoint {ckpt_path}")
    return 0


def _cmd_eval(args, bundle) -> int:
    from .checkpoint import load_checkpoint, split_model_params
    from .config import bundle_from_text
    from .encoder import SideInfo
    from .harness import eval_cell
    from .psi_data import DatasetConfig, generate_dataset
    from .rng import RngStream

    ckpt = load_checkpoint(args.ckpt)
    saved = bundle_from_text(ckpt.config_text)
    enc_params, dec_params = split_model_params(ckpt.params)
    seed = args.seed if args.seed is not None else 9000
    data_cfg = DatasetConfig(m=saved.data.m, h=saved.data.h, w=saved.data.w,
                             bits=saved.data.bits, count=args.trials,
                             mix_rayleigh=1.0 if args.chan == "rayleigh" else 0.0,
                             seed=seed)
    maps = generate_dataset(data_cfg).normalized_array()
    s = SideInfo(snr_db=args.snr, chan_type=args.chan, rate=args.rate)
    rng = RngStream(seed, "eval/link")
    lin, db = eval_cell(enc_params, dec_params, saved.encoder, saved.decoder, maps, s,
                        saved.train.snr_range, rng)
    print(f"nmse {lin:.6g} linear ({db:.2f} dB) over {args.trials} trials "
          f"at snr {args.snr:g} dB, {args.chan}, rate {args.rate:g}")
    return 0


def _cmd_experiment(args, bundle) -> int:
    from .harness import run_experiment, spec_from_mapping

    spec = spec_from_mapping(args.experiment_id, bundle.experiment, args.out, seed=args.seed)
    rows, csv_path = run_experiment(spec)
    print(f"{len(rows)} result rows -> {csv_path}")
    return 0


def _cmd_complexity(args, _bundle) -> int:
    from .complexity import build_report, report_lines

    rep = build_report(measure=args.measure)
    lines = report_lines(rep)
    print("\n".join(lines))
    ensure_dir(args.out)
    with open(os.path.join(args.out, "complexity.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    if rep.inference_ms is not None:
        with open(os.path.join(args.out, "timing.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"median_single_map_inference_ms {rep.inference_ms:.3f}\n")
    return 0


def _cmd_grad_check(args, _bundle) -> int:
    from .pipecheck import full_pipeline_check, op_suite_check

    worst_ops = op_suite_check()
    worst_pipe = full_pipeline_check()
    print(f"op suite worst relative error: {worst_ops:.3e}")
    print(f"full pipeline worst relative error: {worst_pipe:.3e}")
    if max(worst_ops, worst_pipe) >= 1e-4:
        raise NumericError(f"finite-difference check failed: {max(worst_ops, worst_pipe):.3e}")
    print("gradient checks passed (tolerance 1e-4)")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "experiment": _cmd_experiment,
    "complexity": _cmd_complexity,
    "grad-check": _cmd_grad_check,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        bundle = load_bundle(args.config)
        if args.precision is not None:
            bundle.train = dataclasses.replace(bundle.train, precision=args.precision)
        return _COMMANDS[args.command](args, bundle)
    except (ConfigError, UsageError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError) as exc:
        print(f"data/io error: {exc}", file=sys.stderr)
        return 4
    except PsiCodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
