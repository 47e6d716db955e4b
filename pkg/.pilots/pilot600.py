"""Seed-0 pilot at epochs=600 for the two criterion experiments.

variable_rate: per-rate mixed-vs-specialist gaps (need worst <= 1.0 dB).
ablation_prompt (new mixed-rate regime): soft_film <= soft_only <= noprompt.
"""
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from psi_codec.harness import desk_spec, run_experiment

HERE = os.path.dirname(os.path.abspath(__file__))


def mean_db(rows):
    return 10.0 * np.log10(np.mean([r.nmse_linear for r in rows]))


t0 = time.time()
work = os.path.join(HERE, "w600_vr")
spec = desk_spec("variable_rate", out_dir=os.path.join(work, "results"),
                 epochs=600, seeds=(0,))
rows, _ = run_experiment(spec, workdir=work, timestamp="pilot")
print(f"variable_rate done {time.time() - t0:.0f}s", flush=True)
for rate in spec.rate_list:
    mixed = [r for r in rows if r.variant == "mixed_prompt" and r.rate == rate]
    fixed = [r for r in rows if r.variant == f"fixed_r{rate:g}" and r.rate == rate]
    nop = [r for r in rows if r.variant == "mixed_noprompt" and r.rate == rate]
    gap = mean_db(mixed) - mean_db(fixed)
    print(f"r={rate}: mixed {mean_db(mixed):7.2f}  fixed {mean_db(fixed):7.2f}  "
          f"gap {gap:+5.2f}  noprompt {mean_db(nop):7.2f}", flush=True)

t1 = time.time()
work = os.path.join(HERE, "w600_ab")
spec = desk_spec("ablation_prompt", out_dir=os.path.join(work, "results"),
                 epochs=600, seeds=(0,))
rows, _ = run_experiment(spec, workdir=work, timestamp="pilot")
print(f"ablation_prompt done {time.time() - t1:.0f}s", flush=True)
means = {}
for name in ("soft_film", "soft_only", "joint", "noprompt"):
    means[name] = mean_db([r for r in rows if r.variant == name])
    print(f"{name:10s} {means[name]:7.2f} dB", flush=True)
print("per-rate soft_film vs noprompt:", flush=True)
for rate in spec.rate_list:
    sf = mean_db([r for r in rows if r.variant == "soft_film" and r.rate == rate])
    np_ = mean_db([r for r in rows if r.variant == "noprompt" and r.rate == rate])
    print(f"  r={rate}: soft_film {sf:7.2f}  noprompt {np_:7.2f}  delta {sf - np_:+5.2f}", flush=True)
print(f"ordering sf<=so<=np: {means['soft_film'] <= means['soft_only'] <= means['noprompt']}",
      flush=True)
print(f"total {time.time() - t0:.0f}s", flush=True)
