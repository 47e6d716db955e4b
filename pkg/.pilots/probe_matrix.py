"""Budget probe matrix, all seed 0.

A. variable_rate r=0.9 mixed-vs-specialist gap at samples=2048, epochs=600
B. ablation soft_film-vs-soft_only margin at epochs=1000, samples=1024
   (soft_film reused from the epochs=1000 variable_rate probe: same bundle)
C. ablation margin at samples=2048, epochs=600 (soft_film reused from A)
D. variable_rate r=0.9 gap at samples=4096, epochs=600
"""
import os
import shutil
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from psi_codec.encoder import SideInfo
from psi_codec.harness import (_eval_maps, desk_spec, eval_cell, get_model,
                               model_path, variants_for)
from psi_codec.psi_data import CHAN_TYPES
from psi_codec.rng import RngStream

HERE = os.path.dirname(os.path.abspath(__file__))


def mean_db(lins):
    return 10.0 * np.log10(np.mean(lins))


def vr_gap_at_09(samples, epochs, work):
    spec = desk_spec("variable_rate", out_dir=os.path.join(work, "results"),
                     samples=samples, epochs=epochs, seeds=(0,))
    variants = {v.name: v for v in variants_for(spec, 0)}
    maps = {chan: _eval_maps(spec, chan) for chan in CHAN_TYPES}
    means = {}
    for name in ("mixed_prompt", "fixed_r0.9"):
        v = variants[name]
        t0 = time.time()
        enc, dec = get_model(work, spec, v)
        print(f"  {name} ready {time.time() - t0:.0f}s", flush=True)
        lins = []
        for chan in CHAN_TYPES:
            s = SideInfo(snr_db=spec.eval_snr_db, chan_type=chan, rate=0.9)
            rng = RngStream(spec.eval_seed, f"link/{name}/0/{chan}/0.9")
            lin, _ = eval_cell(enc, dec, v.encoder, v.decoder, maps[chan], s,
                               v.train_cfg.snr_range, rng)
            lins.append(lin)
        means[name] = mean_db(lins)
    gap = means["mixed_prompt"] - means["fixed_r0.9"]
    print(f"  mixed {means['mixed_prompt']:.2f}  fixed {means['fixed_r0.9']:.2f}  "
          f"gap {gap:+.2f} dB", flush=True)
    return spec, variants


def ablation_margin(samples, epochs, work):
    spec = desk_spec("ablation_prompt", out_dir=os.path.join(work, "results"),
                     samples=samples, epochs=epochs, seeds=(0,))
    variants = {v.name: v for v in variants_for(spec, 0)}
    maps = {chan: _eval_maps(spec, chan) for chan in CHAN_TYPES}
    from psi_codec.harness import ABLATION_EVAL_SNR_DB
    snr_by = ABLATION_EVAL_SNR_DB["ablation_prompt"]
    per = {}
    for name in ("soft_film", "soft_only"):
        v = variants[name]
        t0 = time.time()
        enc, dec = get_model(work, spec, v)
        print(f"  {name} ready {time.time() - t0:.0f}s", flush=True)
        per[name] = {}
        for rate in spec.rate_list:
            lins = []
            for chan in CHAN_TYPES:
                s = SideInfo(snr_db=snr_by[chan], chan_type=chan, rate=rate)
                rng = RngStream(spec.eval_seed, f"link/{name}/0/{chan}/{rate:g}")
                lin, _ = eval_cell(enc, dec, v.encoder, v.decoder, maps[chan], s,
                                   v.train_cfg.snr_range, rng)
                lins.append(lin)
            per[name][rate] = np.mean(lins)
    sf = mean_db(list(per["soft_film"].values()))
    so = mean_db(list(per["soft_only"].values()))
    for rate in spec.rate_list:
        d = 10 * np.log10(per["soft_film"][rate]) - 10 * np.log10(per["soft_only"][rate])
        print(f"  r={rate}: sf-so delta {d:+.3f} dB", flush=True)
    print(f"  mean soft_film {sf:.2f}  soft_only {so:.2f}  margin {sf - so:+.3f} dB "
          f"({'sf<=so ok' if sf <= so else 'VIOLATION'})", flush=True)


print("== A: variable_rate gap, samples=2048 epochs=600", flush=True)
t0 = time.time()
work_a = os.path.join(HERE, "w2048_vr")
spec_a, var_a = vr_gap_at_09(2048, 600, work_a)

print("== B: ablation margin, epochs=1000 samples=1024 (reuse w1000_vr mixed)", flush=True)
spec_b = desk_spec("variable_rate", out_dir="unused", epochs=1000, seeds=(0,))
var_b = {v.name: v for v in variants_for(spec_b, 0)}
src = model_path(os.path.join(HERE, "w1000_vr"), "variable_rate", var_b["mixed_prompt"])
work_b = os.path.join(HERE, "w1000_ab")
spec_b2 = desk_spec("ablation_prompt", out_dir=os.path.join(work_b, "results"),
                    epochs=1000, seeds=(0,))
var_b2 = {v.name: v for v in variants_for(spec_b2, 0)}
dst = model_path(work_b, "ablation_prompt", var_b2["soft_film"])
os.makedirs(os.path.dirname(dst), exist_ok=True)
if not os.path.exists(dst):
    shutil.copyfile(src, dst)
ablation_margin(1024, 1000, work_b)

print("== C: ablation margin, samples=2048 epochs=600 (reuse A mixed)", flush=True)
work_c = os.path.join(HERE, "w2048_ab")
spec_c = desk_spec("ablation_prompt", out_dir=os.path.join(work_c, "results"),
                   samples=2048, epochs=600, seeds=(0,))
var_c = {v.name: v for v in variants_for(spec_c, 0)}
src_c = model_path(work_a, "variable_rate", var_a["mixed_prompt"])
dst_c = model_path(work_c, "ablation_prompt", var_c["soft_film"])
os.makedirs(os.path.dirname(dst_c), exist_ok=True)
if not os.path.exists(dst_c):
    shutil.copyfile(src_c, dst_c)
ablation_margin(2048, 600, work_c)

print("== D: variable_rate gap, samples=4096 epochs=600", flush=True)
vr_gap_at_09(4096, 600, os.path.join(HERE, "w4096_vr"))
print(f"total {time.time() - t0:.0f}s", flush=True)
