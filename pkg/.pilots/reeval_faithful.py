"""Re-score cached variable_rate probe models under the per-channel eval
protocol (rayleigh@15 dB, rician@10 dB). Pure evaluation, no training."""
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from psi_codec.encoder import SideInfo
from psi_codec.harness import (EVAL_SNR_DB, _eval_maps, desk_spec, eval_cell,
                               get_model, model_path, variants_for)
from psi_codec.psi_data import CHAN_TYPES
from psi_codec.rng import RngStream

HERE = os.path.dirname(os.path.abspath(__file__))
SNR_BY = EVAL_SNR_DB["variable_rate"]


def mean_db_over_chans(work, spec, maps, v, name, rate):
    enc, dec = get_model(work, spec, v)
    lins = []
    for chan in CHAN_TYPES:
        s = SideInfo(snr_db=SNR_BY[chan], chan_type=chan, rate=rate)
        rng = RngStream(spec.eval_seed, f"link/{name}/0/{chan}/{rate:g}")
        lin, _ = eval_cell(enc, dec, v.encoder, v.decoder, maps[chan], s,
                           v.train_cfg.snr_range, rng)
        lins.append(lin)
    return 10.0 * np.log10(np.mean(lins))


def gap_table(work, samples, epochs, rates):
    spec = desk_spec("variable_rate", out_dir=os.path.join(work, "results"),
                     samples=samples, epochs=epochs, seeds=(0,))
    variants = {v.name: v for v in variants_for(spec, 0)}
    maps = {chan: _eval_maps(spec, chan) for chan in CHAN_TYPES}
    for rate in rates:
        fixed_name = f"fixed_r{rate:g}"
        if not os.path.exists(model_path(work, spec.experiment, variants[fixed_name])):
            print(f"  r={rate:g}: specialist not cached, skip", flush=True)
            continue
        m = mean_db_over_chans(work, spec, maps, variants["mixed_prompt"], "mixed_prompt", rate)
        f = mean_db_over_chans(work, spec, maps, variants[fixed_name], fixed_name, rate)
        print(f"  r={rate:g}: mixed {m:7.2f}  fixed {f:7.2f}  gap {m - f:+.2f} dB",
              flush=True)


print("== faithful eval protocol: rayleigh@15, rician@10 (seed 0)", flush=True)
print("(600, 1024) full table:", flush=True)
gap_table(os.path.join(HERE, "w600_vr"), 1024, 600, (0.1, 0.3, 0.5, 0.7, 0.9))
print("(1000, 1024) r=0.9:", flush=True)
gap_table(os.path.join(HERE, "w1000_vr"), 1024, 1000, (0.9,))
print("(600, 2048) r=0.9:", flush=True)
gap_table(os.path.join(HERE, "w2048_vr"), 2048, 600, (0.9,))
if os.path.exists(os.path.join(HERE, "w4096_vr", "models")):
    print("(600, 4096) r=0.9:", flush=True)
    gap_table(os.path.join(HERE, "w4096_vr"), 4096, 600, (0.9,))
