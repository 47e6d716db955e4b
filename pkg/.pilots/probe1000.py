"""Focused probe: r=0.9 mixed-vs-specialist gap at epochs=1000, seed 0.

Trains only the two models that matter for the worst criterion-8 cell and
evaluates them with the exact run_variable_rate protocol.
"""
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from psi_codec.encoder import SideInfo
from psi_codec.harness import _eval_maps, desk_spec, eval_cell, get_model, variants_for
from psi_codec.psi_data import CHAN_TYPES
from psi_codec.rng import RngStream

HERE = os.path.dirname(os.path.abspath(__file__))
work = os.path.join(HERE, "w1000_vr")
spec = desk_spec("variable_rate", out_dir=os.path.join(work, "results"),
                 epochs=1000, seeds=(0,))
variants = {v.name: v for v in variants_for(spec, 0)}
maps = {chan: _eval_maps(spec, chan) for chan in CHAN_TYPES}

out = {}
for name in ("mixed_prompt", "fixed_r0.9"):
    v = variants[name]
    t0 = time.time()
    enc, dec = get_model(work, spec, v)
    print(f"{name} trained {time.time() - t0:.0f}s", flush=True)
    lins = []
    for chan in CHAN_TYPES:
        s = SideInfo(snr_db=spec.eval_snr_db, chan_type=chan, rate=0.9)
        rng = RngStream(spec.eval_seed, f"link/{name}/0/{chan}/0.9")
        lin, db = eval_cell(enc, dec, v.encoder, v.decoder, maps[chan], s,
                            v.train_cfg.snr_range, rng)
        lins.append(lin)
        print(f"  {chan} {db:7.2f} dB", flush=True)
    out[name] = 10.0 * np.log10(np.mean(lins))
    print(f"{name} mean {out[name]:7.2f} dB", flush=True)

print(f"gap at r=0.9, epochs=1000: {out['mixed_prompt'] - out['fixed_r0.9']:+.2f} dB", flush=True)
