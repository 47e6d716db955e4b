"""Diagnose why conditioning shows no benefit in the fixed-rate ablation pilot.

Loads cached soft_film checkpoints, reports conditioning-pathway weight norms,
and measures latent sensitivity to the context: ||z(ctx_a) - z(ctx_b)|| / ||z||.
If the pathway stayed near its zero init, conditioning never learned anything.
"""
import os
import sys
import warnings

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from psi_codec.checkpoint import load_checkpoint, split_model_params
from psi_codec.encoder import (SideInfo, SnrClampWarning, encode_side_info,
                               encoder_forward)
from psi_codec.harness import _eval_maps, desk_spec, model_path, variants_for
from psi_codec.nn import bind_params
from psi_codec.tensor import Graph

warnings.simplefilter("ignore", SnrClampWarning)

work = os.path.join(os.path.dirname(__file__), "..", ".cache", "acceptance", "ablation_prompt")
spec = desk_spec("ablation_prompt", out_dir=os.path.join(work, "results"))


def latent(enc, ecfg, maps, s, snr_range):
    g = Graph(dtype=np.float64)
    p = bind_params(g, enc, trainable=False)
    ctx = encode_side_info(s, snr_range)
    return encoder_forward(g, p, ecfg, g.constant(maps), ctx).value


for seed in (0, 1, 2):
    v = [x for x in variants_for(spec, seed) if x.name == "soft_film"][0]
    ckpt = load_checkpoint(model_path(work, "ablation_prompt", v))
    enc, dec = split_model_params(ckpt.params)
    print(f"-- seed {seed}")
    for name in ("enc.ctx.film.gate.w", "enc.ctx.film.gamma1.w", "enc.ctx.film.gamma2.w",
                 "enc.ctx.prompt.proj.w", "enc.ctx.prompt.mlp.l1.w"):
        w = enc[name]
        print(f"   {name:28s} |w|_rms {float(np.sqrt(np.mean(w ** 2))):.4e} "
              f"max {float(np.max(np.abs(w))):.4e}")

    maps = _eval_maps(spec, "rayleigh")
    base = latent(enc, v.encoder, maps, SideInfo(10.0, "rayleigh", 0.5), v.train_cfg.snr_range)
    for label, s in (("snr 0 vs 10", SideInfo(0.0, "rayleigh", 0.5)),
                     ("snr 20 vs 10", SideInfo(20.0, "rayleigh", 0.5)),
                     ("rician vs rayleigh", SideInfo(10.0, "rician", 0.5)),
                     ("rate 0.1 vs 0.5", SideInfo(10.0, "rayleigh", 0.1))):
        alt = latent(enc, v.encoder, maps, s, v.train_cfg.snr_range)
        rel = float(np.linalg.norm(alt - base) / np.linalg.norm(base))
        print(f"   dz/z {label:22s} {rel:.4e}")
