import os, sys, time
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from psi_codec.harness import desk_spec, run_experiment

CACHE = "/root/pkg/.cache/acceptance/ablation_prompt"
spec = desk_spec("ablation_prompt", out_dir=os.path.join(CACHE, "results"))
t0 = time.perf_counter()
rows, path = run_experiment(spec, workdir=CACHE, timestamp="acceptance")
print(f"total {time.perf_counter()-t0:.0f}s, rows={len(rows)} -> {path}", flush=True)

def mean_db(name):
    vals = [r.nmse_linear for r in rows if r.variant == name]
    return 10*np.log10(np.mean(vals))

for name in ("soft_film", "soft_only", "joint", "noprompt"):
    print(f"{name:10s} {mean_db(name):7.2f} dB", flush=True)
print("ordering soft_film <= soft_only <= noprompt:",
      mean_db("soft_film") <= mean_db("soft_only") <= mean_db("noprompt"), flush=True)
