import os, sys, time
import numpy as np
sys.path.insert(0, "/root/pkg/src")
from psi_codec.harness import desk_spec, run_experiment

CACHE = "/root/pkg/.cache/acceptance/variable_rate"
spec = desk_spec("variable_rate", out_dir=os.path.join(CACHE, "results"))
t0 = time.perf_counter()
rows, path = run_experiment(spec, workdir=CACHE, timestamp="acceptance")
print(f"total {time.perf_counter()-t0:.0f}s, rows={len(rows)} -> {path}", flush=True)

def rows_by(**m):
    return [r for r in rows if all(getattr(r, k) == v for k, v in m.items())]

def mean_db(rs):
    return 10*np.log10(np.mean([r.nmse_linear for r in rs]))

for rate in spec.rate_list:
    mixed = rows_by(variant="mixed_prompt", rate=rate)
    fixed = rows_by(variant=f"fixed_r{rate:g}", rate=rate)
    mnp   = rows_by(variant="mixed_noprompt", rate=rate)
    per_seed = [np.mean([r.nmse_linear for r in rows_by(variant="mixed_prompt", rate=rate, seed=s)]) for s in spec.seeds]
    print(f"r={rate}: mixed {mean_db(mixed):7.2f}  fixed {mean_db(fixed):7.2f}  gap {mean_db(mixed)-mean_db(fixed):+6.2f}  "
          f"noprompt {mean_db(mnp):7.2f}  median {10*np.log10(np.median(per_seed)):7.2f}", flush=True)
