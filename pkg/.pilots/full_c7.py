import numpy as np, time
from psi_codec.encoder import EncoderConfig, init_encoder_params
from psi_codec.decoder import DecoderConfig, init_decoder_params
from psi_codec.psi_data import DatasetConfig, generate_dataset
from psi_codec.training import TrainConfig, train

ds = generate_dataset(DatasetConfig(count=8192, seed=7))
ecfg, dcfg = EncoderConfig(), DecoderConfig()
ep = init_encoder_params(ecfg, 7)
dp = init_decoder_params(dcfg, 7)
cfg = TrainConfig(epochs=2000, batch_size=128, lr0=1e-3, seed=7,
                  snr_lo_db=5.0, snr_hi_db=20.0, rate_mode="fixed", rate_fixed=0.5)
t0 = time.time()
res = train(ds, cfg, ecfg, dcfg, ep, dp, log_every=100)
dt = time.time() - t0
for row in res.log:
    print(f"epoch {row.epoch:4d} lr {row.lr:.2e} train {row.train_nmse_db:7.2f} val {row.val_nmse_db:7.2f} dB", flush=True)
print(f"total {dt:.0f}s ({dt/60:.1f} min) diverged={res.diverged}")
print(f"FINAL_VAL_DB {res.log[-1].val_nmse_db:.4f}")
