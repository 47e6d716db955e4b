import numpy as np, time, sys
from psi_codec.encoder import EncoderConfig, init_encoder_params
from psi_codec.decoder import DecoderConfig, init_decoder_params
from psi_codec.psi_data import DatasetConfig, generate_dataset
from psi_codec.training import TrainConfig, train

lr0 = float(sys.argv[1]); epochs = int(sys.argv[2]); bs = int(sys.argv[3])
ds = generate_dataset(DatasetConfig(count=8192, seed=11))
ecfg, dcfg = EncoderConfig(), DecoderConfig()
ep = init_encoder_params(ecfg, 1)
dp = init_decoder_params(dcfg, 1)
cfg = TrainConfig(epochs=epochs, batch_size=bs, lr0=lr0, seed=1,
                  snr_lo_db=5.0, snr_hi_db=20.0, rate_mode="fixed", rate_fixed=0.5)
t0 = time.time()
res = train(ds, cfg, ecfg, dcfg, ep, dp, log_every=5)
for row in res.log:
    print(f"epoch {row.epoch:4d} lr {row.lr:.2e} train {row.train_nmse_db:7.2f} val {row.val_nmse_db:7.2f} dB", flush=True)
print(f"total {time.time()-t0:.0f}s diverged={res.diverged}")
