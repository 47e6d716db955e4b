"""End-to-end training of the conditioned autoencoder.

Each batch shares one sampled side-info triple (snr, channel type, rate) and
is drawn from the matching channel-type pool, so the conditioning context
always describes the data it rides with. The loss is the batch-mean NMSE in
normalized map units. All randomness is derived from labeled streams keyed
by (seed, epoch), which makes runs repeatable and checkpoints resumable to
the bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, UsageError
from .nn import ParamDict, bind_params
from .encoder import EncoderConfig, SideInfo, encode_side_info, encoder_forward
from .decoder import DecoderConfig, decoder_forward
from .psi_data import RAYLEIGH, RICIAN, Dataset, PSIMap, normalize_psi
from .rate_link import LinkConfig, apply_mask, prefix_mask, transmit, transmit_graph
from .rng import RngStream
from . import tensor as tz
from .tensor import Graph, Tensor

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


# ---------------------------------------------------------------------------
# metrics

def nmse(t: np.ndarray, t_hat: np.ndarray) -> float:
    """Normalized squared error ||t - t_hat||^2 / ||t||^2 for one map."""
    t = np.asarray(t, dtype=np.float64)
    t_hat = np.asarray(t_hat, dtype=np.float64)
    if t.shape != t_hat.shape:
        raise ShapeError(f"nmse: shapes {list(t.shape)} vs {list(t_hat.shape)}")
    denom = float(np.sum(t * t))
    if denom == 0.0:
        return 1.0 if np.allclose(t_hat, 0) else float("inf")
    return float(np.sum((t - t_hat) ** 2) / denom)


def nmse_batch(t: np.ndarray, t_hat: np.ndarray) -> np.ndarray:
    """Per-sample linear NMSE for stacks shaped [B, ...]."""
    t = np.asarray(t, dtype=np.float64)
    t_hat = np.asarray(t_hat, dtype=np.float64)
    if t.shape != t_hat.shape:
        raise ShapeError(f"nmse_batch: shapes {list(t.shape)} vs {list(t_hat.shape)}")
    axes = tuple(range(1, t.ndim))
    denom = np.sum(t * t, axis=axes)
    denom = np.where(denom == 0.0, 1.0, denom)
    return np.sum((t - t_hat) ** 2, axis=axes) / denom


def nmse_db(linear_values) -> float:
    """Average linear NMSE over trials, then convert to dB."""
    vals = np.asarray(linear_values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise UsageError("nmse_db: need at least one trial")
    if np.any(vals < 0):
        raise UsageError("nmse_db: linear NMSE values must be >= 0")
    return float(10.0 * np.log10(np.mean(vals)))


def nmse_loss(x_hat: Tensor, x_np: np.ndarray) -> Tensor:
    """Batch-mean NMSE as a scalar graph node; targets enter as constants."""
    g = x_hat.graph
    x_np = np.asarray(x_np, dtype=np.float64)
    bsz = x_np.shape[0]
    axes = tuple(range(1, x_np.ndim))
    denom = np.sum(x_np * x_np, axis=axes)
    denom = np.maximum(denom, 1e-12)
    wgt = (1.0 / (bsz * denom)).reshape((bsz,) + (1,) * (x_np.ndim - 1))
    diff = x_hat + tz.scale(g.constant(x_np), -1.0)
    return tz.sum_all(diff * diff * g.constant(wgt))


def cosine_lr(epoch: int, epochs: int, lr0: float, floor: float = 0.0) -> float:
    if not 0 <= epoch <= epochs:
        raise ConfigError(f"cosine_lr: epoch {epoch} outside [0, {epochs}]")
    return floor + 0.5 * (lr0 - floor) * (1.0 + math.cos(math.pi * epoch / epochs))


# ---------------------------------------------------------------------------
# optimizer

@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamDict, grads: dict, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for name, grad in grads.items():
        p = params[name]
        if grad.shape != p.shape:
            raise ShapeError(f"adam_step: grad {list(grad.shape)} vs param {list(p.shape)} for {name}")
        g32 = grad.astype(p.dtype, copy=False)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = v
        else:
            v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g32
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g32 * g32
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


# ---------------------------------------------------------------------------
# context sampling

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr0: float = 1e-4
    lr_floor: float = 0.0
    seed: int = 0
    snr_lo_db: float = 5.0
    snr_hi_db: float = 20.0
    rate_mode: str = "fixed"          # fixed | uniform
    rate_fixed: float = 0.5
    rates: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    mix_rayleigh: float | None = None  # None: use the dataset's empirical mix
    noiseless: bool = False
    hc_mode: str = "identity"
    val_frac: float = 0.1
    precision: str = "f32"

    def __post_init__(self):
        if self.rate_mode not in ("fixed", "uniform"):
            raise ConfigError(f"TrainConfig: unknown rate_mode {self.rate_mode!r}")
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"TrainConfig: precision must be f32 or f64, got {self.precision!r}")
        if self.snr_hi_db < self.snr_lo_db:
            raise ConfigError("TrainConfig: snr_hi_db < snr_lo_db")
        if not 0.0 <= self.val_frac < 1.0:
            raise ConfigError("TrainConfig: val_frac must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("TrainConfig: epochs and batch_size must be >= 1")
        if not 0.0 < self.rate_fixed <= 1.0:
            raise ConfigError(f"TrainConfig: rate_fixed must be in (0, 1], got {self.rate_fixed}")
        if not self.rates or any(not 0.0 < r <= 1.0 for r in self.rates):
            raise ConfigError("TrainConfig: rates must be nonempty with values in (0, 1]")

    @property
    def snr_range(self) -> tuple[float, float]:
        # degenerate range still needs a valid normalization interval
        if self.snr_hi_db == self.snr_lo_db:
            return (self.snr_lo_db - 1.0, self.snr_hi_db + 1.0)
        return (self.snr_lo_db, self.snr_hi_db)

    @property
    def dtype(self):
        return np.float32 if self.precision == "f32" else np.float64


def sample_context(cfg: TrainConfig, rng: RngStream, mix_rayleigh: float | None = None) -> SideInfo:
    """Draw one (snr, chan_type, rate) triple for a batch."""
    mix = cfg.mix_rayleigh if mix_rayleigh is None else mix_rayleigh
    if mix is None:
        mix = 0.5
    snr = float(rng.uniform(cfg.snr_lo_db, cfg.snr_hi_db, ()))
    chan = RAYLEIGH if float(rng.uniform(0.0, 1.0, ())) < mix else RICIAN
    if cfg.rate_mode == "fixed":
        rate = cfg.rate_fixed
    else:
        rate = float(cfg.rates[int(rng.integers(0, len(cfg.rates), ()))])
    return SideInfo(snr_db=snr, chan_type=chan, rate=rate)


# ---------------------------------------------------------------------------
# data plumbing

def split_indices(n: int, val_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/validation split by a seeded permutation."""
    perm = RngStream(seed, "split").permutation(n)
    n_val = int(round(n * val_frac))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


class _Pool:
    """Cycles through a fixed index set in per-epoch shuffled order."""

    def __init__(self, indices: np.ndarray, rng: RngStream):
        self.indices = np.asarray(indices)
        self.rng = rng
        self.order = rng.permutation(len(self.indices))
        self.cursor = 0

    def take(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.int64)
        filled = 0
        while filled < n:
            avail = len(self.order) - self.cursor
            if avail == 0:
                self.order = self.rng.permutation(len(self.indices))
                self.cursor = 0
                avail = len(self.order)
            take = min(avail, n - filled)
            out[filled:filled + take] = self.indices[self.order[self.cursor:self.cursor + take]]
            self.cursor += take
            filled += take
        return out


@dataclass
class EpochRow:
    epoch: int
    lr: float
    train_nmse_db: float
    val_nmse_db: float


@dataclass
class TrainResult:
    enc_params: ParamDict
    dec_params: ParamDict
    opt_state: AdamState
    log: list
    diverged: bool = False
    epochs_run: int = 0


def _effective_mix(cfg: TrainConfig, types: np.ndarray) -> float:
    mix = cfg.mix_rayleigh
    if mix is None:
        mix = float(np.mean(types == RAYLEIGH))
    n_ray = int(np.sum(types == RAYLEIGH))
    if mix > 0.0 and n_ray == 0:
        raise ConfigError("TrainConfig: rayleigh mix requested but dataset has no rayleigh samples")
    if mix < 1.0 and n_ray == len(types):
        raise ConfigError("TrainConfig: rician mix requested but dataset has no rician samples")
    return mix


def _forward_batch(g: Graph, pe, pd, ecfg, dcfg, x_np, s: SideInfo, cfg: TrainConfig,
                   noise_rng: RngStream | None) -> Tensor:
    x = g.constant(x_np)
    ctx = encode_side_info(s, cfg.snr_range)
    z = encoder_forward(g, pe, ecfg, x, ctx)
    m = prefix_mask(s.rate, ecfg.latent_dim)
    z_r = apply_mask(z, m)
    if cfg.noiseless:
        z_t = z_r
    else:
        link = LinkConfig(snr_db=s.snr_db, hc_mode=cfg.hc_mode)
        z_t = transmit_graph(z_r, m, link, noise_rng)
    dec_ctx = ctx if dcfg.film else None
    return decoder_forward(g, pd, dcfg, z_t, dec_ctx)


def train(dataset: Dataset, cfg: TrainConfig, ecfg: EncoderConfig, dcfg: DecoderConfig,
          enc_params: ParamDict, dec_params: ParamDict,
          opt_state: AdamState | None = None, start_epoch: int = 0,
          log_every: int = 1, stop_epoch: int | None = None) -> TrainResult:
    """Run the batch loop from start_epoch to stop_epoch (default cfg.epochs).

    Per epoch, per batch: sample a context, draw a matching-type batch,
    encode, mask, transmit, decode, take the NMSE gradient step under the
    cosine schedule. Aborts on non-finite loss, returning the parameters
    from the last completed epoch.

    The schedule horizon is always cfg.epochs; stop_epoch only truncates the
    loop, so a run stopped at epoch k and resumed with start_epoch=k retraces
    the uninterrupted run exactly.
    """
    if len(dataset.samples) == 0:
        raise ConfigError("train: dataset is empty")
    if ecfg.h != dataset.cfg.h or ecfg.w != dataset.cfg.w:
        raise ConfigError("train: encoder grid does not match dataset grid")
    if ecfg.latent_dim != dcfg.latent_dim:
        raise ConfigError("train: encoder and decoder latent dims differ")

    x_all = dataset.normalized_array()
    types = np.asarray(dataset.chan_types)
    train_idx, val_idx = split_indices(len(dataset.samples), cfg.val_frac, cfg.seed)
    mix = _effective_mix(cfg, types[train_idx] if len(train_idx) else types)

    opt = opt_state if opt_state is not None else AdamState()
    n_train = len(train_idx)
    batch = min(cfg.batch_size, n_train)
    n_batches = max(n_train // batch, 1)
    last_epoch = cfg.epochs if stop_epoch is None else min(stop_epoch, cfg.epochs)
    if not 0 <= start_epoch <= last_epoch:
        raise ConfigError(f"train: start_epoch {start_epoch} outside [0, {last_epoch}]")
    log: list[EpochRow] = []
    snap_enc = {k: v.copy() for k, v in enc_params.items()}
    snap_dec = {k: v.copy() for k, v in dec_params.items()}

    for epoch in range(start_epoch, last_epoch):
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0, cfg.lr_floor)
        ctx_rng = RngStream(cfg.seed, f"train/epoch/{epoch}/ctx")
        pool_ray = _Pool(train_idx[types[train_idx] == RAYLEIGH],
                         RngStream(cfg.seed, f"train/epoch/{epoch}/pool/ray"))
        pool_ric = _Pool(train_idx[types[train_idx] == RICIAN],
                         RngStream(cfg.seed, f"train/epoch/{epoch}/pool/ric"))
        noise_rng = RngStream(cfg.seed, f"train/epoch/{epoch}/link")
        train_losses = []
        diverged = False
        for b in range(n_batches):
            s = sample_context(cfg, ctx_rng, mix_rayleigh=mix)
            pool = pool_ray if s.chan_type == RAYLEIGH else pool_ric
            idx = pool.take(batch)
            g = Graph(dtype=cfg.dtype, check_finite=False)
            pe = bind_params(g, enc_params)
            pd = bind_params(g, dec_params)
            x_np = x_all[idx]
            x_hat = _forward_batch(g, pe, pd, ecfg, dcfg, x_np, s, cfg, noise_rng)
            loss = nmse_loss(x_hat, x_np)
            loss_val = float(loss.value)
            if not math.isfinite(loss_val):
                diverged = True
                break
            train_losses.append(loss_val)
            grads = g.param_grads(g.backward(loss))
            # one merged view; updates are in place so both dicts see them
            adam_step({**enc_params, **dec_params}, grads, opt, lr)
        if diverged:
            enc_params.clear(); enc_params.update(snap_enc)
            dec_params.clear(); dec_params.update(snap_dec)
            return TrainResult(enc_params, dec_params, opt, log, diverged=True, epochs_run=epoch)
        snap_enc = {k: v.copy() for k, v in enc_params.items()}
        snap_dec = {k: v.copy() for k, v in dec_params.items()}
        if (epoch + 1) % log_every == 0 or epoch + 1 == last_epoch:
            val_db = evaluate_split(x_all, types, val_idx, cfg, ecfg, dcfg,
                                    enc_params, dec_params, epoch) if len(val_idx) else float("nan")
            log.append(EpochRow(epoch=epoch, lr=lr, train_nmse_db=nmse_db(train_losses),
                                val_nmse_db=val_db))
    return TrainResult(enc_params, dec_params, opt, log, epochs_run=last_epoch)


def evaluate_split(x_all: np.ndarray, types: np.ndarray, idx: np.ndarray, cfg: TrainConfig,
                   ecfg: EncoderConfig, dcfg: DecoderConfig,
                   enc_params: ParamDict, dec_params: ParamDict, epoch: int = 0,
                   batch: int = 256) -> float:
    """Held-out NMSE (dB) under the training context distribution."""
    rng = RngStream(cfg.seed, f"val/epoch/{epoch}")
    vals = []
    for chan in (RAYLEIGH, RICIAN):
        sub = idx[types[idx] == chan]
        if len(sub) == 0:
            continue
        for lo in range(0, len(sub), batch):
            part = sub[lo:lo + batch]
            s = sample_context(cfg, rng.child(f"ctx/{chan}/{lo}"), mix_rayleigh=1.0 if chan == RAYLEIGH else 0.0)
            g = Graph(dtype=cfg.dtype, check_finite=False)
            pe = bind_params(g, enc_params, trainable=False)
            pd = bind_params(g, dec_params, trainable=False)
            x_np = x_all[part]
            x_hat = _forward_batch(g, pe, pd, ecfg, dcfg, x_np, s, cfg,
                                   rng.child(f"link/{chan}/{lo}"))
            vals.append(nmse_batch(x_np, x_hat.value))
    return nmse_db(np.concatenate(vals))


def infer(t_map: PSIMap, s: SideInfo, enc_params: ParamDict, dec_params: ParamDict,
          ecfg: EncoderConfig, dcfg: DecoderConfig, snr_range: tuple[float, float],
          link: LinkConfig | None = None, rng: RngStream | None = None) -> np.ndarray:
    """Full single-map pass; returns the reconstructed normalized map [H, W]."""
    g = Graph(dtype=np.float64)
    pe = bind_params(g, enc_params, trainable=False)
    pd = bind_params(g, dec_params, trainable=False)
    x = g.constant(normalize_psi(t_map)[None])
    ctx = encode_side_info(s, snr_range)
    z = encoder_forward(g, pe, ecfg, x, ctx)
    m = prefix_mask(s.rate, ecfg.latent_dim)
    z_r = apply_mask(z.value[0], m)
    z_t = z_r if link is None else transmit(z_r, m, link, rng)
    g2 = Graph(dtype=np.float64)
    pd2 = bind_params(g2, dec_params, trainable=False)
    zt = g2.constant(z_t[None])
    dec_ctx = ctx if dcfg.film else None
    x_hat = decoder_forward(g2, pd2, dcfg, zt, dec_ctx)
    return x_hat.value[0, 0].copy()
