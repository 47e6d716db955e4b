import numpy as np
import pytest
from scipy.special import erf

from psi_codec.decoder import (ATTENTION, DWCG, DecoderConfig, decode,
                               decoder_forward, dwcg_block, init_decoder_params)
from psi_codec.errors import ConfigError
from psi_codec.nn import bind_params
from psi_codec.tensor import Graph


def test_config_rejects_bad_kind():
    with pytest.raises(ConfigError):
        DecoderConfig(kind="mlp")


def test_config_rejects_even_depthwise_kernel():
    with pytest.raises(ConfigError):
        DecoderConfig(k_dw=4)


def test_config_rejects_attention_head_mismatch():
    with pytest.raises(ConfigError):
        DecoderConfig(kind=ATTENTION, e=30, heads=4)


def test_config_rejects_nonpositive_expansion():
    with pytest.raises(ConfigError):
        DecoderConfig(eta=0)


def _fwd(params, cfg, z_np, ctx=None):
    g = Graph(dtype=np.float64)
    p = bind_params(g, params, trainable=False)
    kw = {} if ctx is None else {"ctx_vec": ctx}
    return decoder_forward(g, p, cfg, g.constant(z_np), **kw).value


# ---------------------------------------------------------------------------
# residual identity at init

def test_gated_conv_block_is_exact_identity_at_init():
    cfg = DecoderConfig()
    params = init_decoder_params(cfg, seed=0)
    g = Graph(dtype=np.float64)
    p = bind_params(g, params, trainable=False)
    x_np = np.random.default_rng(0).normal(size=(2, cfg.t_dec, cfg.e))
    out = dwcg_block(g.constant(x_np), p, "dec.block0", cfg.eta)
    assert np.array_equal(out.value, x_np)


def test_decoder_at_init_reduces_to_expand_head():
    cfg = DecoderConfig()
    params = init_decoder_params(cfg, seed=1)
    z = np.random.default_rng(1).normal(size=(3, cfg.latent_dim))
    full = _fwd(params, cfg, z)
    # shortcut: dense expand, reshape to tokens, per-token linear head
    lat = z @ params["dec.expand.w"].astype(np.float64) + params["dec.expand.b"].astype(np.float64)
    lat = lat.reshape(3, cfg.t_dec, cfg.e)
    flat = lat @ params["dec.head.w"].astype(np.float64) + params["dec.head.b"].astype(np.float64)
    expect = flat.reshape(3, 1, cfg.h, cfg.w)
    assert np.array_equal(full, expect)


def test_all_zero_weights_give_constant_map():
    cfg = DecoderConfig()
    params = init_decoder_params(cfg, seed=2)
    zeroed = {k: np.zeros_like(v) for k, v in params.items()}
    z = np.random.default_rng(2).normal(size=(2, cfg.latent_dim))
    out = _fwd(zeroed, cfg, z)
    assert np.all(out == 0.0)


# ---------------------------------------------------------------------------
# block against an independent numpy implementation

def _np_layer_norm(x, gain, bias, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def _np_gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _np_dwconv(x, kern, bias):
    # x [B,T,E], kern [E,k] odd, zero padding on the token axis
    bsz, t, e = x.shape
    k = kern.shape[1]
    half = k // 2
    padded = np.zeros((bsz, t + 2 * half, e))
    padded[:, half:half + t] = x
    out = np.zeros_like(x)
    for j in range(k):
        out += padded[:, j:j + t] * kern[:, j]
    return out + bias


def test_gated_conv_block_matches_numpy_oracle():
    cfg = DecoderConfig(e=8, k_dw=3, eta=2, n_blocks=1)
    rng = np.random.default_rng(3)
    params = init_decoder_params(cfg, seed=3)
    # wake the residual branch up: overwrite the zero-init projection
    params["dec.block0.down.w"] = rng.normal(size=params["dec.block0.down.w"].shape).astype(np.float32) * 0.3
    params["dec.block0.down.b"] = rng.normal(size=params["dec.block0.down.b"].shape).astype(np.float32) * 0.1
    raw = {k: v.astype(np.float64) for k, v in params.items()}

    x_np = rng.normal(size=(2, cfg.t_dec, cfg.e))
    g = Graph(dtype=np.float64)
    p = bind_params(g, params, trainable=False)
    out = dwcg_block(g.constant(x_np), p, "dec.block0", cfg.eta)

    h = _np_layer_norm(x_np, raw["dec.block0.ln.gain"], raw["dec.block0.ln.bias"])
    h = _np_dwconv(h, raw["dec.block0.dw.k"], raw["dec.block0.dw.b"])
    up = h @ raw["dec.block0.up.w"] + raw["dec.block0.up.b"]
    half = up.shape[-1] // 2
    gated = _np_gelu(up[..., :half]) * (1.0 / (1.0 + np.exp(-up[..., half:])))
    expect = x_np + gated @ raw["dec.block0.down.w"] + raw["dec.block0.down.b"]
    assert np.max(np.abs(out.value - expect)) < 1e-12


# ---------------------------------------------------------------------------
# full decoder paths

def test_decoder_shapes_both_kinds():
    z = np.random.default_rng(4).normal(size=(2, 16))
    for kind in (DWCG, ATTENTION):
        cfg = DecoderConfig(kind=kind)
        params = init_decoder_params(cfg, seed=4)
        out = _fwd(params, cfg, z)
        assert out.shape == (2, 1, cfg.h, cfg.w)
        assert np.all(np.isfinite(out))


def test_attention_decoder_uses_position_table():
    cfg = DecoderConfig(kind=ATTENTION)
    params = init_decoder_params(cfg, seed=5)
    z = np.random.default_rng(5).normal(size=(1, cfg.latent_dim))
    base = _fwd(params, cfg, z)
    params["dec.pos"] = params["dec.pos"] + np.float32(0.5)
    assert not np.allclose(_fwd(params, cfg, z), base)


def test_conditioned_decoder_is_neutral_at_init():
    z = np.random.default_rng(6).normal(size=(2, 16))
    ctx = np.array([0.3, 0.5, 1.0, 0.0])
    plain = DecoderConfig(film=False)
    cond = DecoderConfig(film=True)
    out_plain = _fwd(init_decoder_params(plain, seed=7), plain, z)
    out_cond = _fwd(init_decoder_params(cond, seed=7), cond, z, ctx)
    assert np.array_equal(out_plain, out_cond)


def test_conditioned_decoder_requires_context():
    cfg = DecoderConfig(film=True)
    params = init_decoder_params(cfg, seed=8)
    g = Graph(dtype=np.float64)
    p = bind_params(g, params, trainable=False)
    with pytest.raises(ConfigError):
        decoder_forward(g, p, cfg, g.constant(np.zeros((1, 16))))


def test_conditioned_decoder_responds_once_projections_move():
    cfg = DecoderConfig(film=True)
    params = init_decoder_params(cfg, seed=9)
    rng = np.random.default_rng(9)
    for i in range(cfg.n_blocks):
        params[f"dec.film.gamma{i}.w"] = 0.3 * rng.normal(size=params[f"dec.film.gamma{i}.w"].shape).astype(np.float32)
    z = rng.normal(size=(1, cfg.latent_dim))
    a = _fwd(params, cfg, z, np.array([0.1, 0.2, 1.0, 0.0]))
    b = _fwd(params, cfg, z, np.array([0.9, 0.8, 0.0, 1.0]))
    assert not np.allclose(a, b)


def test_decode_wrapper_returns_map():
    cfg = DecoderConfig()
    params = init_decoder_params(cfg, seed=10)
    z = np.random.default_rng(10).normal(size=cfg.latent_dim)
    out = decode(z, params, cfg)
    assert out.shape == (cfg.h, cfg.w)
    assert out.dtype == np.float64


def test_decoder_rejects_latent_width_mismatch():
    cfg = DecoderConfig()
    params = init_decoder_params(cfg, seed=11)
    g = Graph(dtype=np.float64)
    p = bind_params(g, params, trainable=False)
    with pytest.raises(ConfigError):
        decoder_forward(g, p, cfg, g.constant(np.zeros((1, 7))))
