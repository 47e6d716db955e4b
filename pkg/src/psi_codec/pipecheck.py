"""Finite-difference verification of the op set and the assembled pipeline.

The pipeline check flattens every trainable parameter of a small model into
one vector, runs encode -> rate mask -> link -> decode -> loss as a scalar
function of that vector, and compares the reverse-mode gradient against
central differences coordinate by coordinate at 64-bit precision. Sizes are
chosen so the whole sweep stays well under the two-minute budget.
"""

from __future__ import annotations

import numpy as np

from .decoder import DecoderConfig, decoder_forward, init_decoder_params
from .encoder import EncoderConfig, encoder_forward, init_encoder_params
from .gradcheck import finite_difference_gradient, max_relative_error
from .nn import ParamDict
from .psi_data import DatasetConfig, generate_dataset
from .rate_link import LinkConfig, apply_mask, prefix_mask, transmit_graph
from .training import nmse_loss
from . import tensor as tz
from .tensor import Graph

TINY_ENC = EncoderConfig(h=4, w=4, patch=2, d=8, depth=1, heads=2, prompt_tokens=2,
                         d_p=8, latent_dim=4, stem_channels=4)
TINY_DEC = DecoderConfig(h=4, w=4, e=8, k_dw=3, eta=2, n_blocks=1, latent_dim=4, d_p=8)


def _flatten(params: ParamDict) -> tuple[np.ndarray, list]:
    names = sorted(params)
    layout = [(n, params[n].shape, params[n].size) for n in names]
    vec = np.concatenate([params[n].astype(np.float64).ravel() for n in names])
    return vec, layout


def _unflatten(vec: np.ndarray, layout: list) -> ParamDict:
    out = {}
    pos = 0
    for name, shape, size in layout:
        out[name] = vec[pos:pos + size].reshape(shape)
        pos += size
    return out


def _pipeline(params: ParamDict, x_np: np.ndarray, ctx: np.ndarray,
              trainable: bool) -> tuple[Graph, "tz.Tensor"]:
    g = Graph(dtype=np.float64)
    bound = {}
    for name, arr in params.items():
        bound[name] = g.param(name, arr) if trainable else g.constant(arr)
    z = encoder_forward(g, bound, TINY_ENC, g.constant(x_np), ctx)
    m = prefix_mask(0.5, TINY_ENC.latent_dim)
    z_r = apply_mask(z, m)
    # noiseless limit: the link gain path stays in the graph, noise is zero
    z_t = transmit_graph(z_r, m, LinkConfig(snr_db=300.0), rng=None)
    x_hat = decoder_forward(g, bound, TINY_DEC, z_t, ctx if TINY_DEC.film else None)
    return g, nmse_loss(x_hat, x_np)


def full_pipeline_check(h: float = 1e-5) -> float:
    """Worst relative error between reverse-mode and central differences."""
    enc = init_encoder_params(TINY_ENC, seed=5, dtype=np.float64)
    dec = init_decoder_params(TINY_DEC, seed=5, dtype=np.float64)
    # zero-initialized conditioning paths hide their gradients; perturb them
    jitter = np.random.default_rng(5)
    params = {**enc, **dec}
    for name, arr in params.items():
        if arr.size and not np.any(arr):
            params[name] = jitter.normal(scale=0.05, size=arr.shape)
    x_np = generate_dataset(DatasetConfig(h=4, w=4, m=16, count=2, seed=5)).normalized_array()
    ctx = np.array([0.4, 0.5, 1.0, 0.0])

    theta0, layout = _flatten(params)
    g, loss = _pipeline(_unflatten(theta0, layout), x_np, ctx, trainable=True)
    grads = g.param_grads(g.backward(loss))
    analytic = np.concatenate([grads[n].ravel() for n, _, _ in layout])

    def f(vec: np.ndarray) -> float:
        _, node = _pipeline(_unflatten(vec, layout), x_np, ctx, trainable=False)
        return float(node.value)

    numeric = finite_difference_gradient(f, theta0, h=h)
    return max_relative_error(analytic, numeric)


def op_suite_check(h: float = 1e-5) -> float:
    """Condensed per-op sweep; every differentiable core op appears once."""
    rng = np.random.default_rng(9)
    worst = 0.0

    def check(build, *thetas):
        nonlocal worst
        theta0 = np.concatenate([t.ravel() for t in thetas])
        shapes = [t.shape for t in thetas]

        def split(vec):
            out, pos = [], 0
            for shape in shapes:
                size = int(np.prod(shape)) if shape else 1
                out.append(vec[pos:pos + size].reshape(shape))
                pos += size
            return out

        g = Graph(dtype=np.float64)
        parts = [g.param(f"t{i}", p) for i, p in enumerate(split(theta0))]
        loss = build(g, *parts)
        grads = g.param_grads(g.backward(loss))
        analytic = np.concatenate([grads[f"t{i}"].ravel() for i in range(len(thetas))])

        def f(vec):
            g2 = Graph(dtype=np.float64)
            parts2 = [g2.constant(p) for p in split(vec)]
            return float(build(g2, *parts2).value)

        numeric = finite_difference_gradient(f, theta0, h=h)
        worst = max(worst, max_relative_error(analytic, numeric))

    # weighting constants are fixed up front so f(theta) is a pure function
    w35, w36, w44 = rng.normal(size=(3, 5)), rng.normal(size=(3, 6)), rng.normal(size=(4, 4))
    w25, w423 = rng.normal(size=(2, 5)), rng.normal(size=(4, 2, 3))

    check(lambda g, xx, ww, bb: tz.sum_all(tz.dense(xx, ww, bb)),
          rng.normal(size=(3, 4)), rng.normal(size=(4, 5)) * 0.4, rng.normal(size=(5,)) * 0.1)
    check(lambda g, aa, bb: tz.sum_all(tz.matmul(aa, bb)),
          rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 4, 2)))
    check(lambda g, xx: tz.sum_all(tz.softmax_rows(xx) * g.constant(w35)),
          rng.normal(size=(3, 5)))
    check(lambda g, xx, gg, bb: tz.sum_all(tz.layer_norm(xx, gg, bb) * g.constant(w36)),
          rng.normal(size=(3, 6)), 1.0 + 0.1 * rng.normal(size=(6,)), 0.1 * rng.normal(size=(6,)))
    for kind in ("relu", "gelu", "sigmoid"):
        shifted = rng.normal(size=(4, 4)) + 0.3  # keep clear of the relu kink
        check(lambda g, xx, k=kind: tz.sum_all(tz.activation(xx, k) * g.constant(w44)), shifted)
    check(lambda g, xx, kk, bb: tz.sum_all(tz.conv2d(xx, kk, bb, stride=1, padding=1)),
          rng.normal(size=(2, 2, 4, 4)), rng.normal(size=(3, 2, 3, 3)) * 0.3, rng.normal(size=(3,)) * 0.1)
    check(lambda g, xx, kk, bb: tz.sum_all(tz.depthwise_conv1d(xx, kk, bb)),
          rng.normal(size=(2, 5, 3)), rng.normal(size=(3, 3)) * 0.3, rng.normal(size=(3,)) * 0.1)
    check(lambda g, xx: tz.sum_all(tz.slice_axis(tz.swapaxes(tz.reshape(xx, (2, 6)), 0, 1), 0, 1, 5)),
          rng.normal(size=(3, 4)))
    check(lambda g, aa, bb: tz.sum_all(tz.concat([aa, bb], axis=1) * g.constant(w25)),
          rng.normal(size=(2, 2)), rng.normal(size=(2, 3)))
    check(lambda g, xx: tz.sum_all(tz.broadcast_to(xx, (4, 2, 3)) * g.constant(w423)),
          rng.normal(size=(1, 2, 3)))
    check(lambda g, xx: tz.sum_all(tz.sum_axis(xx * xx, 1)), rng.normal(size=(3, 4)))
    check(lambda g, aa, bb: tz.sum_all(tz.scale(aa, 1.7) + tz.add_scalar(aa * bb - bb, 0.3)),
          rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    return worst
