"""Reverse-mode differentiation on numpy arrays.

A Graph is a define-by-run tape: every operation appends a node holding the
op id, input node ids, the computed value, and whatever the backward rule
needs. Because an operation can only consume tensors that already exist,
insertion order is a topological order, and the backward pass is a single
reverse sweep that visits each node once. Gradient accumulation over fan-out
is summation.

Arrays are contiguous row-major, float32 by default; verification suites run
the same code at float64 via Graph(dtype=np.float64).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import ConfigError, NumericError, ShapeError, UsageError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Node:
    __slots__ = ("op", "input_ids", "value", "ctx", "needs_grad", "name")

    def __init__(self, op: str, input_ids: tuple, value: np.ndarray, ctx, needs_grad: bool, name=None):
        self.op = op
        self.input_ids = input_ids
        self.value = value
        self.ctx = ctx
        self.needs_grad = needs_grad
        self.name = name


class Tensor:
    """A handle to one node of a Graph."""

    __slots__ = ("graph", "node_id")

    def __init__(self, graph: "Graph", node_id: int):
        self.graph = graph
        self.node_id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.graph.nodes[self.node_id].value

    @property
    def shape(self) -> tuple:
        return self.value.shape

    # Arithmetic lifts plain arrays/scalars to constant nodes.
    def __add__(self, other):
        return add(self, self.graph.as_tensor(other))

    def __radd__(self, other):
        return add(self.graph.as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, self.graph.as_tensor(other))

    def __rsub__(self, other):
        return sub(self.graph.as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, self.graph.as_tensor(other))

    def __rmul__(self, other):
        return mul(self.graph.as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, self.graph.as_tensor(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __repr__(self):
        node = self.graph.nodes[self.node_id]
        return f"Tensor(op={node.op!r}, shape={self.value.shape}, grad={node.needs_grad})"


class Graph:
    """Tape of operations; single-threaded per instance.

    check_finite scans every op output and raises NumericError on NaN/Inf.
    It is on by default; the training loop disables it for speed and guards
    the loss value instead.
    """

    def __init__(self, dtype=np.float32, check_finite: bool = True):
        if dtype not in (np.float32, np.float64):
            raise ConfigError(f"unsupported dtype {dtype!r}")
        self.dtype = np.dtype(dtype)
        self.check_finite = check_finite
        self.nodes: list[Node] = []
        self.params: dict[str, int] = {}

    # -- node creation -----------------------------------------------------

    def _append(self, op: str, input_ids: tuple, value: np.ndarray, ctx, needs_grad: bool, name=None) -> Tensor:
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite values produced by op {op!r}")
        self.nodes.append(Node(op, input_ids, value, ctx, needs_grad, name))
        return Tensor(self, len(self.nodes) - 1)

    def constant(self, array) -> Tensor:
        value = np.ascontiguousarray(array, dtype=self.dtype)
        return self._append("leaf", (), value, None, needs_grad=False)

    def leaf(self, array, requires_grad: bool = False, name=None) -> Tensor:
        value = np.ascontiguousarray(array, dtype=self.dtype)
        return self._append("leaf", (), value, None, needs_grad=requires_grad, name=name)

    def param(self, name: str, array) -> Tensor:
        t = self.leaf(array, requires_grad=True, name=name)
        self.params[name] = t.node_id
        return t

    def as_tensor(self, obj) -> Tensor:
        if isinstance(obj, Tensor):
            if obj.graph is not self:
                raise UsageError("tensors belong to different graphs")
            return obj
        return self.constant(np.asarray(obj))

    # -- backward ----------------------------------------------------------

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Reverse sweep from a scalar loss; returns node id -> gradient.

        The returned map covers every node on a differentiable path from the
        loss, including all parameter leaves reachable from it.
        """
        if loss.graph is not self:
            raise UsageError("loss tensor belongs to a different graph")
        loss_node = self.nodes[loss.node_id]
        if loss_node.value.size != 1:
            raise UsageError(f"loss must be scalar, got shape {loss_node.value.shape}")

        grads: dict[int, np.ndarray] = {
            loss.node_id: np.ones_like(loss_node.value)
        }
        for nid in range(loss.node_id, -1, -1):
            if nid not in grads:
                continue
            node = self.nodes[nid]
            if node.op == "leaf" or not node.needs_grad:
                continue
            out_grad = grads[nid]
            rule = _BACKWARD[node.op]
            for input_id, contrib in rule(self, node, out_grad):
                if contrib is None:
                    continue
                if input_id in grads:
                    grads[input_id] += contrib
                else:
                    grads[input_id] = contrib
        return grads

    def param_grads(self, grads: dict[int, np.ndarray]) -> dict[str, np.ndarray]:
        out = {}
        for name, nid in self.params.items():
            g = grads.get(nid)
            if g is None:
                g = np.zeros_like(self.nodes[nid].value)
            out[name] = g
        return out


def backward(graph: Graph, loss_node: int) -> dict[int, np.ndarray]:
    """Functional form of Graph.backward keyed by node id."""
    return graph.backward(Tensor(graph, loss_node))


# ---------------------------------------------------------------------------
# helpers

def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _needs(*tensors: Tensor) -> bool:
    return any(t.graph.nodes[t.node_id].needs_grad for t in tensors)


def _vals(*tensors: Tensor):
    return tuple(t.graph.nodes[t.node_id].value for t in tensors)


_BACKWARD: dict[str, Callable] = {}


def _register(op: str):
    def deco(fn):
        _BACKWARD[op] = fn
        return fn
    return deco


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    g = a.graph
    va, vb = _vals(a, b)
    return g._append("add", (a.node_id, b.node_id), va + vb, (va.shape, vb.shape), _needs(a, b))


@_register("add")
def _add_bwd(g, node, out_grad):
    sa, sb = node.ctx
    ia, ib = node.input_ids
    out = []
    if g.nodes[ia].needs_grad:
        out.append((ia, _unbroadcast(out_grad, sa)))
    if g.nodes[ib].needs_grad:
        out.append((ib, _unbroadcast(out_grad.copy() if ia == ib else out_grad, sb)))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    g = a.graph
    va, vb = _vals(a, b)
    return g._append("sub", (a.node_id, b.node_id), va - vb, (va.shape, vb.shape), _needs(a, b))


@_register("sub")
def _sub_bwd(g, node, out_grad):
    sa, sb = node.ctx
    ia, ib = node.input_ids
    out = []
    if g.nodes[ia].needs_grad:
        out.append((ia, _unbroadcast(out_grad, sa)))
    if g.nodes[ib].needs_grad:
        out.append((ib, _unbroadcast(-out_grad, sb)))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    g = a.graph
    va, vb = _vals(a, b)
    return g._append("mul", (a.node_id, b.node_id), va * vb, None, _needs(a, b))


@_register("mul")
def _mul_bwd(g, node, out_grad):
    ia, ib = node.input_ids
    va = g.nodes[ia].value
    vb = g.nodes[ib].value
    out = []
    if g.nodes[ia].needs_grad:
        out.append((ia, _unbroadcast(out_grad * vb, va.shape)))
    if g.nodes[ib].needs_grad:
        out.append((ib, _unbroadcast(out_grad * va, vb.shape)))
    return out


def scale(x: Tensor, c: float) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    return g._append("scale", (x.node_id,), vx * g.dtype.type(c), float(c), _needs(x))


@_register("scale")
def _scale_bwd(g, node, out_grad):
    return [(node.input_ids[0], out_grad * g.dtype.type(node.ctx))]


def add_scalar(x: Tensor, c: float) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    return g._append("add_scalar", (x.node_id,), vx + g.dtype.type(c), None, _needs(x))


@_register("add_scalar")
def _add_scalar_bwd(g, node, out_grad):
    return [(node.input_ids[0], out_grad)]


# ---------------------------------------------------------------------------
# dense / matmul

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Y = XW + b over the last axis, broadcast over leading axes."""
    g = x.graph
    vx, vw, vb = _vals(x, w, b)
    if vw.ndim != 2 or vx.shape[-1] != vw.shape[0]:
        raise ShapeError(f"dense: X{list(vx.shape)} incompatible with W{list(vw.shape)}")
    if vb.shape != (vw.shape[1],):
        raise ShapeError(f"dense: bias{list(vb.shape)} does not match W{list(vw.shape)}")
    m, n = vw.shape
    x2 = vx.reshape(-1, m)
    y = (x2 @ vw + vb).reshape(vx.shape[:-1] + (n,))
    return g._append("dense", (x.node_id, w.node_id, b.node_id), y, None, _needs(x, w, b))


@_register("dense")
def _dense_bwd(g, node, out_grad):
    ix, iw, ib = node.input_ids
    vx = g.nodes[ix].value
    vw = g.nodes[iw].value
    m, n = vw.shape
    g2 = out_grad.reshape(-1, n)
    out = []
    if g.nodes[ix].needs_grad:
        out.append((ix, (g2 @ vw.T).reshape(vx.shape)))
    if g.nodes[iw].needs_grad:
        out.append((iw, vx.reshape(-1, m).T @ g2))
    if g.nodes[ib].needs_grad:
        out.append((ib, g2.sum(axis=0)))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting on leading axes."""
    g = a.graph
    va, vb = _vals(a, b)
    if va.shape[-1] != vb.shape[-2]:
        raise ShapeError(f"matmul: {list(va.shape)} @ {list(vb.shape)}")
    return g._append("matmul", (a.node_id, b.node_id), va @ vb, None, _needs(a, b))


@_register("matmul")
def _matmul_bwd(g, node, out_grad):
    ia, ib = node.input_ids
    va = g.nodes[ia].value
    vb = g.nodes[ib].value
    out = []
    if g.nodes[ia].needs_grad:
        out.append((ia, _unbroadcast(out_grad @ vb.swapaxes(-1, -2), va.shape)))
    if g.nodes[ib].needs_grad:
        out.append((ib, _unbroadcast(va.swapaxes(-1, -2) @ out_grad, vb.shape)))
    return out


# ---------------------------------------------------------------------------
# normalization / softmax / activations

def softmax_rows(x: Tensor) -> Tensor:
    """Row-stable softmax over the last axis (max subtraction)."""
    g = x.graph
    (vx,) = _vals(x)
    shifted = vx - vx.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    return g._append("softmax_rows", (x.node_id,), y, None, _needs(x))


@_register("softmax_rows")
def _softmax_bwd(g, node, out_grad):
    y = node.value
    dot = (out_grad * y).sum(axis=-1, keepdims=True)
    return [(node.input_ids[0], (out_grad - dot) * y)]


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance over the last axis, then elementwise affine."""
    g = x.graph
    vx, vgain, vbias = _vals(x, gain, bias)
    n = vx.shape[-1]
    if n < 2:
        raise ConfigError(f"layer_norm needs at least 2 features, got {n}")
    if vgain.shape != (n,) or vbias.shape != (n,):
        raise ShapeError(f"layer_norm affine shapes {list(vgain.shape)}/{list(vbias.shape)} do not match n={n}")
    mu = vx.mean(axis=-1, keepdims=True)
    xc = vx - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + g.dtype.type(eps))
    xhat = xc * inv
    y = xhat * vgain + vbias
    return g._append(
        "layer_norm", (x.node_id, gain.node_id, bias.node_id), y, (xhat, inv), _needs(x, gain, bias)
    )


@_register("layer_norm")
def _layer_norm_bwd(g, node, out_grad):
    ix, igain, ibias = node.input_ids
    xhat, inv = node.ctx
    vgain = g.nodes[igain].value
    n = xhat.shape[-1]
    out = []
    if g.nodes[ix].needs_grad:
        gh = out_grad * vgain
        mean_gh = gh.mean(axis=-1, keepdims=True)
        mean_gh_xhat = (gh * xhat).mean(axis=-1, keepdims=True)
        out.append((ix, inv * (gh - mean_gh - xhat * mean_gh_xhat)))
    lead = tuple(range(out_grad.ndim - 1))
    if g.nodes[igain].needs_grad:
        out.append((igain, (out_grad * xhat).sum(axis=lead)))
    if g.nodes[ibias].needs_grad:
        out.append((ibias, out_grad.sum(axis=lead)))
    return out


def activation(x: Tensor, kind: str) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    if kind == "relu":
        y = np.maximum(vx, 0)
        ctx = None
    elif kind == "sigmoid":
        y = 1.0 / (1.0 + np.exp(-vx))
        ctx = y
    elif kind == "gelu":
        # Exact Gaussian-CDF form: 0.5 * x * (1 + erf(x / sqrt(2))).
        cdf = vx * _INV_SQRT2
        erf(cdf, out=cdf)
        cdf += 1.0
        cdf *= 0.5
        y = (vx * cdf).astype(g.dtype, copy=False)
        ctx = cdf
    else:
        raise ConfigError(f"unknown activation kind {kind!r}")
    return g._append(f"act_{kind}", (x.node_id,), y, ctx, _needs(x))


@_register("act_relu")
def _relu_bwd(g, node, out_grad):
    vx = g.nodes[node.input_ids[0]].value
    return [(node.input_ids[0], out_grad * (vx > 0))]


@_register("act_sigmoid")
def _sigmoid_bwd(g, node, out_grad):
    y = node.ctx
    return [(node.input_ids[0], out_grad * y * (1.0 - y))]


@_register("act_gelu")
def _gelu_bwd(g, node, out_grad):
    vx = g.nodes[node.input_ids[0]].value
    cdf = node.ctx
    t = vx * vx
    t *= -0.5
    np.exp(t, out=t)
    t *= _INV_SQRT_2PI
    t *= vx
    t += cdf
    t *= out_grad
    return [(node.input_ids[0], t)]


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def gelu(x: Tensor) -> Tensor:
    return activation(x, "gelu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


# ---------------------------------------------------------------------------
# convolutions

def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation plus bias; accepts [C,H,W] or [B,C,H,W]."""
    g = x.graph
    vx, vk, vb = _vals(x, kernel, bias)
    squeeze = vx.ndim == 3
    if squeeze:
        vx = vx[None]
    if vx.ndim != 4 or vk.ndim != 4:
        raise ShapeError(f"conv2d: input rank {vx.ndim}, kernel rank {vk.ndim}")
    bsz, cin, h, w = vx.shape
    cout, cin_k, kh, kw = vk.shape
    if cin != cin_k:
        raise ShapeError(f"conv2d: input channels {cin} != kernel channels {cin_k}")
    if vb.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {list(vb.shape)} != [{cout}]")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ConfigError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    if (h + 2 * padding - kh) % stride or (w + 2 * padding - kw) % stride:
        raise ConfigError(
            f"conv2d: non-integral output size for input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding}"
        )
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    xp = np.pad(vx, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else vx
    y = np.broadcast_to(vb[None, :, None, None], (bsz, cout, ho, wo)).copy()
    for di in range(kh):
        for dj in range(kw):
            view = xp[:, :, di : di + stride * ho : stride, dj : dj + stride * wo : stride]
            y += np.einsum("bcij,oc->boij", view, vk[:, :, di, dj], optimize=True)
    if squeeze:
        y = y[0]
    ctx = (stride, padding, squeeze, (bsz, cin, h, w), (ho, wo))
    return g._append("conv2d", (x.node_id, kernel.node_id, bias.node_id), y, ctx, _needs(x, kernel, bias))


@_register("conv2d")
def _conv2d_bwd(g, node, out_grad):
    ix, ik, ib = node.input_ids
    stride, padding, squeeze, xshape, (ho, wo) = node.ctx
    bsz, cin, h, w = xshape
    vk = g.nodes[ik].value
    cout, _, kh, kw = vk.shape
    go = out_grad[None] if squeeze else out_grad
    vx = g.nodes[ix].value
    if squeeze:
        vx = vx[None]
    xp = np.pad(vx, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else vx

    out = []
    need_x = g.nodes[ix].needs_grad
    need_k = g.nodes[ik].needs_grad
    gxp = np.zeros_like(xp) if need_x else None
    gk = np.zeros_like(vk) if need_k else None
    for di in range(kh):
        for dj in range(kw):
            view = xp[:, :, di : di + stride * ho : stride, dj : dj + stride * wo : stride]
            if need_k:
                gk[:, :, di, dj] = np.einsum("boij,bcij->oc", go, view, optimize=True)
            if need_x:
                gxp[:, :, di : di + stride * ho : stride, dj : dj + stride * wo : stride] += np.einsum(
                    "boij,oc->bcij", go, vk[:, :, di, dj], optimize=True
                )
    if need_x:
        gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        out.append((ix, gx[0] if squeeze else gx))
    if need_k:
        out.append((ik, gk))
    if g.nodes[ib].needs_grad:
        out.append((ib, go.sum(axis=(0, 2, 3))))
    return out


def depthwise_conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Per-channel 1D convolution over the token axis.

    x: [T, E] or [B, T, E]; kernel: [E, k] with k odd; symmetric zero padding
    (k-1)/2 keeps the sequence length.
    """
    g = x.graph
    vx, vk, vb = _vals(x, kernel, bias)
    if vk.ndim != 2:
        raise ShapeError(f"depthwise_conv1d: kernel rank {vk.ndim}, expected 2")
    e, k = vk.shape
    if k % 2 == 0:
        raise ConfigError(f"depthwise_conv1d: kernel size must be odd, got {k}")
    if vx.shape[-1] != e:
        raise ShapeError(f"depthwise_conv1d: input channels {vx.shape[-1]} != kernel channels {e}")
    if vb.shape != (e,):
        raise ShapeError(f"depthwise_conv1d: bias shape {list(vb.shape)} != [{e}]")
    squeeze = vx.ndim == 2
    if squeeze:
        vx = vx[None]
    t = vx.shape[-2]
    pad = (k - 1) // 2
    xp = np.pad(vx, ((0, 0), (pad, pad), (0, 0)))
    y = np.broadcast_to(vb, vx.shape).copy()
    for tap in range(k):
        y += xp[:, tap : tap + t, :] * vk[:, tap]
    if squeeze:
        y = y[0]
    ctx = (squeeze, t, pad)
    return g._append("dwconv1d", (x.node_id, kernel.node_id, bias.node_id), y, ctx, _needs(x, kernel, bias))


@_register("dwconv1d")
def _dwconv1d_bwd(g, node, out_grad):
    ix, ik, ib = node.input_ids
    squeeze, t, pad = node.ctx
    vk = g.nodes[ik].value
    e, k = vk.shape
    go = out_grad[None] if squeeze else out_grad
    vx = g.nodes[ix].value
    if squeeze:
        vx = vx[None]
    xp = np.pad(vx, ((0, 0), (pad, pad), (0, 0)))

    out = []
    need_x = g.nodes[ix].needs_grad
    need_k = g.nodes[ik].needs_grad
    gxp = np.zeros_like(xp) if need_x else None
    gk = np.zeros_like(vk) if need_k else None
    for tap in range(k):
        if need_k:
            gk[:, tap] = (go * xp[:, tap : tap + t, :]).sum(axis=(0, 1))
        if need_x:
            gxp[:, tap : tap + t, :] += go * vk[:, tap]
    if need_x:
        gx = gxp[:, pad : pad + t, :]
        out.append((ix, gx[0] if squeeze else gx))
    if need_k:
        out.append((ik, gk))
    if g.nodes[ib].needs_grad:
        out.append((ib, go.sum(axis=tuple(range(go.ndim - 1)))))
    return out


# ---------------------------------------------------------------------------
# shape plumbing

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    y = vx.reshape(tuple(shape))
    return g._append("reshape", (x.node_id,), y, vx.shape, _needs(x))


@_register("reshape")
def _reshape_bwd(g, node, out_grad):
    return [(node.input_ids[0], out_grad.reshape(node.ctx))]


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    y = np.ascontiguousarray(vx.swapaxes(a, b))
    return g._append("swapaxes", (x.node_id,), y, (a, b), _needs(x))


@_register("swapaxes")
def _swapaxes_bwd(g, node, out_grad):
    a, b = node.ctx
    return [(node.input_ids[0], np.ascontiguousarray(out_grad.swapaxes(a, b)))]


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    g = tensors[0].graph
    vals = [t.value for t in tensors]
    y = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    ids = tuple(t.node_id for t in tensors)
    return g._append("concat", ids, y, (axis, sizes), _needs(*tensors))


@_register("concat")
def _concat_bwd(g, node, out_grad):
    axis, sizes = node.ctx
    out = []
    offset = 0
    for input_id, size in zip(node.input_ids, sizes):
        if g.nodes[input_id].needs_grad:
            sl = [slice(None)] * out_grad.ndim
            sl[axis] = slice(offset, offset + size)
            out.append((input_id, np.ascontiguousarray(out_grad[tuple(sl)])))
        offset += size
    return out


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    sl = [slice(None)] * vx.ndim
    sl[axis] = slice(start, stop)
    y = np.ascontiguousarray(vx[tuple(sl)])
    return g._append("slice", (x.node_id,), y, (axis, start, stop, vx.shape), _needs(x))


@_register("slice")
def _slice_bwd(g, node, out_grad):
    axis, start, stop, xshape = node.ctx
    gx = np.zeros(xshape, dtype=out_grad.dtype)
    sl = [slice(None)] * len(xshape)
    sl[axis] = slice(start, stop)
    gx[tuple(sl)] = out_grad
    return [(node.input_ids[0], gx)]


# ---------------------------------------------------------------------------
# reductions

def broadcast_to(x: Tensor, shape) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    y = np.broadcast_to(vx, tuple(shape)).astype(g.dtype, copy=True)
    return g._append("broadcast", (x.node_id,), y, vx.shape, _needs(x))


@_register("broadcast")
def _broadcast_bwd(g, node, out_grad):
    return [(node.input_ids[0], _unbroadcast(out_grad, node.ctx))]


def sum_all(x: Tensor) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    y = np.asarray(vx.sum(), dtype=g.dtype)
    return g._append("sum_all", (x.node_id,), y, vx.shape, _needs(x))


@_register("sum_all")
def _sum_all_bwd(g, node, out_grad):
    return [(node.input_ids[0], np.broadcast_to(out_grad, node.ctx).astype(out_grad.dtype, copy=True))]


def sum_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    g = x.graph
    (vx,) = _vals(x)
    y = vx.sum(axis=axis, keepdims=keepdims)
    return g._append("sum_axis", (x.node_id,), y, (axis, keepdims, vx.shape), _needs(x))


@_register("sum_axis")
def _sum_axis_bwd(g, node, out_grad):
    axis, keepdims, xshape = node.ctx
    if not keepdims:
        out_grad = np.expand_dims(out_grad, axis)
    return [(node.input_ids[0], np.broadcast_to(out_grad, xshape).astype(out_grad.dtype, copy=True))]
