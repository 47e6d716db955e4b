"""Parameter initialization and small shared building blocks.

Parameters live outside any graph as a plain dict of numpy arrays keyed by
dotted names. Each training step binds them into a fresh Graph. Every
initial value comes from an RngStream labeled by the parameter name, so
initialization is independent of insertion order.
"""

from __future__ import annotations

import numpy as np

from .rng import RngStream
from . import tensor as tz
from .tensor import Graph, Tensor

ParamDict = dict[str, np.ndarray]


class ParamBuilder:
    """Collects named arrays; fan-in symmetric uniform or explicit zeros."""

    def __init__(self, seed: int, dtype=np.float32):
        self.seed = seed
        self.dtype = np.dtype(dtype)
        self.values: ParamDict = {}

    def uniform(self, name: str, shape: tuple, fan_in: int) -> None:
        bound = 1.0 / np.sqrt(float(fan_in))
        stream = RngStream(self.seed, f"init/{name}")
        self.values[name] = stream.uniform(-bound, bound, shape).astype(self.dtype)

    def zeros(self, name: str, shape: tuple) -> None:
        self.values[name] = np.zeros(shape, dtype=self.dtype)

    def dense(self, prefix: str, n_in: int, n_out: int, zero: bool = False) -> None:
        if zero:
            self.zeros(f"{prefix}.w", (n_in, n_out))
            self.zeros(f"{prefix}.b", (n_out,))
        else:
            self.uniform(f"{prefix}.w", (n_in, n_out), fan_in=n_in)
            self.zeros(f"{prefix}.b", (n_out,))

    def layer_norm(self, prefix: str, n: int) -> None:
        self.values[f"{prefix}.gain"] = np.ones(n, dtype=self.dtype)
        self.zeros(f"{prefix}.bias", (n,))


def bind_params(graph: Graph, params: ParamDict, trainable: bool = True) -> dict[str, Tensor]:
    """Register every parameter array on the graph."""
    if trainable:
        return {name: graph.param(name, arr) for name, arr in params.items()}
    return {name: graph.leaf(arr, requires_grad=False, name=name) for name, arr in params.items()}


def mlp2(p: dict[str, Tensor], prefix: str, x: Tensor, kind: str) -> Tensor:
    """Two affine layers with one nonlinearity between, linear output."""
    h = tz.activation(tz.dense(x, p[f"{prefix}.l1.w"], p[f"{prefix}.l1.b"]), kind)
    return tz.dense(h, p[f"{prefix}.l2.w"], p[f"{prefix}.l2.b"])


def param_count(params: ParamDict, prefix: str = "") -> int:
    return int(sum(v.size for k, v in params.items() if k.startswith(prefix)))
