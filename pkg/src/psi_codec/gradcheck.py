"""Central finite-difference oracle for gradient verification.

The oracle never touches the reverse-mode machinery: it re-evaluates the
scalar function at perturbed parameter vectors, so agreement between the two
is evidence of correctness for both.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_difference_gradient(f: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h.

    f must be deterministic under fixed RNG; theta is flattened and each
    coordinate is perturbed independently at float64.
    """
    theta = np.asarray(theta, dtype=np.float64)
    flat = theta.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(theta))
        flat[i] = orig - h
        fm = float(f(theta))
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(theta.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced to the maximum.

    The absolute floor keeps near-zero gradient entries from inflating the
    relative error.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if a.shape != n.shape:
        raise ValueError(f"gradient shapes differ: {a.shape} vs {n.shape}")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def check_gradients(
    f: Callable[[np.ndarray], float],
    theta: np.ndarray,
    analytic: np.ndarray,
    h: float = 1e-5,
    floor: float = 1e-7,
) -> float:
    """Convenience wrapper returning the max relative error vs the oracle."""
    numeric = finite_difference_gradient(f, theta, h)
    return max_relative_error(analytic, numeric, floor)
