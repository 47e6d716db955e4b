"""Deterministic, labeled random streams.

Every stochastic operation in the package draws from an RngStream addressed
by (seed, label). Streams are built on the Philox counter-based generator, so
the same (seed, label) pair yields the same sequence on every platform and
in any execution order. Labels are free-form strings; by convention they are
slash-separated paths such as "train/epoch/17" or "eval/trial/3".
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

_ALGORITHM = "philox-4x64"
_MASK64 = (1 << 64) - 1


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream:
    """A named, replayable random stream.

    The Philox key is (seed, sha256(label)[:8]); two streams with different
    labels are statistically independent, and a stream can be reconstructed
    from its (seed, label) address alone.
    """

    algorithm = _ALGORITHM

    def __init__(self, seed: int, label: str = "root"):
        self.seed = int(seed) & _MASK64
        self.label = label
        key = np.array([self.seed, _label_key(label)], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, sublabel: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{sublabel}")

    # -- draws ------------------------------------------------------------

    def normal(self, shape=(), dtype=np.float64) -> np.ndarray:
        return self._gen.standard_normal(size=shape, dtype=np.float64).astype(dtype, copy=False)

    def uniform(self, low: float, high: float, shape=(), dtype=np.float64) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape).astype(dtype, copy=False)

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Draw integers in [low, high)."""
        return self._gen.integers(low, high, size=shape)

    def choice(self, options, p=None):
        return self._gen.choice(options, p=p)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def complex_normal(self, shape=()) -> np.ndarray:
        """Circularly symmetric complex Gaussian with unit variance."""
        re = self._gen.standard_normal(size=shape)
        im = self._gen.standard_normal(size=shape)
        return (re + 1j * im) / np.sqrt(2.0)

    # -- state ------------------------------------------------------------

    def state_blob(self) -> bytes:
        """Serialize the stream address; streams are reconstructed, not resumed."""
        return json.dumps(
            {"algorithm": self.algorithm, "seed": self.seed, "label": self.label}
        ).encode("utf-8")

    @classmethod
    def from_state_blob(cls, blob: bytes) -> "RngStream":
        obj = json.loads(blob.decode("utf-8"))
        return cls(obj["seed"], obj["label"])
