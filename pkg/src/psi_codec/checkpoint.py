"""Binary checkpoint format for model and optimizer state.

Layout, little-endian throughout:

    magic "PSCK" | u32 version | u32 len + config text (utf-8)
    | u32 count + named tensors            (model parameters)
    | u32 count + named tensors            (optimizer moments)
    | u32 len + state blob (json: seed, epoch, adam step)
    | u32 crc32 of everything above

Each named tensor is u32 name length, name bytes, u32 rank, rank x u32 dims,
then a float32 payload. Payloads are stored as float32 regardless of the
in-memory dtype, matching the training precision.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import BadMagicError, BadVersionError, CrcMismatchError, TruncatedFileError
from .nn import ParamDict
from .training import AdamState

_MAGIC = b"PSCK"
_VERSION = 1
_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    config_text: str
    params: ParamDict
    opt_tensors: dict
    state: dict  # seed / epoch / adam_step


def _pack_tensors(out: bytearray, tensors: dict) -> None:
    out += _U32.pack(len(tensors))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        nb = name.encode("utf-8")
        out += _U32.pack(len(nb))
        out += nb
        out += _U32.pack(arr.ndim)
        for dim in arr.shape:
            out += _U32.pack(dim)
        out += arr.tobytes()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(
                f"checkpoint ends at byte {len(self.buf)}, needed {self.pos + n}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def _read_tensors(r: _Reader) -> dict:
    out = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape)
        out[name] = data.astype(np.float32).copy()
    return out


def save_checkpoint(path: str, config_text: str, params: ParamDict,
                    opt: AdamState | None, seed: int, epoch: int) -> None:
    out = bytearray()
    out += _MAGIC
    out += _U32.pack(_VERSION)
    cb = config_text.encode("utf-8")
    out += _U32.pack(len(cb))
    out += cb
    _pack_tensors(out, params)
    opt_tensors = {}
    adam_step = 0
    if opt is not None:
        adam_step = opt.step
        for name, arr in opt.m.items():
            opt_tensors[f"m.{name}"] = arr
        for name, arr in opt.v.items():
            opt_tensors[f"v.{name}"] = arr
    _pack_tensors(out, opt_tensors)
    blob = json.dumps({"seed": seed, "epoch": epoch, "adam_step": adam_step}).encode("utf-8")
    out += _U32.pack(len(blob))
    out += blob
    out += _U32.pack(zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(out))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12:
        raise TruncatedFileError(f"checkpoint is only {len(buf)} bytes")
    if buf[:4] != _MAGIC:
        raise BadMagicError(f"expected {_MAGIC!r}, found {buf[:4]!r}")
    stored_crc = _U32.unpack(buf[-4:])[0]
    actual_crc = zlib.crc32(buf[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CrcMismatchError(f"crc stored {stored_crc:#010x} != computed {actual_crc:#010x}")
    r = _Reader(buf[:-4])
    r.take(4)
    version = r.u32()
    if version != _VERSION:
        raise BadVersionError(f"checkpoint version {version}, expected {_VERSION}")
    config_text = r.take(r.u32()).decode("utf-8")
    params = _read_tensors(r)
    opt_tensors = _read_tensors(r)
    state = json.loads(r.take(r.u32()).decode("utf-8"))
    if r.pos != len(r.buf):
        raise TruncatedFileError(f"{len(r.buf) - r.pos} trailing bytes after state blob")
    return Checkpoint(config_text=config_text, params=params, opt_tensors=opt_tensors, state=state)


def restore_adam(ckpt: Checkpoint) -> AdamState:
    opt = AdamState(step=int(ckpt.state.get("adam_step", 0)))
    for name, arr in ckpt.opt_tensors.items():
        if name.startswith("m."):
            opt.m[name[2:]] = arr.copy()
        elif name.startswith("v."):
            opt.v[name[2:]] = arr.copy()
    return opt


def split_model_params(params: ParamDict) -> tuple[ParamDict, ParamDict]:
    """Separate a merged tensor dict into encoder and decoder halves."""
    enc = {k: v for k, v in params.items() if k.startswith("enc.")}
    dec = {k: v for k, v in params.items() if k.startswith("dec.")}
    return enc, dec
