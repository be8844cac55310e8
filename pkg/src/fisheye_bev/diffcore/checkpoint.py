"""Binary checkpoint serialization.

Format: magic string "F2BEVCKPT1", then one record per parameter:
name length (u32 LE), utf-8 name, dtype code (u8: 0 = float32,
1 = float64), rank (u8), dims (u32 LE each), raw little-endian data.
"""

from __future__ import annotations

import struct

import numpy as np

from .tensor import Tensor

CHECKPOINT_MAGIC = b"F2BEVCKPT1"

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_checkpoint(path, params: dict[str, Tensor]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name, p in params.items():
            raw = name.encode("utf-8")
            data = np.ascontiguousarray(p.data)
            code = _CODE_OF[np.dtype(data.dtype)]
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BB", code, data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.astype(_DTYPE_CODES[code], copy=False).tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    blob = open(path, "rb").read()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a checkpoint file (bad magic)")
    pos = len(CHECKPOINT_MAGIC)
    out: dict[str, np.ndarray] = {}
    while pos < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        code, rank = struct.unpack_from("<BB", blob, pos)
        pos += 2
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        dtype = _DTYPE_CODES[code]
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
        pos += count * dtype.itemsize
        out[name] = arr.reshape(dims).copy()
    return out
