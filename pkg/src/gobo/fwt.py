"""Flat weight tensor files (".fwt").

Layout: magic "FWT1", then rows and cols as unsigned 32-bit little-endian,
then rows*cols float32 values little-endian, row-major.  This is the input
side of the toolchain; quantized output goes to ".gobo" containers.
"""

import struct

import numpy as np

from .errors import BadMagic, TruncatedStream

MAGIC = b"FWT1"
_HEADER = struct.Struct("<4sII")


def write_fwt(path, weights) -> None:
    w = np.ascontiguousarray(np.asarray(weights, dtype="<f4"))
    if w.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got {w.ndim}-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, w.shape[0], w.shape[1]))
        fh.write(w.tobytes())


def read_fwt(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TruncatedStream("file shorter than the fwt header")
        magic, rows, cols = _HEADER.unpack(head)
        if magic != MAGIC:
            raise BadMagic(f"not a fwt file (magic {magic!r})")
        body = fh.read(rows * cols * 4)
        if len(body) != rows * cols * 4:
            raise TruncatedStream(f"expected {rows * cols} float32 values")
        return np.frombuffer(body, dtype="<f4").reshape(rows, cols).copy()
