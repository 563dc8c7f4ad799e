"""Bit-exact compressed container codec (".gobo" streams).

Layout, all multi-byte fields little-endian:

  Header      32-byte fixed part: magic "GOBO", version u8, variant u8,
              bits u8, reserved u8, rows u32, cols u32, padded_rows u32,
              padded_cols u32, centroid_count u16, alignment u16,
              outlier_offset u32; then the float32 centroid table; then
              zero padding so Quantized Weights starts on an alignment
              boundary (default 64 bytes).
  Quantized   one index per padded position, bit-packed LSB-first in block
  Weights     order (see below), zero-padded to the alignment.
  Outliers    sequential variant: per submatrix, u8 count then count
              triplets.  random-access variant: u32 cumulative count array
              C[0..n_sms] (C[0] = 0), then all triplets flat.
              A triplet is 5 bytes: B | (W << 4), then V as float32.

The matrix is zero-padded to multiples of 16 and tiled into 16x16
submatrices (SMs), walked row-major.  Inside an SM the stream follows
diagonal blocks: block b holds positions (i, (i - b) mod 16) for i in
0..15, and the weight offset W within the block is the row i.  Outlier
triplets sort by (B, W) inside their SM, which is exactly stream order, so
one forward cursor suffices for streaming decompression.  Padding positions
always encode index 0 and are never outliers; outlier positions carry a
dummy index 0 in the stream.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    ContainerError,
    CountMismatch,
    TooManyOutliersInSM,
    TruncatedStream,
)
from .types import OutlierSet, QuantizedLayer, check_bits

MAGIC = b"GOBO"
VERSION = 1
SM_DIM = 16
SM_AREA = SM_DIM * SM_DIM

VARIANT_SEQUENTIAL = 0
VARIANT_RANDOM_ACCESS = 1
_VARIANTS = {"sequential": VARIANT_SEQUENTIAL, "random-access": VARIANT_RANDOM_ACCESS}
_VARIANT_NAMES = {v: k for k, v in _VARIANTS.items()}

_FIXED_HEADER = struct.Struct("<4s4B4I2HI")
_TRIPLET_DTYPE = np.dtype([("bw", "u1"), ("v", "<f4")])

# stream position o = B*16 + W maps to the in-SM flat offset W*16 + col
_O = np.arange(SM_AREA)
_BLOCK_B = _O // SM_DIM
_BLOCK_W = _O % SM_DIM
_BLOCK_COL = (_BLOCK_W - _BLOCK_B) % SM_DIM


def align_up(n: int, alignment: int) -> int:
    return (n + alignment - 1) // alignment * alignment


@dataclass(frozen=True)
class ContainerGeometry:
    """Tiling parameters of the format: 16x16 SMs of 16-weight diagonal
    blocks, plus the byte alignment of the Quantized Weights section."""

    sm_rows: int = SM_DIM
    sm_cols: int = SM_DIM
    block_size: int = SM_DIM
    alignment: int = 64

    def __post_init__(self):
        if self.sm_rows != SM_DIM or self.sm_cols != SM_DIM or self.block_size != SM_DIM:
            raise ContainerError("the container format fixes 16x16 SMs of 16-weight blocks")
        if self.alignment < 1 or self.alignment & (self.alignment - 1):
            raise ContainerError("alignment must be a power of two")

    def padded_dims(self, rows: int, cols: int):
        return align_up(rows, self.sm_rows), align_up(cols, self.sm_cols)

    def sm_grid(self, rows: int, cols: int):
        pr, pc = self.padded_dims(rows, cols)
        return pr // self.sm_rows, pc // self.sm_cols


DEFAULT_GEOMETRY = ContainerGeometry()


@dataclass
class Header:
    version: int
    variant: int
    bits: int
    rows: int
    cols: int
    padded_rows: int
    padded_cols: int
    centroid_count: int
    alignment: int
    outlier_offset: int
    centroid_table: np.ndarray

    @property
    def variant_name(self) -> str:
        return _VARIANT_NAMES[self.variant]

    @property
    def header_block_size(self) -> int:
        return align_up(_FIXED_HEADER.size + 4 * self.centroid_count, self.alignment)

    @property
    def index_data_size(self) -> int:
        # exact payload; the section is then padded to the alignment
        return (self.padded_rows * self.padded_cols * self.bits + 7) // 8


def stream_positions(rows: int, cols: int, geometry: ContainerGeometry = DEFAULT_GEOMETRY):
    """All padded positions in container stream order.

    Returns (r, c, in_true_region) as flat arrays of length
    padded_rows*padded_cols.  Tests and the streaming decoder use this as
    the single source of truth for the block order.
    """
    n_sm_r, n_sm_c = geometry.sm_grid(rows, cols)
    sm = np.arange(n_sm_r * n_sm_c)
    base_r = (sm // n_sm_c) * SM_DIM
    base_c = (sm % n_sm_c) * SM_DIM
    r = (base_r[:, None] + _BLOCK_W[None, :]).ravel()
    c = (base_c[:, None] + _BLOCK_COL[None, :]).ravel()
    return r, c, (r < rows) & (c < cols)


def position_to_triplet(r, c, n_sm_c: int):
    """Matrix position -> (sm, B, W) under the diagonal block layout."""
    w = r % SM_DIM
    b = (w - c % SM_DIM) % SM_DIM
    sm = (r // SM_DIM) * n_sm_c + c // SM_DIM
    return sm, b, w


def triplet_to_position(sm, b, w, n_sm_c: int):
    """(sm, B, W) -> matrix position; inverse of position_to_triplet."""
    r = (sm // n_sm_c) * SM_DIM + w
    c = (sm % n_sm_c) * SM_DIM + (w - b) % SM_DIM
    return r, c


def _pack_indexes(values: np.ndarray, bits: int) -> bytes:
    # LSB-first: value 0 occupies the low bits of byte 0
    expanded = np.unpackbits(values[:, None], axis=1, bitorder="little")[:, :bits]
    return np.packbits(expanded.ravel(), bitorder="little").tobytes()

def _unpack_indexes(data: bytes, n: int, bits: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    expanded = np.unpackbits(raw, bitorder="little", count=n * bits).reshape(n, bits)
    return np.packbits(expanded, axis=1, bitorder="little")[:, 0]


def _sorted_triplets(layer: QuantizedLayer, n_sm_c: int):
    """Outliers as (sm, packed (B,W,V) records) in per-SM stream order."""
    ol = layer.outliers
    sm, b, w = position_to_triplet(ol.rows.astype(np.int64), ol.cols.astype(np.int64), n_sm_c)
    order = np.lexsort((w, b, sm))
    recs = np.empty(len(ol), dtype=_TRIPLET_DTYPE)
    recs["bw"] = (b[order] & 0xF) | (w[order] << 4)
    recs["v"] = ol.values[order]
    return sm[order], recs


def encode(layer: QuantizedLayer, geometry: ContainerGeometry = DEFAULT_GEOMETRY,
           variant="sequential") -> bytes:
    """Serialize a layer; pure and deterministic, so identical layers give
    identical bytes."""
    if isinstance(variant, str):
        try:
            variant = _VARIANTS[variant]
        except KeyError:
            raise ContainerError(f"unknown variant {variant!r}") from None
    if variant not in _VARIANT_NAMES:
        raise ContainerError(f"unknown variant code {variant}")
    check_bits(layer.bits)
    layer.validate()
    k = 1 << layer.bits
    pr, pc = geometry.padded_dims(layer.rows, layer.cols)
    n_sm_r, n_sm_c = geometry.sm_grid(layer.rows, layer.cols)
    n_sms = n_sm_r * n_sm_c

    padded = np.zeros((pr, pc), dtype=np.uint8)
    padded[: layer.rows, : layer.cols] = layer.indexes
    r, c, _ = stream_positions(layer.rows, layer.cols, geometry)
    index_data = _pack_indexes(padded[r, c], layer.bits)

    sm_ids, recs = _sorted_triplets(layer, n_sm_c)
    counts = np.bincount(sm_ids, minlength=n_sms)
    if counts.size and counts.max(initial=0) > 255:
        worst = int(counts.argmax())
        raise TooManyOutliersInSM(f"SM {worst} holds {int(counts.max())} outliers, limit is 255")

    if variant == VARIANT_SEQUENTIAL:
        bounds = np.concatenate(([0], np.cumsum(counts)))
        chunks = []
        rec_bytes = recs.tobytes()
        for i in range(n_sms):
            chunks.append(bytes([counts[i]]))
            chunks.append(rec_bytes[bounds[i] * 5: bounds[i + 1] * 5])
        outlier_section = b"".join(chunks)
    else:
        cum = np.zeros(n_sms + 1, dtype="<u4")
        cum[1:] = np.cumsum(counts)
        outlier_section = cum.tobytes() + recs.tobytes()

    table = layer.centroid_table.astype("<f4").tobytes()
    header_block = align_up(_FIXED_HEADER.size + len(table), geometry.alignment)
    index_section = align_up(len(index_data), geometry.alignment)
    outlier_offset = header_block + index_section

    out = bytearray(outlier_offset)
    _FIXED_HEADER.pack_into(
        out, 0, MAGIC, VERSION, variant, layer.bits, 0,
        layer.rows, layer.cols, pr, pc, k, geometry.alignment, outlier_offset,
    )
    out[_FIXED_HEADER.size: _FIXED_HEADER.size + len(table)] = table
    out[header_block: header_block + len(index_data)] = index_data
    out += outlier_section
    return bytes(out)


def read_header(data: bytes) -> Header:
    if len(data) < _FIXED_HEADER.size:
        raise TruncatedStream("stream shorter than the fixed header")
    magic, version, variant, bits, _, rows, cols, pr, pc, k, alignment, ol_off = \
        _FIXED_HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadMagic(f"unsupported container version {version}")
    if variant not in _VARIANT_NAMES:
        raise BadMagic(f"unknown layout variant {variant}")
    check_bits(bits)
    if k != 1 << bits:
        raise CountMismatch(f"centroid count {k} does not match {bits}b indexes")
    if alignment < 1 or alignment & (alignment - 1):
        raise CountMismatch(f"alignment {alignment} is not a power of two")
    if rows < 1 or cols < 1 or pr != align_up(rows, SM_DIM) or pc != align_up(cols, SM_DIM):
        raise CountMismatch("padded dimensions disagree with true dimensions")
    end = _FIXED_HEADER.size + 4 * k
    if len(data) < end:
        raise TruncatedStream("stream ends inside the centroid table")
    table = np.frombuffer(data, dtype="<f4", count=k, offset=_FIXED_HEADER.size).copy()
    if not np.all(np.isfinite(table)) or np.any(np.diff(table) < 0):
        raise CountMismatch("centroid table must be finite and ascending")
    return Header(version, variant, bits, rows, cols, pr, pc, k, alignment, ol_off, table)


def _parse_outliers(data: bytes, hdr: Header, n_sms: int):
    """Returns (sm_ids, b, w, v) arrays parsed from the outlier section."""
    pos = hdr.outlier_offset
    if hdr.variant == VARIANT_SEQUENTIAL:
        sm_ids, raw = [], []
        for i in range(n_sms):
            if pos + 1 > len(data):
                raise TruncatedStream(f"stream ends before SM {i}'s outlier count")
            count = data[pos]
            pos += 1
            if pos + 5 * count > len(data):
                raise TruncatedStream(f"stream ends inside SM {i}'s outlier records")
            raw.append(np.frombuffer(data, dtype=_TRIPLET_DTYPE, count=count, offset=pos))
            sm_ids.append(np.full(count, i, dtype=np.int64))
            pos += 5 * count
        recs = np.concatenate(raw) if raw else np.empty(0, dtype=_TRIPLET_DTYPE)
        sm = np.concatenate(sm_ids) if sm_ids else np.empty(0, dtype=np.int64)
    else:
        if pos + 4 * (n_sms + 1) > len(data):
            raise TruncatedStream("stream ends inside the cumulative count array")
        cum = np.frombuffer(data, dtype="<u4", count=n_sms + 1, offset=pos).astype(np.int64)
        pos += 4 * (n_sms + 1)
        if cum[0] != 0:
            raise CountMismatch("cumulative count array must start at zero")
        if np.any(np.diff(cum) < 0):
            raise CountMismatch("cumulative count array must be non-decreasing")
        total = int(cum[-1])
        if pos + 5 * total > len(data):
            raise TruncatedStream("stream ends inside the outlier records")
        recs = np.frombuffer(data, dtype=_TRIPLET_DTYPE, count=total, offset=pos)
        sm = np.repeat(np.arange(n_sms, dtype=np.int64), np.diff(cum))
        pos += 5 * total
    if pos != len(data):
        raise CountMismatch(f"{len(data) - pos} trailing bytes after the outlier section")
    b = (recs["bw"] & 0xF).astype(np.int64)
    w = (recs["bw"] >> 4).astype(np.int64)
    return sm, b, w, recs["v"].copy()


def decode(data: bytes, geometry: ContainerGeometry = None) -> QuantizedLayer:
    """Inverse of encode over the true (unpadded) region.

    Quantizer diagnostics (fit, histories) are not stored in the container,
    so the returned layer carries their defaults.
    """
    hdr = read_header(data)
    geometry = ContainerGeometry(alignment=hdr.alignment) if geometry is None else geometry
    if geometry.alignment != hdr.alignment:
        raise CountMismatch("geometry alignment disagrees with the header")
    n_sm_r, n_sm_c = hdr.padded_rows // SM_DIM, hdr.padded_cols // SM_DIM
    n_sms = n_sm_r * n_sm_c

    index_start = hdr.header_block_size
    expected_offset = index_start + align_up(hdr.index_data_size, hdr.alignment)
    if hdr.outlier_offset != expected_offset:
        raise CountMismatch("outlier offset disagrees with the declared geometry")
    if len(data) < hdr.outlier_offset:
        raise TruncatedStream("stream ends inside the quantized weights section")

    n_padded = hdr.padded_rows * hdr.padded_cols
    stream = _unpack_indexes(data[index_start: index_start + hdr.index_data_size],
                             n_padded, hdr.bits)
    if stream.max(initial=0) >= hdr.centroid_count:
        raise CountMismatch(f"index stream value out of range for {hdr.bits}b")
    r, c, true_mask = stream_positions(hdr.rows, hdr.cols, geometry)
    if np.any(stream[~true_mask] != 0):
        raise CountMismatch("padding positions must encode index 0")
    indexes = np.zeros((hdr.rows, hdr.cols), dtype=np.uint8)
    indexes[r[true_mask], c[true_mask]] = stream[true_mask]

    sm, b, w, values = _parse_outliers(data, hdr, n_sms)
    orow, ocol = triplet_to_position(sm, b, w, n_sm_c)
    outliers = OutlierSet.from_positions(orow, ocol, values)
    outliers.check_against(hdr.rows, hdr.cols)
    if len(outliers) and np.any(indexes[outliers.rows, outliers.cols] != 0):
        raise CountMismatch("outlier positions must carry the dummy index 0")

    layer = QuantizedLayer(
        rows=hdr.rows, cols=hdr.cols, bits=hdr.bits, indexes=indexes,
        centroid_table=hdr.centroid_table.astype(np.float32), outliers=outliers,
    )
    layer.validate()
    return layer


def stream_decode(data: bytes, emit) -> None:
    """Streaming decompression: call emit(value) once per true-region weight,
    in block order.

    Runs two cursors over the container: the index stream feeding centroid
    lookups, and the outlier stream whose next record either matches the
    current position (overwrite, at most one per emitted weight) or waits.
    Output order equals dequantize(decode(data)) reordered to block order.
    """
    hdr = read_header(data)
    geometry = ContainerGeometry(alignment=hdr.alignment)
    n_sm_c = hdr.padded_cols // SM_DIM
    n_sms = (hdr.padded_rows // SM_DIM) * n_sm_c
    index_start = hdr.header_block_size
    if len(data) < hdr.outlier_offset:
        raise TruncatedStream("stream ends inside the quantized weights section")
    n_padded = hdr.padded_rows * hdr.padded_cols
    stream = _unpack_indexes(data[index_start: index_start + hdr.index_data_size],
                             n_padded, hdr.bits)
    table = hdr.centroid_table.astype(np.float32)

    osm, ob, ow, ovals = _parse_outliers(data, hdr, n_sms)
    okey = osm * SM_AREA + ob * SM_DIM + ow  # stream position of each record
    if np.any(np.diff(okey) <= 0):
        raise CountMismatch("outlier records out of stream order")
    _, _, true_mask = stream_positions(hdr.rows, hdr.cols, geometry)

    cursor = 0
    n_outliers = len(okey)
    for pos in range(n_padded):
        idx = stream[pos]
        if not true_mask[pos]:
            continue
        value = table[idx]
        if cursor < n_outliers and okey[cursor] == pos:
            value = np.float32(ovals[cursor])
            cursor += 1
        emit(value)
    if cursor != n_outliers:
        raise CountMismatch("outlier records point at padding positions")


def measure_compression(layer: QuantizedLayer, geometry: ContainerGeometry = DEFAULT_GEOMETRY,
                        variant="sequential") -> dict:
    """Size accounting for the actual encoding of a layer."""
    data = encode(layer, geometry, variant)
    total_bits = 8 * len(data)
    true_bits = 32 * layer.rows * layer.cols
    return {
        "total_bits": total_bits,
        "ratio_vs_fp32": true_bits / total_bits,
        "no_outlier_bound": 32.0 / layer.bits,
        "per_weight_bits": total_bits / (layer.rows * layer.cols),
    }


def analytic_bits(rows: int, cols: int, bits: int, n_outliers: int, sm_dim: int,
                  alignment: int = 64, variant="sequential") -> int:
    """Container size from pure arithmetic, for SM sizes the format itself
    does not support (the SM-size sweep).  For sm_dim=16 this must equal the
    encoded size exactly, which the test suite pins."""
    pr, pc = align_up(rows, sm_dim), align_up(cols, sm_dim)
    n_sms = (pr // sm_dim) * (pc // sm_dim)
    header = align_up(_FIXED_HEADER.size + 4 * (1 << bits), alignment)
    index = align_up((pr * pc * bits + 7) // 8, alignment)
    if isinstance(variant, str):
        variant = _VARIANTS[variant]
    if variant == VARIANT_SEQUENTIAL:
        outlier = n_sms + 5 * n_outliers
    else:
        outlier = 4 * (n_sms + 1) + 5 * n_outliers
    return 8 * (header + index + outlier)


def sweep_sm_sizes(layer: QuantizedLayer, sm_sizes=(16, 64, 256, 1024),
                   alignment: int = 64, variant="sequential") -> list:
    """Compression ratio as a function of SM area (weights per submatrix).

    Only SM=256 (16x16) is a real container; other points use the analytic
    accounting with the same header, alignment, count, and triplet costs.
    """
    out = []
    for area in sm_sizes:
        d = int(round(area ** 0.5))
        if d * d != area:
            raise ContainerError(f"SM size {area} is not a square")
        bits_total = analytic_bits(layer.rows, layer.cols, layer.bits,
                                   len(layer.outliers), d, alignment, variant)
        out.append({
            "sm_size": area,
            "total_bits": bits_total,
            "ratio_vs_fp32": 32.0 * layer.rows * layer.cols / bits_total,
        })
    return out
