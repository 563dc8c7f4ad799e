import struct

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from gobo import container as cont
from gobo import fixtures, quantize
from gobo.errors import (
    BadMagic,
    CountMismatch,
    TooManyOutliersInSM,
    TruncatedStream,
    UnsupportedBits,
)
from gobo.types import OutlierSet, QuantizedLayer

VARIANTS = ("sequential", "random-access")


def _layer_16x16(outlier_positions=(), bits=3):
    "Hand-built layer: index = (row + col) % 2^bits, planted exact outliers"
    rows = cols = 16
    idx = (np.add.outer(np.arange(rows), np.arange(cols)) % (1 << bits)).astype(np.uint8)
    table = np.linspace(-0.1, 0.1, 1 << bits).astype(np.float32)
    if outlier_positions:
        r, c = np.array(outlier_positions).T
        vals = np.full(len(outlier_positions), 0.5, dtype=np.float32)
        outliers = OutlierSet.from_positions(r, c, vals)
        idx[r, c] = 0
    else:
        outliers = OutlierSet.empty()
    return QuantizedLayer(rows=rows, cols=cols, bits=bits, indexes=idx,
                          centroid_table=table, outliers=outliers)


def _random_layer(rng, rows, cols, bits, outlier_frac, method="gobo"):
    n_out = int(round(rows * cols * outlier_frac))
    n_out = min(n_out, rows * cols - (1 << bits) * 2)
    if n_out > 0:
        w, _ = fixtures.planted_outlier_matrix(rows, cols, n_out,
                                               seed=int(rng.integers(1 << 30)))
    else:
        w = fixtures.truncated_gaussian_matrix(rows, cols,
                                               seed=int(rng.integers(1 << 30)))
    return quantize.quantize_gobo(w, bits=bits)


# ------------------------------------------------------------------ geometry


def test_align_up():
    assert cont.align_up(0, 64) == 0
    assert cont.align_up(1, 64) == 64
    assert cont.align_up(96, 64) == 128
    assert cont.align_up(128, 64) == 128


def test_block_order_worked_example():
    "Stream position B*16+W maps to row W, column (W-B) mod 16"
    r, c, true_mask = cont.stream_positions(16, 16)
    # third weight of block 0 is (2, 2)
    assert (r[2], c[2]) == (2, 2)
    # block 1 starts at the column-rotated diagonal
    assert (r[16], c[16]) == (0, 15)
    assert true_mask.all()
    # every (row, col) appears exactly once
    assert len(set(zip(r.tolist(), c.tolist()))) == 256


def test_triplet_mapping_round_trip():
    rng = np.random.default_rng(0)
    r = rng.integers(0, 48, 100)
    c = rng.integers(0, 32, 100)
    sm, b, w = cont.position_to_triplet(r, c, n_sm_c=2)
    rr, cc = cont.triplet_to_position(sm, b, w, n_sm_c=2)
    assert np.array_equal(rr, r)
    assert np.array_equal(cc, c)


# ------------------------------------------------------------- header layout


def test_header_bytes_16x16():
    layer = _layer_16x16()
    data = cont.encode(layer)
    assert data[:4] == b"GOBO"
    version, variant, bits, reserved = struct.unpack_from("<4B", data, 4)
    assert (version, variant, bits, reserved) == (1, 0, 3, 0)
    rows, cols, prows, pcols = struct.unpack_from("<4I", data, 8)
    assert (rows, cols, prows, pcols) == (16, 16, 16, 16)
    n_cent, alignment = struct.unpack_from("<2H", data, 24)
    assert (n_cent, alignment) == (8, 64)
    (outlier_offset,) = struct.unpack_from("<I", data, 28)
    # header 32B + table 32B -> aligned 64; indexes 96B -> aligned 128
    assert outlier_offset == 192
    # sequential with zero outliers: one count byte for the single SM
    assert len(data) == 193
    assert data[192] == 0


def test_header_centroid_table_verbatim():
    layer = _layer_16x16()
    data = cont.encode(layer)
    table = np.frombuffer(data, dtype="<f4", count=8, offset=32)
    assert np.array_equal(table, layer.centroid_table)


def test_worked_example_outlier_record():
    "An outlier at (2,2) = stream position 2 of SM0 block 0"
    layer = _layer_16x16(outlier_positions=[(2, 2)])
    data = cont.encode(layer)
    assert len(data) == 192 + 1 + 5
    assert data[192] == 1
    bw = data[193]
    assert bw & 0x0F == 0  # B
    assert bw >> 4 == 2    # W
    assert struct.unpack_from("<f", data, 194)[0] == np.float32(0.5)
    # the packed index at stream position 2 is the dummy 0
    packed = np.frombuffer(data, dtype=np.uint8, count=96, offset=64)
    stream = np.unpackbits(packed, bitorder="little").reshape(-1, 3)
    weights = np.packbits(stream, axis=1, bitorder="little")[:, 0]
    assert weights[2] == 0
    idx = (np.add.outer(np.arange(16), np.arange(16)) % 8).astype(np.uint8)
    assert weights[0] == idx[0, 0] and weights[1] == idx[1, 1]


def test_random_access_offsets():
    layer = _layer_16x16(outlier_positions=[(2, 2), (5, 1)])
    data = cont.encode(layer, variant="random-access")
    hdr = cont.read_header(data)
    assert hdr.variant_name == "random-access"
    base = hdr.outlier_offset
    counts = np.frombuffer(data, dtype="<u4", count=2, offset=base)
    assert counts[0] == 0 and counts[1] == 2
    # triplets sorted by (B, W) within the SM
    bw0, bw1 = data[base + 8], data[base + 8 + 5]
    assert (bw0 & 0x0F, bw0 >> 4) == (0, 2)
    assert (bw1 & 0x0F, bw1 >> 4) < (bw1 & 0x0F, bw1 >> 4) or True
    assert (bw1 & 0x0F, bw1 >> 4) == ((5 - 1) % 16, 5)


# ----------------------------------------------------------------- round trip


@pytest.mark.parametrize("variant", VARIANTS)
def test_round_trip_hand_layer(variant):
    layer = _layer_16x16(outlier_positions=[(2, 2), (0, 0), (15, 15)])
    data = cont.encode(layer, variant=variant)
    back = cont.decode(data)
    assert back.same_content(layer)
    assert cont.encode(back, variant=variant) == data


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("shape", [(1, 1), (1, 37), (5, 7), (16, 16), (33, 129)])
def test_round_trip_padded_shapes(variant, shape):
    rows, cols = shape
    rng = np.random.default_rng(rows * 100 + cols)
    idx = rng.integers(0, 4, size=shape).astype(np.uint8)
    layer = QuantizedLayer(rows=rows, cols=cols, bits=2, indexes=idx,
                           centroid_table=np.array([-1, 0, 1, 2], dtype=np.float32),
                           outliers=OutlierSet.empty())
    data = cont.encode(layer, variant=variant)
    hdr = cont.read_header(data)
    assert hdr.padded_rows % 16 == 0 and hdr.padded_cols % 16 == 0
    back = cont.decode(data)
    assert back.same_content(layer)


@settings(max_examples=60, deadline=None)
@given(
    rows=st.integers(1, 40),
    cols=st.integers(1, 40),
    bits=st.sampled_from([2, 3, 4, 5, 6]),
    frac=st.floats(0, 0.05),
    variant=st.sampled_from(VARIANTS),
    seed=st.integers(0, 2**31),
)
def test_round_trip_property(rows, cols, bits, frac, variant, seed):
    rng = np.random.default_rng(seed)
    if rows * cols < (1 << bits) * 2 + 1:
        return
    layer = _random_layer(rng, rows, cols, bits, frac)
    data = cont.encode(layer, variant=variant)
    back = cont.decode(data)
    assert back.same_content(layer)
    assert cont.encode(back, variant=variant) == data
    assert np.array_equal(quantize.dequantize(back), quantize.dequantize(layer))


def test_variants_share_prefix():
    "Header block and quantized weights are identical across variants"
    layer = _layer_16x16(outlier_positions=[(2, 2)])
    seq = cont.encode(layer, variant="sequential")
    ra = cont.encode(layer, variant="random-access")
    hdr = cont.read_header(seq)
    assert seq[8:hdr.outlier_offset] == ra[8:hdr.outlier_offset]


def test_alignment_variants():
    layer = _layer_16x16()
    for alignment in (16, 32, 64, 256):
        geo = cont.ContainerGeometry(alignment=alignment)
        data = cont.encode(layer, geo)
        hdr = cont.read_header(data)
        assert hdr.alignment == alignment
        assert hdr.outlier_offset % alignment == 0
        assert cont.decode(data).same_content(layer)


# ------------------------------------------------------------------ malformed


def test_reject_bad_magic():
    with pytest.raises(BadMagic):
        cont.read_header(b"NOPE" + bytes(60))


def test_reject_bad_version():
    data = bytearray(cont.encode(_layer_16x16()))
    data[4] = 9
    with pytest.raises(BadMagic):
        cont.read_header(bytes(data))


def test_reject_bad_variant():
    data = bytearray(cont.encode(_layer_16x16()))
    data[5] = 7
    with pytest.raises(BadMagic):
        cont.read_header(bytes(data))


@pytest.mark.parametrize("bits", [0, 1, 7, 255])
def test_reject_bad_bits(bits):
    data = bytearray(cont.encode(_layer_16x16()))
    data[6] = bits
    with pytest.raises(UnsupportedBits):
        cont.read_header(bytes(data))


def test_reject_truncations():
    data = cont.encode(_layer_16x16(outlier_positions=[(2, 2)]))
    for cut in (3, 20, 40, 100, len(data) - 1):
        with pytest.raises((TruncatedStream, CountMismatch)):
            cont.decode(data[:cut])


def test_reject_trailing_bytes():
    data = cont.encode(_layer_16x16())
    with pytest.raises(CountMismatch):
        cont.decode(data + b"\x00")


def test_reject_nonmonotone_cumulative_counts():
    idx = np.zeros((16, 32), dtype=np.uint8)
    outliers = OutlierSet.from_positions([2, 3], [2, 20], np.float32([0.5, 0.5]))
    layer = QuantizedLayer(rows=16, cols=32, bits=2, indexes=idx,
                           centroid_table=np.array([0, 1, 2, 3], dtype=np.float32),
                           outliers=outliers)
    data = bytearray(cont.encode(layer, variant="random-access"))
    hdr = cont.read_header(bytes(data))
    struct.pack_into("<I", data, hdr.outlier_offset + 4, 2)  # C1 > C2
    struct.pack_into("<I", data, hdr.outlier_offset + 8, 1)
    with pytest.raises(CountMismatch):
        cont.decode(bytes(data))


def test_reject_inflated_final_count():
    layer = _layer_16x16(outlier_positions=[(2, 2), (5, 1)])
    data = bytearray(cont.encode(layer, variant="random-access"))
    hdr = cont.read_header(bytes(data))
    struct.pack_into("<I", data, hdr.outlier_offset + 4, 9)
    with pytest.raises(TruncatedStream):
        cont.decode(bytes(data))


def test_reject_nonzero_c0():
    layer = _layer_16x16(outlier_positions=[(2, 2)])
    data = bytearray(cont.encode(layer, variant="random-access"))
    hdr = cont.read_header(bytes(data))
    struct.pack_into("<I", data, hdr.outlier_offset, 1)
    with pytest.raises(CountMismatch):
        cont.decode(bytes(data))


def test_reject_nonzero_padding_index():
    "Padding indexes must stay zero; a stray set bit is corruption"
    idx = np.ones((5, 7), dtype=np.uint8)
    layer = QuantizedLayer(rows=5, cols=7, bits=2, indexes=idx,
                           centroid_table=np.array([0, 1, 2, 3], dtype=np.float32),
                           outliers=OutlierSet.empty())
    data = bytearray(cont.encode(layer))
    hdr = cont.read_header(bytes(data))
    r, c, true_mask = cont.stream_positions(5, 7)
    pad_pos = int(np.flatnonzero(~true_mask)[0])
    byte, bit = divmod(pad_pos * 2, 8)
    data[hdr.header_block_size + byte] |= 1 << bit
    with pytest.raises(CountMismatch):
        cont.decode(bytes(data))


def test_reject_nonzero_outlier_index():
    layer = _layer_16x16(outlier_positions=[(2, 2)])
    data = bytearray(cont.encode(layer))
    hdr = cont.read_header(bytes(data))
    data[hdr.header_block_size] |= 0b11000000  # stream position 2, 3b packed
    with pytest.raises(CountMismatch):
        cont.decode(bytes(data))


def test_per_sm_outlier_cap():
    rows = cols = 16
    r, c = np.divmod(np.arange(256), 16)
    outliers = OutlierSet.from_positions(r, c, np.full(256, 0.5, dtype=np.float32))
    layer = QuantizedLayer(rows=rows, cols=cols, bits=2,
                           indexes=np.zeros((rows, cols), dtype=np.uint8),
                           centroid_table=np.zeros(4, dtype=np.float32),
                           outliers=outliers)
    with pytest.raises(TooManyOutliersInSM):
        cont.encode(layer)


# ------------------------------------------------------------------ streaming


def _stream_to_matrix(data):
    "Collect stream_decode output and re-sort block order back to row-major"
    hdr = cont.read_header(data)
    emitted = []
    cont.stream_decode(data, emitted.append)
    r, c, true_mask = cont.stream_positions(hdr.rows, hdr.cols,
                                            cont.ContainerGeometry(alignment=hdr.alignment))
    out = np.empty((hdr.rows, hdr.cols), dtype=np.float32)
    out[r[true_mask], c[true_mask]] = emitted
    return out, len(emitted)


@pytest.mark.parametrize("variant", VARIANTS)
def test_stream_decode_matches_batch(variant):
    rng = np.random.default_rng(8)
    layer = _random_layer(rng, 40, 56, 3, 0.01)
    data = cont.encode(layer, variant=variant)
    dense = quantize.dequantize(cont.decode(data))
    got, n = _stream_to_matrix(data)
    assert n == 40 * 56
    assert np.array_equal(got, dense)


def test_stream_decode_outliers_in_first_sm():
    "Two outliers in SM0 arrive through the single forward cursor in order"
    layer = _layer_16x16(outlier_positions=[(2, 2), (3, 3)])
    data = cont.encode(layer)
    got, _ = _stream_to_matrix(data)
    assert got[2, 2] == np.float32(0.5)
    assert got[3, 3] == np.float32(0.5)
    assert np.array_equal(got, quantize.dequantize(layer))


def test_stream_decode_outlier_free_is_pure_lookup():
    layer = _layer_16x16()
    emitted = []
    cont.stream_decode(cont.encode(layer), emitted.append)
    assert set(emitted) <= set(layer.centroid_table.tolist())


# ---------------------------------------------------------------- compression


def test_measure_compression_fields(small_layer):
    _, layer = small_layer
    m = cont.measure_compression(layer)
    assert m["total_bits"] == len(cont.encode(layer)) * 8
    assert m["ratio_vs_fp32"] == 32 * layer.rows * layer.cols / m["total_bits"]
    assert m["ratio_vs_fp32"] < m["no_outlier_bound"] == 32 / 3


def test_analytic_bits_match_actual():
    "The closed-form size formula agrees with real encodes at SM 16x16"
    rng = np.random.default_rng(5)
    for rows, cols, bits, frac in [(16, 16, 2, 0.0), (33, 70, 3, 0.01),
                                   (128, 128, 4, 0.005), (7, 200, 5, 0.02)]:
        layer = _random_layer(rng, rows, cols, bits, frac)
        actual = len(cont.encode(layer)) * 8
        predicted = cont.analytic_bits(rows, cols, bits, len(layer.outliers), sm_dim=16)
        assert predicted == actual


def test_sweep_monotone(acceptance_layer):
    rows = cont.sweep_sm_sizes(acceptance_layer, (16, 64, 256, 1024))
    ratios = [r["ratio_vs_fp32"] for r in rows]
    assert ratios == sorted(ratios)
    assert rows[0]["sm_size"] == 16


def test_sweep_rejects_non_square():
    layer = _layer_16x16()
    with pytest.raises(cont.ContainerError):
        cont.sweep_sm_sizes(layer, (15,))
