import struct

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from gobo import fwt
from gobo.errors import BadMagic, TruncatedStream


def test_layout(tmp_path):
    "Header is magic + u32 dims, payload is row-major little-endian f32"
    w = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "w.fwt"
    fwt.write_fwt(path, w)
    raw = path.read_bytes()
    assert raw[:4] == b"FWT1"
    assert struct.unpack("<II", raw[4:12]) == (2, 3)
    assert raw[12:] == w.astype("<f4").tobytes()


def test_round_trip(tmp_path):
    w = np.random.default_rng(0).normal(size=(17, 5)).astype(np.float32)
    path = tmp_path / "w.fwt"
    fwt.write_fwt(path, w)
    back = fwt.read_fwt(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, w)


def test_bad_magic(tmp_path):
    path = tmp_path / "w.fwt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(BadMagic):
        fwt.read_fwt(path)


def test_truncated(tmp_path):
    w = np.zeros((4, 4), dtype=np.float32)
    path = tmp_path / "w.fwt"
    fwt.write_fwt(path, w)
    (tmp_path / "cut.fwt").write_bytes(path.read_bytes()[:-3])
    with pytest.raises(TruncatedStream):
        fwt.read_fwt(tmp_path / "cut.fwt")
    (tmp_path / "hdr.fwt").write_bytes(path.read_bytes()[:8])
    with pytest.raises(TruncatedStream):
        fwt.read_fwt(tmp_path / "hdr.fwt")


@settings(max_examples=50, deadline=None)
@given(rows=st.integers(1, 40), cols=st.integers(1, 40), seed=st.integers(0, 2**31))
def test_round_trip_property(tmp_path_factory, rows, cols, seed):
    w = np.random.default_rng(seed).normal(size=(rows, cols)).astype(np.float32)
    path = tmp_path_factory.mktemp("fwt") / "w.fwt"
    fwt.write_fwt(path, w)
    assert np.array_equal(fwt.read_fwt(path), w)
