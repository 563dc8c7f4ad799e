"""Centroid-sum matrix-vector kernel.

Computes FC outputs directly on quantized indexes without expanding weights:
phase 1 accumulates each activation into a per-centroid sum keyed by its
weight's index (outlier positions skip this and go to a separate partial),
phase 2 multiplies each centroid by its sum once and adds the outlier
partial last.  Per output row that costs 2**bits + row_outliers multiplies
instead of cols.

Two accumulation modes: "double" (default) keeps float64 accumulators and
rounds at the output boundary; "single" keeps strict float32 state for
studying the rounding behavior of the reassociated sum.  `out_dtype` can be
set to float64 to read the double-mode result before rounding.
"""

import numpy as np

from ._backend import get_backend
from .errors import DimensionMismatch, NonFiniteActivation
from .types import QuantizedLayer


def _check_acts(acts, cols: int) -> np.ndarray:
    a = np.asarray(acts)
    if a.ndim not in (1, 2) or a.shape[0] != cols:
        raise DimensionMismatch(f"activation shape {a.shape} does not match {cols} columns")
    if not np.all(np.isfinite(a)):
        raise NonFiniteActivation("activations contain NaN or infinity")
    return a


def reference_matvec(weights, acts) -> np.ndarray:
    """Dense oracle: plain dot products with double-precision accumulation."""
    w = np.asarray(weights, dtype=np.float64)
    a = _check_acts(acts, w.shape[1]).astype(np.float64)
    return w @ a


def _matvec_1d(layer: QuantizedLayer, acts, accumulate: str, backend) -> np.ndarray:
    g_mask = np.ones((layer.rows, layer.cols), dtype=np.uint8)
    ol = layer.outliers
    if len(ol):
        g_mask[ol.rows, ol.cols] = 0
    k = 1 << layer.bits
    if accumulate == "double":
        a = acts.astype(np.float64)
        sums = backend.accum_double(layer.indexes, g_mask, a, k)
        out = backend.sweep_double(sums, layer.centroid_table.astype(np.float64))
        out += backend.outlier_partial_double(ol.rows, ol.cols, ol.values, a, layer.rows)
    else:
        a = acts.astype(np.float32)
        sums = backend.accum_single(layer.indexes, g_mask, a, k)
        out = backend.sweep_single(sums, layer.centroid_table)
        out += backend.outlier_partial_single(ol.rows, ol.cols, ol.values, a, layer.rows)
    return out


def centroid_sum_matvec(layer: QuantizedLayer, acts, accumulate: str = "double",
                        out_dtype=None, backend=None) -> np.ndarray:
    """Quantized matvec; acts may be (cols,) or (cols, words) for a batch."""
    if accumulate not in ("double", "single"):
        raise ValueError(f"accumulate must be 'double' or 'single', got {accumulate!r}")
    impl = get_backend(backend)
    a = _check_acts(acts, layer.cols)
    if out_dtype is None:
        out_dtype = np.float32
    if a.ndim == 1:
        return _matvec_1d(layer, a, accumulate, impl).astype(out_dtype)
    cols = [_matvec_1d(layer, a[:, i], accumulate, impl) for i in range(a.shape[1])]
    return np.stack(cols, axis=1).astype(out_dtype)


def count_ops(layer: QuantizedLayer) -> dict:
    """Work accounting: what the centroid-sum formulation executes per row
    versus a dense matvec."""
    k = 1 << layer.bits
    row_out = np.bincount(layer.outliers.rows, minlength=layer.rows).astype(np.int64)
    row_acc = layer.cols - row_out
    row_macs = k + row_out
    dense = layer.rows * layer.cols
    macs = int(row_macs.sum())
    return {
        "accumulations": int(row_acc.sum()),
        "lookups": macs,
        "macs": macs,
        "row_accumulations": row_acc,
        "row_macs": row_macs,
        "dense_macs": dense,
        "mac_reduction": dense / macs,
    }
