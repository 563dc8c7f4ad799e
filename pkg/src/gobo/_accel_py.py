"""Numpy implementations of the hot kernel loops.

This is the fallback used when the compiled extension is unavailable; the
compiled module exports the same functions with identical semantics, down to
accumulation order (row-major scan, per-row sequential adds), so the two
backends produce bit-identical results on the same inputs.
"""

import numpy as np

NAME = "numpy"


def accum_double(indexes, g_mask, acts, k: int):
    """Phase 1, double precision: sums[r, j] = sum of acts[c] over G
    positions with index j, accumulated in column order within each row."""
    rows = indexes.shape[0]
    out = np.empty((rows, k), dtype=np.float64)
    w = np.where(g_mask, acts, 0.0)
    for r in range(rows):
        out[r] = np.bincount(indexes[r], weights=w[r], minlength=k)
    return out


def accum_single(indexes, g_mask, acts32, k: int):
    """Phase 1 with strict float32 accumulators."""
    rows = indexes.shape[0]
    out = np.zeros((rows, k), dtype=np.float32)
    w = np.where(g_mask, acts32, np.float32(0.0))
    grid = np.broadcast_to(np.arange(rows)[:, None], indexes.shape)
    np.add.at(out, (grid, indexes), w)
    return out


def outlier_partial_double(o_rows, o_cols, o_values, acts, n_rows: int):
    """Per-row sum of V*A over outlier records, double precision, record order."""
    out = np.zeros(n_rows, dtype=np.float64)
    np.add.at(out, o_rows, o_values.astype(np.float64) * acts[o_cols])
    return out


def outlier_partial_single(o_rows, o_cols, o_values, acts32, n_rows: int):
    out = np.zeros(n_rows, dtype=np.float32)
    np.add.at(out, o_rows, o_values * acts32[o_cols])
    return out


def sweep_double(sums, table):
    """Phase 2: centroid-order sweep, ascending k, sequential adds."""
    out = np.zeros(sums.shape[0], dtype=np.float64)
    for j in range(table.shape[0]):
        out += sums[:, j] * table[j]
    return out


def sweep_single(sums, table32):
    out = np.zeros(sums.shape[0], dtype=np.float32)
    for j in range(table32.shape[0]):
        out += sums[:, j] * table32[j]
    return out
