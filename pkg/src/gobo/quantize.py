"""Gaussian outlier separation and dictionary quantization of weight matrices.

The quantizers share one pipeline: fit a Gaussian to the layer, split weights
into a general group ("G") and a small outlier group ("O") by log-density,
then choose 2**bits shared centroids for the G group.  Outliers are kept at
full precision and never participate in centroid selection.

Three centroid selection strategies are provided:

  quantize_gobo    iterative refinement that stops on the first L1 increase
  quantize_kmeans  same init and update steps, runs until assignments settle
  quantize_linear  equal-width intervals over the G range, no iteration

All internal math runs in float64; centroid tables and dequantized weights
are float32 at the boundary.  Everything is deterministic: identical inputs
give bit-identical layers.
"""

from typing import Optional

import numpy as np

from .errors import DegenerateSigma, EmptyMatrix, QuantizerError, TooFewWeights
from .types import GaussianFit, OutlierSet, QuantizedLayer, check_bits

DEFAULT_THRESHOLD = -4.0
GOBO_ITERATION_CAP = 100
KMEANS_ITERATION_CAP = 300

WARN_ITERATION_CAP = "iteration-cap-exceeded"
WARN_EMPTY_CLUSTER = "empty-cluster"
WARN_DEGENERATE = "degenerate-sigma"


def _as_matrix(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float32)
    if w.size == 0:
        raise EmptyMatrix("weight matrix has no elements")
    if w.ndim == 1:
        w = w.reshape(1, -1)
    if w.ndim != 2:
        raise QuantizerError(f"expected a 2-D weight matrix, got {w.ndim}-D")
    if not np.all(np.isfinite(w)):
        raise QuantizerError("weights contain non-finite values")
    return w


def fit_gaussian(weights) -> GaussianFit:
    """Closed-form ML fit: arithmetic mean and population standard deviation."""
    w = _as_matrix(weights).astype(np.float64)
    mu = float(w.mean())
    sigma = float(w.std())  # population form, ddof=0
    if sigma == 0.0:
        raise DegenerateSigma("all weights identical, sigma is zero")
    return GaussianFit(mu=mu, sigma=sigma, n=w.size)


def log_pdf(x, fit: GaussianFit):
    """Natural-log Gaussian density; the outlier threshold lives on this scale."""
    if fit.sigma <= 0.0:
        raise DegenerateSigma("log density undefined for sigma == 0")
    return fit.log_pdf(x)


def detect_outliers(weights, fit: GaussianFit, threshold: float = DEFAULT_THRESHOLD):
    """Split a matrix into the G group and the outlier set.

    A position is an outlier iff its log density falls strictly below the
    threshold.  Returns (g_mask, outliers) where g_mask marks G positions;
    the two partitions are exhaustive and disjoint by construction.
    """
    w = _as_matrix(weights)
    dens = log_pdf(w, fit)
    out_mask = dens < threshold
    g_mask = ~out_mask
    r, c = np.nonzero(out_mask)
    outliers = OutlierSet.from_positions(r, c, w[out_mask], threshold=threshold)
    return g_mask, outliers


def init_bins(g_sorted: np.ndarray, bits: int):
    """Equal-population bins over sorted G weights; centroids are bin means.

    Returns (centroids, assignment) as float64 / int64 arrays.  The remainder
    of len(g) mod 2**bits goes one-per-bin to the lowest bins.  This is a
    low-level helper: it only checks the population, not the bit range.
    """
    g = np.asarray(g_sorted, dtype=np.float64)
    k = 1 << bits
    n = g.size
    if n < k:
        raise TooFewWeights(f"{n} weights cannot fill {k} bins")
    base, rem = divmod(n, k)
    sizes = np.full(k, base, dtype=np.int64)
    sizes[:rem] += 1
    bounds = np.concatenate(([0], np.cumsum(sizes)))
    centroids = np.array([g[bounds[i]: bounds[i + 1]].mean() for i in range(k)])
    assignment = np.repeat(np.arange(k, dtype=np.int64), sizes)
    return centroids, assignment


def assign_nearest(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """L1-argmin assignment against an ascending centroid table, ties to the
    lowest index (duplicate centroids canonicalize to their first slot)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    if c.size == 1:
        return np.zeros(v.shape, dtype=np.int64)
    j = np.searchsorted(c, v).clip(1, c.size - 1)
    left = np.abs(v - c[j - 1])
    right = np.abs(v - c[j])
    chosen = np.where(left <= right, j - 1, j)
    # slide across any run of equal distances (duplicate centroids, rounding
    # absorption) so ties always land on the lowest index, like a plain argmin
    d = np.abs(v - c[chosen])
    while True:
        lower = np.abs(v - c[np.maximum(chosen - 1, 0)]) == d
        movable = (chosen > 0) & lower
        if not movable.any():
            return chosen
        chosen = np.where(movable, chosen - 1, chosen)


def total_l1(values: np.ndarray, centroids: np.ndarray, assignment: np.ndarray) -> float:
    return float(np.abs(np.asarray(values, dtype=np.float64) - np.asarray(centroids)[assignment]).sum())


def cluster_means(values: np.ndarray, assignment: np.ndarray, k: int, previous: np.ndarray):
    """Mean of each cluster's members; an empty cluster keeps its previous
    centroid so the update never produces NaN.  Returns (means, had_empty)."""
    counts = np.bincount(assignment, minlength=k)
    sums = np.bincount(assignment, weights=values, minlength=k)
    empty = counts == 0
    means = np.where(empty, previous, sums / np.where(empty, 1, counts))
    return means, bool(empty.any())


def _sort_centroids(cents: np.ndarray, assign: np.ndarray):
    """Restore ascending centroid order after an update step.

    A retained empty-cluster value can land above a neighbor's fresh mean,
    and the nearest-centroid search depends on ascending order, so permute
    the table and relabel the assignment to match.
    """
    order = np.argsort(cents, kind="stable")
    if np.array_equal(order, np.arange(order.size)):
        return cents, assign
    inverse = np.empty_like(order)
    inverse[order] = np.arange(order.size)
    return cents[order], inverse[assign]


def _refine_gobo(g: np.ndarray, k: int, cap: int):
    """Centroid refinement that keeps the best state seen.

    Loop body: reassign to nearest centroid, update centroids to member
    means, record total L1.  The loop leaves either at a fixed point (a pass
    that moves nothing) or on the first L1 increase; in the latter case the
    centroids of the last non-increasing iteration are returned.
    """
    cents, assign = init_bins(g, int(np.log2(k)))
    hist = [total_l1(g, cents, assign)]
    reass: list = []
    warnings: list = []
    iterations = 0
    while True:
        if iterations >= cap:
            warnings.append(WARN_ITERATION_CAP)
            break
        new_assign = assign_nearest(g, cents)
        changed = int(np.count_nonzero(new_assign != assign))
        iterations += 1
        reass.append(changed)
        if changed == 0:
            hist.append(hist[-1])
            break
        new_cents, had_empty = cluster_means(g, new_assign, k, cents)
        if had_empty and WARN_EMPTY_CLUSTER not in warnings:
            warnings.append(WARN_EMPTY_CLUSTER)
        new_cents, new_assign = _sort_centroids(new_cents, new_assign)
        l1_new = total_l1(g, new_cents, new_assign)
        hist.append(l1_new)
        if l1_new > hist[-2]:
            break  # keep the pre-update centroids
        assign, cents = new_assign, new_cents
    return cents, iterations, hist, reass, warnings


def _refine_kmeans(g: np.ndarray, k: int, cap: int):
    """Same init and update steps, but runs until a pass moves no weight."""
    cents, assign = init_bins(g, int(np.log2(k)))
    hist = [total_l1(g, cents, assign)]
    reass: list = []
    warnings: list = []
    iterations = 0
    while True:
        if iterations >= cap:
            warnings.append(WARN_ITERATION_CAP)
            break
        new_assign = assign_nearest(g, cents)
        changed = int(np.count_nonzero(new_assign != assign))
        iterations += 1
        reass.append(changed)
        if changed == 0:
            hist.append(hist[-1])
            break
        cents, had_empty = cluster_means(g, new_assign, k, cents)
        if had_empty and WARN_EMPTY_CLUSTER not in warnings:
            warnings.append(WARN_EMPTY_CLUSTER)
        cents, new_assign = _sort_centroids(cents, new_assign)
        hist.append(total_l1(g, cents, new_assign))
        assign = new_assign
    return cents, iterations, hist, reass, warnings


def _refine_linear(g: np.ndarray, k: int, cap: int):
    """Midpoints of k equal-width intervals spanning the G range."""
    lo, hi = float(g[0]), float(g[-1])
    if hi == lo:
        return np.full(k, lo, dtype=np.float64), 0, [], [], []
    h = (hi - lo) / k
    cents = lo + h * (np.arange(k, dtype=np.float64) + 0.5)
    return cents, 0, [], [], []


def _linear_assignment(values: np.ndarray, lo: float, hi: float, k: int):
    # interval membership: an interior upper boundary belongs to the bin above
    v = np.asarray(values, dtype=np.float64)
    if hi == lo:
        return np.zeros(v.shape, dtype=np.int64)
    h = (np.float64(hi) - np.float64(lo)) / k
    idx = np.floor((v - lo) / h).astype(np.int64)
    return idx.clip(0, k - 1)


_REFINERS = {
    "gobo": (_refine_gobo, GOBO_ITERATION_CAP),
    "kmeans": (_refine_kmeans, KMEANS_ITERATION_CAP),
    "linear": (_refine_linear, 0),
}


def _quantize(weights, bits: int, threshold: float, method: str,
              max_iterations: Optional[int] = None) -> QuantizedLayer:
    w = _as_matrix(weights)
    check_bits(bits, quantizer=True)
    k = 1 << bits
    rows, cols = w.shape
    try:
        fit = fit_gaussian(w)
    except DegenerateSigma:
        # all weights identical: one centroid replicated, everything in G
        v = np.float32(w.flat[0])
        return QuantizedLayer(
            rows=rows, cols=cols, bits=bits,
            indexes=np.zeros((rows, cols), dtype=np.uint8),
            centroid_table=np.full(k, v, dtype=np.float32),
            outliers=OutlierSet.empty(threshold),
            fit=GaussianFit(mu=float(v), sigma=0.0, n=w.size),
            method=method, iterations=0, l1_history=[0.0],
            reassign_history=[], warnings=[WARN_DEGENERATE],
        )
    g_mask, outliers = detect_outliers(w, fit, threshold)
    g = w[g_mask].astype(np.float64)
    g_sorted = np.sort(g)
    refine, cap = _REFINERS[method]
    if max_iterations is not None:
        cap = max_iterations
    if g_sorted.size < k:
        raise TooFewWeights(f"{g_sorted.size} G weights cannot fill {k} bins")
    cents, iterations, hist, reass, warns = refine(g_sorted, k, cap)
    table = cents.astype(np.float32)
    if method == "linear":
        assign = _linear_assignment(g, g_sorted[0], g_sorted[-1], k)
    else:
        assign = assign_nearest(g, table)
    indexes = np.zeros((rows, cols), dtype=np.uint8)
    indexes[g_mask] = assign.astype(np.uint8)
    return QuantizedLayer(
        rows=rows, cols=cols, bits=bits, indexes=indexes,
        centroid_table=table, outliers=outliers, fit=fit, method=method,
        iterations=iterations, l1_history=hist, reassign_history=reass,
        warnings=warns,
    )


def quantize_gobo(weights, bits: int, threshold: float = DEFAULT_THRESHOLD,
                  max_iterations: Optional[int] = None) -> QuantizedLayer:
    """Quantize with L1-terminated centroid refinement (the fast path)."""
    return _quantize(weights, bits, threshold, "gobo", max_iterations)


def quantize_kmeans(weights, bits: int, threshold: float = DEFAULT_THRESHOLD,
                    max_iterations: Optional[int] = None) -> QuantizedLayer:
    """Quantize with assignment-convergence termination (slow baseline)."""
    return _quantize(weights, bits, threshold, "kmeans", max_iterations)


def quantize_linear(weights, bits: int, threshold: float = DEFAULT_THRESHOLD) -> QuantizedLayer:
    """Quantize with equal-width intervals over the G range (weak baseline)."""
    return _quantize(weights, bits, threshold, "linear")


def dequantize(layer: QuantizedLayer) -> np.ndarray:
    """Reconstruct the float32 matrix: table lookups plus exact outliers."""
    out = layer.centroid_table[layer.indexes]
    if len(layer.outliers):
        out[layer.outliers.rows, layer.outliers.cols] = layer.outliers.values
    return out
