"""Seed-fixed synthetic weight fixtures.

Everything here is deterministic in (shape, parameters, seed); the GOBO_SEED
environment variable overrides the default seed so a whole run can be
re-rolled without touching flags.  The planted-outlier builder draws its
base from a tail-truncated Gaussian so the planted positions are exactly
the detected outlier set: no natural sample can cross the threshold.
"""

import os

import numpy as np


def default_seed(fallback: int = 0) -> int:
    env = os.environ.get("GOBO_SEED")
    return int(env) if env else fallback


def gaussian_matrix(rows: int, cols: int, sigma: float = 0.05, mu: float = 0.0,
                    seed: int = 0) -> np.ndarray:
    """Plain N(mu, sigma^2) float32 matrix."""
    rng = np.random.default_rng(seed)
    return rng.normal(mu, sigma, (rows, cols)).astype(np.float32)


def truncated_gaussian_matrix(rows: int, cols: int, sigma: float = 0.05, mu: float = 0.0,
                              clip_sigmas: float = 3.0, seed: int = 0) -> np.ndarray:
    """Gaussian with tails beyond clip_sigmas redrawn (rejection sampling)."""
    rng = np.random.default_rng(seed)
    w = rng.normal(mu, sigma, (rows, cols))
    bad = np.abs(w - mu) > clip_sigmas * sigma
    while bad.any():
        w[bad] = rng.normal(mu, sigma, int(bad.sum()))
        bad = np.abs(w - mu) > clip_sigmas * sigma
    return w.astype(np.float32)


def planted_outlier_matrix(rows: int, cols: int, n_outliers: int, magnitude: float = 0.5,
                           sigma: float = 0.05, seed: int = 0):
    """Truncated Gaussian base with n_outliers values at +-magnitude in
    distinct random positions.  Returns (matrix, planted boolean mask).

    With the default parameters the planted magnitude sits far outside the
    detection cutoff while the truncated base sits well inside it, so
    detect_outliers flags exactly the planted set.
    """
    if n_outliers > rows * cols:
        raise ValueError("more outliers than positions")
    w = truncated_gaussian_matrix(rows, cols, sigma=sigma, seed=seed)
    rng = np.random.default_rng(seed + 1)
    flat = rng.choice(rows * cols, n_outliers, replace=False)
    signs = np.where(rng.random(n_outliers) < 0.5, -1.0, 1.0)
    w.flat[flat] = (signs * magnitude).astype(np.float32)
    mask = np.zeros((rows, cols), dtype=bool)
    mask.flat[flat] = True
    return w, mask


def acceptance_fixture(seed: int = 0):
    """The 768x768, 0.1%-planted-outlier matrix the acceptance suite pins."""
    n = round(768 * 768 * 0.001)
    return planted_outlier_matrix(768, 768, n, seed=seed)
