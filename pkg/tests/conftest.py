import numpy as np
import pytest

from gobo import fixtures, quantize


def scaled_err(out, ref):
    """Max element error relative to |ref| floored by the output scale.

    Pure element-relative error is unbounded where float32 cancellation
    drives a reference value toward zero, so the denominator keeps the
    infinity norm of the reference as a floor.
    """
    out = np.asarray(out, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    scale = np.abs(ref).max() or 1.0
    return float(np.max(np.abs(out - ref) / (np.abs(ref) + scale)))


@pytest.fixture
def planted_64():
    w, mask = fixtures.planted_outlier_matrix(64, 64, 12, seed=3)
    return w, mask


@pytest.fixture
def small_layer(planted_64):
    w, _ = planted_64
    return w, quantize.quantize_gobo(w, bits=3)


@pytest.fixture(scope="session")
def acceptance_matrix():
    return fixtures.acceptance_fixture(seed=0)


@pytest.fixture(scope="session")
def acceptance_layer(acceptance_matrix):
    w, _ = acceptance_matrix
    return quantize.quantize_gobo(w, bits=3)
