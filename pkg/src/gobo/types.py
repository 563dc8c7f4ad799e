"""Shared data types for quantized layers.

A quantized layer is a centroid table, a dense index matrix, and a sparse set
of outliers kept at full precision.  The index matrix always uses true (not
padded) dimensions; padding is a container-format concern only.  Outlier
positions carry a dummy index of 0 so the index matrix stays dense.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BadOutlierRecord, UnsupportedBits

SUPPORTED_BITS = (2, 3, 4, 5, 6)


def check_bits(bits: int, quantizer: bool = False) -> int:
    """Validate an index width.

    The container format supports 2..6 bit indexes.  The quantizers also
    accept 1b (two centroids) for tiny desk cases; such layers cannot be
    encoded.
    """
    allowed = (1,) + SUPPORTED_BITS if quantizer else SUPPORTED_BITS
    if bits not in allowed:
        raise UnsupportedBits(f"index width {bits}b not supported, pick one of {allowed}")
    return int(bits)


@dataclass(frozen=True)
class GaussianFit:
    """Gaussian model of a weight population (population sigma, not sample)."""

    mu: float
    sigma: float
    n: int

    def log_pdf(self, x):
        """Natural-log density of the fitted Gaussian at x (scalar or array)."""
        x = np.asarray(x, dtype=np.float64)
        norm = np.log(self.sigma * np.sqrt(2.0 * np.pi))
        return -norm - ((x - self.mu) ** 2) / (2.0 * self.sigma**2)


@dataclass
class OutlierSet:
    """Sparse full-precision weights, sorted row-major by (row, col).

    threshold is the log-density cutoff the set was detected with, or None for
    sets reconstructed from a container (the cutoff is not stored on disk).
    """

    rows: np.ndarray  # int32
    cols: np.ndarray  # int32
    values: np.ndarray  # float32
    threshold: Optional[float] = None

    @classmethod
    def empty(cls, threshold: Optional[float] = None) -> "OutlierSet":
        return cls(
            rows=np.empty(0, dtype=np.int32),
            cols=np.empty(0, dtype=np.int32),
            values=np.empty(0, dtype=np.float32),
            threshold=threshold,
        )

    @classmethod
    def from_positions(cls, rows, cols, values, threshold=None) -> "OutlierSet":
        rows = np.asarray(rows, dtype=np.int32)
        cols = np.asarray(cols, dtype=np.int32)
        values = np.asarray(values, dtype=np.float32)
        if not (rows.shape == cols.shape == values.shape) or rows.ndim != 1:
            raise ValueError("rows, cols, values must be matching 1-D arrays")
        order = np.lexsort((cols, rows))
        return cls(rows[order], cols[order], values[order], threshold)

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def mask(self, shape) -> np.ndarray:
        """Boolean matrix with True at outlier positions."""
        m = np.zeros(shape, dtype=bool)
        m[self.rows, self.cols] = True
        return m

    def check_against(self, rows: int, cols: int) -> None:
        if len(self) == 0:
            return
        if self.rows.min() < 0 or self.rows.max() >= rows:
            raise BadOutlierRecord("outlier row index out of range")
        if self.cols.min() < 0 or self.cols.max() >= cols:
            raise BadOutlierRecord("outlier column index out of range")
        flat = self.rows.astype(np.int64) * cols + self.cols
        if np.unique(flat).size != flat.size:
            raise BadOutlierRecord("duplicate outlier position")


@dataclass
class QuantizedLayer:
    """A weight matrix after dictionary quantization.

    indexes holds one centroid id per weight (uint8, true dimensions).
    centroid_table is float32, ascending, with exactly 2**bits entries.
    Fields below `outliers` are quantizer diagnostics; they are not stored in
    the container, so layers decoded from disk carry the defaults.
    """

    rows: int
    cols: int
    bits: int
    indexes: np.ndarray
    centroid_table: np.ndarray
    outliers: OutlierSet
    fit: Optional[GaussianFit] = None
    method: Optional[str] = None
    iterations: int = 0
    l1_history: list = field(default_factory=list)
    reassign_history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def validate(self) -> None:
        check_bits(self.bits, quantizer=True)
        k = 1 << self.bits
        if self.indexes.shape != (self.rows, self.cols):
            raise ValueError("index matrix shape does not match declared dimensions")
        if self.indexes.dtype != np.uint8:
            raise ValueError("indexes must be uint8")
        if len(self.indexes) and self.indexes.max(initial=0) >= k:
            raise ValueError(f"index out of range for {self.bits}b table")
        if self.centroid_table.shape != (k,) or self.centroid_table.dtype != np.float32:
            raise ValueError("centroid table must be float32 with 2**bits entries")
        if not np.all(np.isfinite(self.centroid_table)):
            raise ValueError("centroid table contains non-finite values")
        if np.any(np.diff(self.centroid_table) < 0):
            raise ValueError("centroid table must be sorted ascending")
        self.outliers.check_against(self.rows, self.cols)
        if len(self.outliers) and np.any(self.indexes[self.outliers.rows, self.outliers.cols] != 0):
            raise ValueError("outlier positions must carry the dummy index 0")

    def same_content(self, other: "QuantizedLayer") -> bool:
        """Bit-exact equality of everything the container stores."""
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and self.bits == other.bits
            and self.centroid_table.tobytes() == other.centroid_table.tobytes()
            and self.indexes.tobytes() == other.indexes.tobytes()
            and self.outliers.rows.tobytes() == other.outliers.rows.tobytes()
            and self.outliers.cols.tobytes() == other.outliers.cols.tobytes()
            and self.outliers.values.tobytes() == other.outliers.values.tobytes()
        )
