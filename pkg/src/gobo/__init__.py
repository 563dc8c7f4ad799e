"""gobo: dictionary quantization with Gaussian outlier separation.

Quantizes weight matrices to a handful of shared centroids plus a sparse set
of exact outliers, packs the result into a bit-exact container format, and
provides a centroid-sum matrix-vector kernel plus a cycle-level model of an
accelerator tile that consumes the same format.
"""

from .errors import (
    BadMagic,
    BadOutlierRecord,
    BitsMismatch,
    ContainerError,
    CountMismatch,
    DegenerateSigma,
    DimensionMismatch,
    EmptyMatrix,
    GoboError,
    KernelError,
    NonFiniteActivation,
    QuantizerError,
    ScheduleIncomplete,
    SimulatorError,
    TooFewWeights,
    TooManyOutliersInSM,
    TruncatedStream,
    UnsupportedBits,
)
from .types import GaussianFit, OutlierSet, QuantizedLayer, SUPPORTED_BITS
from .quantize import (
    DEFAULT_THRESHOLD,
    assign_nearest,
    cluster_means,
    dequantize,
    detect_outliers,
    fit_gaussian,
    init_bins,
    log_pdf,
    quantize_gobo,
    quantize_kmeans,
    quantize_linear,
    total_l1,
)
from .fwt import read_fwt, write_fwt

__version__ = "0.1.0"

__all__ = [
    "GoboError", "QuantizerError", "EmptyMatrix", "DegenerateSigma",
    "TooFewWeights", "ContainerError", "UnsupportedBits", "BadMagic",
    "TruncatedStream", "CountMismatch", "BadOutlierRecord",
    "TooManyOutliersInSM", "KernelError", "DimensionMismatch",
    "NonFiniteActivation", "SimulatorError", "BitsMismatch",
    "ScheduleIncomplete",
    "GaussianFit", "OutlierSet", "QuantizedLayer", "SUPPORTED_BITS",
    "DEFAULT_THRESHOLD", "fit_gaussian", "log_pdf", "detect_outliers",
    "init_bins", "assign_nearest", "cluster_means", "total_l1",
    "quantize_gobo", "quantize_kmeans", "quantize_linear", "dequantize",
    "read_fwt", "write_fwt",
    "__version__",
]
