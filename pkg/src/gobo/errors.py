"""Exception hierarchy for the gobo toolkit.

Every error raised by the library derives from GoboError so callers can catch
one base class.  The CLI maps each family to a distinct exit code.
"""


class GoboError(Exception):
    """Base class for all gobo errors."""


# ---------------------------------------------------------------- quantizer


class QuantizerError(GoboError):
    """Base class for errors raised while fitting or quantizing weights."""


class EmptyMatrix(QuantizerError):
    """The weight matrix has no elements."""


class DegenerateSigma(QuantizerError):
    """The weights have (near) zero spread, so the Gaussian fit is undefined."""


class TooFewWeights(QuantizerError):
    """Fewer inlier weights than centroids requested."""


# ---------------------------------------------------------------- container


class ContainerError(GoboError):
    """Base class for errors in the compressed container codec."""


class UnsupportedBits(ContainerError):
    """Index width outside the supported 2..6 bit range."""


class BadMagic(ContainerError):
    """Stream does not start with the GOBO magic, or the version is unknown."""


class TruncatedStream(ContainerError):
    """Stream ended before the declared sections were complete."""


class CountMismatch(ContainerError):
    """Outlier counts disagree with the stored records."""


class BadOutlierRecord(ContainerError):
    """An outlier triplet points outside its submatrix or repeats a slot."""


class TooManyOutliersInSM(ContainerError):
    """A submatrix holds more outliers than the count byte can express."""


# ---------------------------------------------------------------- kernel


class KernelError(GoboError):
    """Base class for matrix-vector kernel errors."""


class DimensionMismatch(KernelError):
    """Activation vector length does not match the layer's column count."""


class NonFiniteActivation(KernelError):
    """Activations contain NaN or infinity."""


# ---------------------------------------------------------------- simulator


class SimulatorError(GoboError):
    """Base class for tile simulator errors."""


class BitsMismatch(SimulatorError):
    """Layer index width is not servable by the requested tile arrangement."""


class ScheduleIncomplete(SimulatorError):
    """A dataflow plan does not cover the layer it is being run against."""
