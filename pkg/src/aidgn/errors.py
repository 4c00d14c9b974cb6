"""Exception types shared across the package."""


class AidgnError(Exception):
    """Base class for all package-specific errors."""


class ZeroVector(AidgnError):
    """A vector with zero norm was passed where a direction is required."""


class DimensionTooSmall(AidgnError):
    """Polar coordinates need at least two Cartesian dimensions."""


class DimensionMismatch(AidgnError):
    """Operands have inconsistent dimensions."""


class SingularChart(AidgnError):
    """Polar chart is singular at this point (zero radius or zero sine)."""


class NotUnit(AidgnError):
    """Expected a unit vector."""


class NotConverged(AidgnError):
    """An iterative routine hit its cap before reaching tolerance."""


class NonPositiveRate(AidgnError):
    """Exponential-law parameters must be strictly positive."""


class UnknownDomainIndex(AidgnError):
    """Domain index outside the configured source domains."""


class OutsideSupport(AidgnError):
    """A radius fell outside the target uniform support in strict mode."""


class ClassIndexOutOfRange(AidgnError):
    """Label index outside [0, C)."""


class EmptyBatch(AidgnError):
    """An operation over a batch received no samples."""


class EmptyDomain(AidgnError):
    """A required domain has no samples in the batch."""


class EmptyDataset(AidgnError):
    """Evaluation needs at least one sample."""


class NotSimplex(AidgnError):
    """A vector expected to lie on the probability simplex does not."""


class NonFiniteGradient(AidgnError):
    """Training produced a NaN or infinite gradient."""


class RepulsionFailed(AidgnError):
    """Class-center repulsion did not reach the separation target."""


class ConfigError(AidgnError):
    """Run configuration failed validation; `key` names the offending field."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
