"""Exception hierarchy shared across the package."""


class SgmmError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(SgmmError):
    """Shapes of features, parameters, or fields do not agree."""


class NotPositiveDefinite(SgmmError):
    """Covariance failed Cholesky factorization even after ridge repair."""


class AllNegInfinite(SgmmError):
    """log-sum-exp of a vector whose entries are all -inf."""


class NonFiniteLikelihood(SgmmError):
    """EM produced a NaN or infinite log-likelihood."""


class EmptyCluster(SgmmError):
    """A k-means cluster lost all its points and could not be refilled."""


class EmptyNeighborhood(SgmmError):
    """All kernel weights vanish at a query location (compact kernel far from data)."""


class RowMisalignment(SgmmError):
    """A mixing field is not aligned one-to-one with the dataset rows."""


class RejectionBudgetExceeded(SgmmError):
    """Truncated-Gaussian rejection sampling exhausted its proposal budget."""


class ZeroTotalDensity(SgmmError):
    """The marginal spatial density is zero at the requested location."""


class SingleClass(SgmmError):
    """A binary metric was given labels containing only one class."""
