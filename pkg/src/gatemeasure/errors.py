"""Exception types raised by the simulator."""


class GateMeasureError(Exception):
    """Base class for all simulator errors."""


class NonHermitianInput(GateMeasureError, ValueError):
    pass


class DimensionMismatch(GateMeasureError, ValueError):
    pass


class IndexOutOfRange(GateMeasureError, IndexError):
    pass


class AllGatesClosed(GateMeasureError, RuntimeError):
    """The state has (numerically) zero closeness to every gate."""


class BoundViolation(GateMeasureError, RuntimeError):
    """A ledger bound or the conservation law failed during a run.

    This never happens for a correct implementation; it signals a bug.
    """


class NotAPartition(GateMeasureError, ValueError):
    """Subspace projectors are not pairwise orthogonal or do not sum to I."""
