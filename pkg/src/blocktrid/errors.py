"""Exception and warning types raised by the library."""


class BlockTridError(Exception):
    """Base class for all numeric failures; ``name`` is what the CLI reports."""

    @property
    def name(self) -> str:
        return type(self).__name__


class SingularHopping(BlockTridError):
    pass


class InvalidBoundary(BlockTridError):
    pass


class InvalidChain(BlockTridError):
    pass


class OverflowRegime(BlockTridError):
    def __init__(self, message: str, scale_gap: float | None = None):
        super().__init__(message)
        self.scale_gap = scale_gap


class NotHermitian(BlockTridError):
    pass


class ConvergenceFailure(BlockTridError):
    pass


class SingularTransfer(BlockTridError):
    pass


class WrongBlockSize(BlockTridError):
    pass


class SingularSample(BlockTridError):
    def __init__(self, message: str, phi: float | None = None):
        super().__init__(message)
        self.phi = phi


class TooCloseToLoop(BlockTridError):
    def __init__(self, message: str, distance: float | None = None):
        super().__init__(message)
        self.distance = distance


class ExponentTooClose(BlockTridError):
    pass


class BranchResolutionFailure(BlockTridError):
    pass


class AtBandEdge(BlockTridError):
    pass


class NoExtremum(BlockTridError):
    pass


class StripExtremum(BlockTridError):
    pass


class InsufficientStatistics(BlockTridError):
    pass


class TrackingAmbiguity(UserWarning):
    """Two tracked eigenvalues came within the collision tolerance."""


class PairingAmbiguity(UserWarning):
    """Transfer-matrix eigenvalues could not be paired as (z, 1/z)."""


class DegenerateGrowth(UserWarning):
    """Consecutive Lyapunov rates are too close to separate reliably."""


class HermitianSymmetrized(UserWarning):
    """A diagonal block was not exactly Hermitian and has been symmetrized."""
