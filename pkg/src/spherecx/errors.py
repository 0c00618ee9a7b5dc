"""Exception types shared across the package."""


class SphereCxError(Exception):
    """Base class for all package errors."""


class NotTrivalent(SphereCxError):
    pass


class Disconnected(SphereCxError):
    pass


class WrongRank(SphereCxError):
    pass


class EmptySubsystem(SphereCxError):
    pass


class BadMatching(SphereCxError):
    pass


class BadChi(SphereCxError):
    pass


class IncompatiblePieces(SphereCxError):
    pass


class BoundaryParallelDisk(SphereCxError):
    pass


class NestingInconsistent(SphereCxError):
    pass


class ScaffoldMismatch(SphereCxError):
    pass


class NotCoordinateDisjoint(SphereCxError):
    """Constructive disjointness search failed; signals *unknown*, not distance > 2."""


class NotInnermost(SphereCxError):
    pass


class IndexOutOfRange(SphereCxError):
    pass


class BadAlignment(SphereCxError):
    pass


class NotProperSubsystem(SphereCxError):
    pass


class UnsupportedPreset(SphereCxError):
    pass


class NoPathFoundWithinBudget(SphereCxError):
    pass


class BudgetExceeded(SphereCxError):
    pass


class HypothesisNotCertified(SphereCxError):
    pass


class NotAdjacent(SphereCxError):
    pass


class ConfigInvalid(SphereCxError):
    pass
