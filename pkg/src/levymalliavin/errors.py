"""Exception hierarchy shared by all modules."""


class LevyMalliavinError(Exception):
    """Base class for all errors raised by this package."""


class NonIntegrable(LevyMalliavinError):
    """An integral against the jump measure diverges (set touches 0)."""


class EmptyPartition(LevyMalliavinError):
    """The jump measure has no mass on any sector."""


class HorizonExceeded(LevyMalliavinError):
    """A time outside [0, T] was requested."""


class UnsupportedJumpSize(LevyMalliavinError):
    """A jump size falls outside the sectors covered by the partition."""


class ZeroJump(LevyMalliavinError):
    """A perturbation with jump size v = 0 was requested."""


class DomainError(LevyMalliavinError):
    """Scalar evaluation left its domain (e.g. division by zero)."""

    def __init__(self, message, location=""):
        super().__init__(f"{message} at {location or '<root>'}")
        self.location = location


class SigmaNotZero(LevyMalliavinError):
    """The difference operator only exists for pure-jump triplets."""


class NotCylindrical(LevyMalliavinError):
    """The shift quotient needs a cylindrical functional."""


class ToleranceExceeded(LevyMalliavinError):
    """A pathwise identity failed; carries the offending sample."""

    def __init__(self, message, omega_json=None, r=None, v=None):
        super().__init__(message)
        self.omega_json = omega_json
        self.r = r
        self.v = v


class OverlappingBoxes(LevyMalliavinError):
    """Multiple integrals of indicators require pairwise disjoint boxes."""


class ZeroMeasureBox(LevyMalliavinError):
    """A box with vanishing control measure cannot normalise a coefficient."""


class BackendMismatch(LevyMalliavinError):
    """Two simulation backends do not share triplet and horizon."""


class ConfigInvalid(LevyMalliavinError):
    """The experiment config failed schema validation."""
