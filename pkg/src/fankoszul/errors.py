"""Shared exception types."""


class FanKoszulError(Exception):
    """Base class for all library errors."""


class MalformedDocument(FanKoszulError):
    """A fan document failed to parse or violates its schema."""


class NonPointedCone(FanKoszulError):
    """A listed cone contains a line."""


class NonPrimitiveRay(FanKoszulError):
    """A ray generator is not a primitive integer vector."""


class NotFullDimensional(FanKoszulError):
    """Dual-cone computation requires a full-dimensional cone."""


class NotPointed(FanKoszulError):
    """Dual-cone computation requires a pointed cone."""


class FaceNotInFan(FanKoszulError):
    """A face id does not belong to the fan in question."""


class CutoffTooSmall(FanKoszulError):
    """A degreewise computation did not stabilize inside the stored range.

    Callers may retry with a larger cutoff; automatic retry doubles the
    cutoff up to a hard cap.
    """


class RangeMismatch(FanKoszulError):
    """Two degreewise objects are stored on incompatible ranges."""


class NotPure(FanKoszulError):
    """An operation requiring a pure sheaf received a non-pure one."""


class NotInHeart(FanKoszulError):
    """Normal form requested for a complex outside the heart."""


class ShiftMismatch(FanKoszulError):
    """Composition of graded maps with incompatible shifts."""


class SignAuditFailure(FanKoszulError):
    """A cellular differential failed to square to zero."""
