"""Exception hierarchy shared by every ellipose module."""


class ElliposeError(Exception):
    """Base class for all library errors."""


class DegenerateConic(ElliposeError):
    """A dual conic does not describe a real ellipse."""


class DegenerateProjection(ElliposeError):
    """An ellipsoid does not project to an ellipse for the given camera."""


class InvalidSampling(ElliposeError):
    pass


class EmptyIntersection(ElliposeError):
    """An ellipse lies entirely outside the image rectangle."""


class NonFiniteCost(ElliposeError):
    pass


class CollinearPoints(ElliposeError):
    pass


class NoRealSolution(ElliposeError):
    pass


class InsufficientObjects(ElliposeError):
    pass


class NoValidPose(ElliposeError):
    pass


class MissingSigma(ElliposeError):
    pass


class PlacementFailure(ElliposeError):
    pass


class FrameMismatch(ElliposeError):
    pass
