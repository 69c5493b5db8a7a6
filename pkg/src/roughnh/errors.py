"""Exception hierarchy shared by all modules."""


class RoughNHError(Exception):
    """Base class for every error raised by the package."""


class OutOfDomain(RoughNHError):
    pass


class DegenerateConstraint(RoughNHError):
    pass


class NonFiniteInput(RoughNHError, ValueError):
    pass


class InvalidParameter(RoughNHError, ValueError):
    pass


class QuadratureUnderflow(RoughNHError):
    pass


class ZeroVelocity(RoughNHError, ValueError):
    pass


class AnchorViolation(RoughNHError):
    pass


class SingularGram(RoughNHError):
    pass


class LeftSublevel(RoughNHError):
    """A trajectory node left the sublevel set ``V < h``."""


class StepTooLarge(RoughNHError):
    """Energy drift over a single step exceeded ``1e-3 * |h'|``."""


class PivotInconsistent(RoughNHError):
    pass


class GridMismatch(RoughNHError, ValueError):
    pass


class RankDeficient(RoughNHError):
    pass


class TooFewNodes(RoughNHError, ValueError):
    pass


class InvalidAlpha(RoughNHError, ValueError):
    pass


class ConfigError(RoughNHError, ValueError):
    pass


class MalformedTrajectory(RoughNHError, ValueError):
    pass
