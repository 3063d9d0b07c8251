"""Exception hierarchy shared by all modules."""


class SphereOTError(Exception):
    """Base class for errors raised by sphereot."""


class NumericalError(SphereOTError):
    """A computation produced a degenerate or non-finite intermediate."""


class ConfigError(SphereOTError, ValueError):
    """Invalid user-supplied configuration or input shape."""


class DegenerateProjection(NumericalError):
    """A point is (numerically) orthogonal to the plane of a projection frame."""


class UnsupportedDimension(ConfigError):
    """Operation is only defined for a specific ambient dimension."""


class NonOrthonormalAxis(ConfigError):
    pass


class GramSchmidtBreakdown(NumericalError):
    pass


class EmptyMeasure(ConfigError):
    pass


class SizeMismatch(ConfigError):
    pass


class TooLarge(ConfigError):
    pass


class NonConvergence(NumericalError):
    pass


class ShapeMismatch(ConfigError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, epoch, value):
        super().__init__(f"non-finite training loss {value!r} at epoch {epoch}")
        self.epoch = epoch
        self.value = value


class NonFiniteUpdate(NumericalError):
    pass


class NonFinitePotential(NumericalError):
    pass
