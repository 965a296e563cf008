"""Exception hierarchy shared by all modules."""


class PolylayerError(Exception):
    """Base class for every error raised by the package."""


class DomainError(PolylayerError, ValueError):
    """A parameter lies outside its admissible range (angles, sizes, counts)."""


class GeometryError(PolylayerError, ValueError):
    """A point or a configuration violates a geometric constraint."""


class MeshError(PolylayerError, ValueError):
    """A mesh cannot be built or does not satisfy the consumer's requirements."""


class NumericalError(PolylayerError, RuntimeError):
    """A factorization, iteration or bisection failed."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals
