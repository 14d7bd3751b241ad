"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes do not match the operator's declared dimensions."""


class JointRankError(ValueError):
    """The stacked pair ``[A; L]`` does not have full column rank."""


class NotPSDError(ValueError):
    """A matrix expected to be positive semi-definite has a negative eigenvalue."""


class OperatorNotSPDError(ArithmeticError):
    """Conjugate gradients met a direction with non-positive curvature."""


class BreakdownError(ArithmeticError):
    """An iteration produced a non-finite value or annihilated its working vector."""
