"""Exception types shared by the tracking modules."""


class DegeneratePatchError(ValueError):
    """A patch has (near) zero variance where a normalized measure needs it."""


class CallOrderError(RuntimeError):
    """An appearance-model method was called before its upstream dependency."""


class SingularWarpError(ArithmeticError):
    """A warp is (near) singular: projective denominator or determinant ~ 0."""


class DegenerateParameterizationError(ValueError):
    """A state component has no measurable effect on the region corners."""


class NoConsensusError(RuntimeError):
    """Robust fitting found no hypothesis supported by enough inliers."""
