"""Exception hierarchy shared across the package."""


class TactileGraspError(Exception):
    pass


class InvalidArgumentError(TactileGraspError, ValueError):
    pass


class InvalidRotationError(InvalidArgumentError):
    pass


class FrameError(TactileGraspError, ValueError):
    """Raised when wrenches expressed in different frames are combined."""


class SingularityError(TactileGraspError):
    """The Jacobian is singular or too close to singular to invert.

    ``measure`` is sqrt(det(J J^T)) at the offending configuration and
    ``ratio`` the smallest-to-largest singular value ratio.
    """

    def __init__(self, measure: float, ratio: float, message: str | None = None):
        self.measure = float(measure)
        self.ratio = float(ratio)
        super().__init__(
            message
            or f"singular Jacobian: measure={self.measure:.3e}, sigma_min/sigma_max={self.ratio:.3e}"
        )


class TrainingError(TactileGraspError):
    pass


class ConfigError(TactileGraspError, ValueError):
    pass
