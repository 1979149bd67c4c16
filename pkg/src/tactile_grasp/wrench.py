"""Six-axis force/torque values, the base-to-hand frame change and the
per-axis threshold filter."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import FrameError, InvalidArgumentError, InvalidRotationError

AXES = ("fx", "fy", "fz", "tx", "ty", "tz")

DEFAULT_FORCE_THRESHOLD = 0.2  # N
DEFAULT_TORQUE_THRESHOLD = 0.02  # N*m


class Frame(enum.Enum):
    BASE = "base"
    END_EFFECTOR = "ee"


@dataclass(frozen=True)
class Wrench:
    force: np.ndarray
    torque: np.ndarray
    frame: Frame

    def __post_init__(self):
        if not isinstance(self.frame, Frame):
            raise InvalidArgumentError(f"frame must be a Frame, got {self.frame!r}")
        for name in ("force", "torque"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.isfinite(v).all():
                raise InvalidArgumentError(f"{name} must be a finite 3-vector")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_vector(cls, F, frame: Frame) -> "Wrench":
        F = np.asarray(F, dtype=float)
        if F.shape != (6,):
            raise InvalidArgumentError(f"wrench vector must have 6 entries, got {F.shape}")
        return cls(F[:3], F[3:], frame)

    @classmethod
    def zero(cls, frame: Frame) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3), frame)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    def _check_frame(self, other: "Wrench"):
        if other.frame is not self.frame:
            raise FrameError(f"cannot combine {self.frame.value} and {other.frame.value} wrenches")

    def __add__(self, other: "Wrench") -> "Wrench":
        if not isinstance(other, Wrench):
            return NotImplemented
        self._check_frame(other)
        return Wrench(self.force + other.force, self.torque + other.torque, self.frame)

    def __sub__(self, other: "Wrench") -> "Wrench":
        if not isinstance(other, Wrench):
            return NotImplemented
        self._check_frame(other)
        return Wrench(self.force - other.force, self.torque - other.torque, self.frame)


def csv_header(frame: Frame) -> list[str]:
    return [f"{frame.value}_{axis}" for axis in AXES]


_EYE3 = np.eye(3)


def _det3(R: np.ndarray) -> float:
    (a, b, c), (d, e, f), (g, h, i) = R.tolist()
    return a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g)


def check_rotation(R, tol: float = 1e-8) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.isfinite(R).all():
        raise InvalidRotationError("rotation must be a finite 3x3 matrix")
    det = _det3(R)
    if np.abs(R.T @ R - _EYE3).max() > tol or abs(det - 1.0) > tol:
        raise InvalidRotationError("matrix is not a proper rotation")
    return R


def transform_wrench(R_b_e, w: Wrench) -> Wrench:
    """Express a base-frame wrench in the end-effector frame.

    ``R_b_e`` maps base coordinates to end-effector coordinates; force and
    torque are rotated separately (no lever-arm term, the sensing point and
    hand frame coincide).
    """
    R = check_rotation(R_b_e)
    if w.frame is not Frame.BASE:
        raise FrameError("transform_wrench expects a base-frame wrench")
    return Wrench(R @ w.force, R @ w.torque, Frame.END_EFFECTOR)


def transform_wrench_to_base(R_b_e, w: Wrench) -> Wrench:
    """Inverse of :func:`transform_wrench`."""
    R = check_rotation(R_b_e)
    if w.frame is not Frame.END_EFFECTOR:
        raise FrameError("transform_wrench_to_base expects an end-effector wrench")
    return Wrench(R.T @ w.force, R.T @ w.torque, Frame.BASE)


@dataclass(frozen=True)
class ThresholdFilter:
    threshold: np.ndarray

    def __post_init__(self):
        t = np.array(self.threshold, dtype=float)
        if t.shape == ():
            t = np.full(6, float(t))
        if t.shape != (6,) or not np.all(np.isfinite(t)) or np.any(t < 0):
            raise InvalidArgumentError("thresholds must be six finite non-negative values")
        t.setflags(write=False)
        object.__setattr__(self, "threshold", t)

    def __eq__(self, other):
        if not isinstance(other, ThresholdFilter):
            return NotImplemented
        return bool(np.array_equal(self.threshold, other.threshold))

    def __hash__(self):
        return hash(self.threshold.tobytes())

    @classmethod
    def default(cls) -> "ThresholdFilter":
        return cls([DEFAULT_FORCE_THRESHOLD] * 3 + [DEFAULT_TORQUE_THRESHOLD] * 3)


def threshold_vector(threshold: np.ndarray, x: np.ndarray) -> np.ndarray:
    # |x| == threshold passes
    return np.where(np.abs(x) < threshold, 0.0, x)


def apply_threshold(filt: ThresholdFilter, w: Wrench) -> Wrench:
    return Wrench.from_vector(threshold_vector(filt.threshold, w.as_vector()), w.frame)


def contact_sign_check(f, v) -> bool:
    """True when force opposes velocity on every axis where both are nonzero."""
    f = np.asarray(f, dtype=float)
    v = np.asarray(v, dtype=float)
    active = (f != 0) & (v != 0)
    return bool(np.all(np.sign(f[active]) == -np.sign(v[active])))
