"""Six-joint serial arm: forward kinematics, geometric Jacobian and the
joint-torque / end-effector wrench maps.

Link geometry uses the standard Denavit-Hartenberg convention, one row per
link: ``(a, alpha, d, theta_offset)`` so that

    T_i = Rz(q_i + theta_offset_i) Tz(d_i) Tx(a_i) Rx(alpha_i)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, SingularityError
from .wrench import Frame, Wrench

N_JOINTS = 6

# sigma_min < SINGULAR_RATIO * sigma_max is treated as singular
SINGULAR_RATIO = 1e-8

_H = np.pi / 2
DEFAULT_DH = (
    (0.15, _H, 0.20, 0.0),
    (0.30, -_H, 0.00, 0.0),
    (0.20, _H, 0.00, 0.0),
    (0.15, -_H, 0.15, 0.0),
    (0.15, _H, 0.00, 0.0),
    (0.15, -_H, 0.10, 0.0),
)
# well-conditioned start pose for DEFAULT_DH (sigma_min/sigma_max ~ 0.14)
DEFAULT_Q0 = (0.0, -0.2, -0.4, 1.9, -0.5, 1.4)


def wrap_angle(q):
    """Map angles onto (-pi, pi]."""
    q = np.asarray(q, dtype=float)
    return np.pi - np.mod(np.pi - q, 2.0 * np.pi)


def _as_vector(x, n: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise InvalidArgumentError(f"{name} must have shape ({n},), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return v


@dataclass(frozen=True)
class ArmModel:
    dh: np.ndarray

    def __post_init__(self):
        dh = np.array(self.dh, dtype=float)
        if dh.shape != (N_JOINTS, 4):
            raise InvalidArgumentError(f"arm needs 6 rows of (a, alpha, d, offset), got shape {dh.shape}")
        if not np.all(np.isfinite(dh)):
            raise InvalidArgumentError("arm parameters must be finite")
        if np.any(dh[:, 0] < 0) or np.any(dh[:, 2] < 0):
            raise InvalidArgumentError("link lengths and offsets must be non-negative")
        dh.setflags(write=False)
        object.__setattr__(self, "dh", dh)

    def __eq__(self, other):
        if not isinstance(other, ArmModel):
            return NotImplemented
        return bool(np.array_equal(self.dh, other.dh))

    def __hash__(self):
        return hash(self.dh.tobytes())

    @classmethod
    def default(cls) -> "ArmModel":
        return cls(np.array(DEFAULT_DH))


@dataclass(frozen=True)
class JointState:
    q: np.ndarray
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))

    def __post_init__(self):
        q = wrap_angle(_as_vector(self.q, N_JOINTS, "q"))
        qdot = _as_vector(self.qdot, N_JOINTS, "qdot")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)

    @property
    def direction(self) -> np.ndarray:
        return np.sign(self.qdot)


@dataclass(frozen=True)
class Pose:
    """End-effector pose in the base frame.

    ``rotation`` holds the end-effector axes as columns (expressed in base
    coordinates). Its transpose maps base-frame vectors into the
    end-effector frame; see :attr:`base_to_ee`.
    """

    rotation: np.ndarray
    position: np.ndarray

    @property
    def base_to_ee(self) -> np.ndarray:
        return self.rotation.T


def link_transform(a: float, alpha: float, d: float, theta: float) -> np.ndarray:
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _frames(model: ArmModel, q: np.ndarray) -> list[np.ndarray]:
    """Homogeneous transforms of frames 0..6 (frame 0 is the base)."""
    T = np.eye(4)
    frames = [T]
    for (a, alpha, d, offset), qi in zip(model.dh.tolist(), q.tolist()):
        T = T @ link_transform(a, alpha, d, qi + offset)
        frames.append(T)
    return frames


def forward_kinematics(model: ArmModel, q) -> Pose:
    q = _as_vector(q, N_JOINTS, "q")
    T = _frames(model, q)[-1]
    return Pose(rotation=T[:3, :3].copy(), position=T[:3, 3].copy())


def _jacobian_from_frames(frames: list[np.ndarray]) -> np.ndarray:
    stacked = np.stack(frames[:-1])
    z = stacked[:, :3, 2]
    r = frames[-1][:3, 3] - stacked[:, :3, 3]
    J = np.empty((6, N_JOINTS))
    # column i: (z_i x (p_e - p_i); z_i)
    J[0] = z[:, 1] * r[:, 2] - z[:, 2] * r[:, 1]
    J[1] = z[:, 2] * r[:, 0] - z[:, 0] * r[:, 2]
    J[2] = z[:, 0] * r[:, 1] - z[:, 1] * r[:, 0]
    J[3:] = z.T
    return J


def geometric_jacobian(model: ArmModel, q) -> np.ndarray:
    """6x6 Jacobian; rows are (linear velocity; angular velocity) in base frame."""
    q = _as_vector(q, N_JOINTS, "q")
    return _jacobian_from_frames(_frames(model, q))


def kinematics(model: ArmModel, q) -> tuple[Pose, np.ndarray]:
    """Pose and Jacobian from a single pass over the chain."""
    q = _as_vector(q, N_JOINTS, "q")
    frames = _frames(model, q)
    T = frames[-1]
    return Pose(T[:3, :3].copy(), T[:3, 3].copy()), _jacobian_from_frames(frames)


def singularity_measure(J) -> float:
    """sqrt(det(J J^T)); zero at a singular configuration."""
    J = np.asarray(J, dtype=float)
    if J.shape[0] == J.shape[1]:
        # equals |det J| for a square Jacobian, without squaring the conditioning
        return float(abs(np.linalg.det(J)))
    det = np.linalg.det(J @ J.T)
    return float(np.sqrt(max(det, 0.0)))


def joint_torques_from_wrench(J, F) -> np.ndarray:
    """tau = J^T F with F stacked as (force; torque) in the base frame."""
    if isinstance(F, Wrench):
        if F.frame is not Frame.BASE:
            raise InvalidArgumentError("joint torques need a base-frame wrench")
        F = F.as_vector()
    return np.asarray(J, dtype=float).T @ np.asarray(F, dtype=float)


def wrench_from_joint_torques(J, tau_int) -> Wrench:
    """Recover the base-frame wrench (J J^T)^-1 J tau from joint torques.

    Solved through the SVD of J, which also supplies the singularity guard.
    """
    J = np.asarray(J, dtype=float)
    tau = np.asarray(tau_int, dtype=float)
    U, s, Vt = np.linalg.svd(J)
    if s[0] == 0.0 or s[-1] < SINGULAR_RATIO * s[0]:
        ratio = s[-1] / s[0] if s[0] > 0 else 0.0
        raise SingularityError(float(np.prod(s)), ratio)
    # J^T = V S U^T  =>  F = U S^-1 V^T tau
    return Wrench.from_vector(U @ ((Vt @ tau) / s), Frame.BASE)
