"""Tactile feedback command laws and the first-order hand velocity lag.

The hand obeys ``v' + b v = u`` per axis (linear and angular). Commands are
computed from the filtered end-effector wrench:

    u_vx = a_vx f_x              u_wx = a_wx t_x
    u_vy = a_vy f_y              u_wy = a_wy t_y
    u_vz = b_z v_dz (1 + a_vz f_z)
    u_wz = a_wz (beta_wz f_z - t_z)
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional

import numpy as np

from .errors import ConfigError, FrameError, InvalidArgumentError
from .wrench import Frame, Wrench

MAX_DT = 0.01


@dataclass(frozen=True)
class ControllerParams:
    v_dz: float
    alpha_vx: float
    alpha_vy: float
    alpha_vz: float
    alpha_wx: float
    alpha_wy: float
    alpha_wz: float
    beta_wz: float
    b_x: float
    b_y: float
    b_z: float
    b_wx: float
    b_wy: float
    b_wz: float
    tau_dz: Optional[float] = None
    f_f: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if not math.isfinite(v):
                raise InvalidArgumentError(f"{f.name} must be finite")
        if min(self.b_linear.min(), self.b_angular.min()) <= 0:
            raise InvalidArgumentError("damping ratios b_* must be positive")
        if self.alpha_vz <= 0:
            raise InvalidArgumentError("alpha_vz must be positive")

    @classmethod
    def table_one(cls) -> "ControllerParams":
        """Gains used for the canned-object grasp experiment."""
        return cls(
            v_dz=0.0055,
            alpha_vx=0.0025,
            alpha_vy=0.0025,
            alpha_vz=0.4,
            alpha_wx=0.25,
            alpha_wy=0.0025,
            alpha_wz=1.0,
            beta_wz=0.025,
            b_x=1.0,
            b_y=1.0,
            b_z=1.0,
            b_wx=1.0,
            b_wy=1.0,
            b_wz=1.0,
        )

    @classmethod
    def from_mapping(cls, m: Mapping[str, object]) -> "ControllerParams":
        names = {f.name for f in fields(cls)}
        unknown = set(m) - names
        if unknown:
            raise ConfigError(f"unknown controller keys: {sorted(unknown)}")
        required = {f.name for f in fields(cls) if f.default is not None}
        missing = required - set(m)
        if missing:
            raise ConfigError(f"missing controller keys: {sorted(missing)}")
        try:
            return cls(**{k: float(v) for k, v in m.items()})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @property
    def b_linear(self) -> np.ndarray:
        return np.array([self.b_x, self.b_y, self.b_z])

    @property
    def b_angular(self) -> np.ndarray:
        return np.array([self.b_wx, self.b_wy, self.b_wz])


@dataclass(frozen=True)
class HandVelocity:
    linear: np.ndarray
    angular: np.ndarray

    @classmethod
    def zero(cls) -> "HandVelocity":
        return cls(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass(frozen=True)
class CommandVector:
    u_v: np.ndarray
    u_w: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.u_v, self.u_w])


def grasp_command(params: ControllerParams, w: Wrench) -> CommandVector:
    if w.frame is not Frame.END_EFFECTOR:
        raise FrameError("grasp commands need an end-effector wrench")
    fx, fy, fz = w.force
    tx, ty, tz = w.torque
    p = params
    u_v = np.array([p.alpha_vx * fx, p.alpha_vy * fy, p.b_z * p.v_dz * (1.0 + p.alpha_vz * fz)])
    u_w = np.array([p.alpha_wx * tx, p.alpha_wy * ty, p.alpha_wz * (p.beta_wz * fz - tz)])
    return CommandVector(u_v, u_w)


def generic_force_command(alpha_v: float, f_f: float, f_e: float) -> float:
    return alpha_v * (f_f - f_e)


def generic_torque_command(alpha_w: float, tau_d: float, tau_e: float) -> float:
    return alpha_w * (tau_d - tau_e)


def velocity_dynamics_step(vel: HandVelocity, cmd: CommandVector, params: ControllerParams, dt: float) -> HandVelocity:
    """One explicit Euler step of v' + b v = u on all six axes."""
    if not (0 < dt <= MAX_DT):
        raise InvalidArgumentError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    v = vel.linear + dt * (cmd.u_v - params.b_linear * vel.linear)
    w = vel.angular + dt * (cmd.u_w - params.b_angular * vel.angular)
    return HandVelocity(v, w)


@dataclass(frozen=True)
class SteadyState:
    v_free: float
    f_zf: float
    tau_zf: float
    omega_z_unmodified: Optional[float]

    def wrench_vector(self) -> np.ndarray:
        """Predicted end-effector wrench once the grasp has settled."""
        return np.array([0.0, 0.0, self.f_zf, 0.0, 0.0, self.tau_zf])


def predicted_steady_state(params: ControllerParams, contact=None) -> SteadyState:
    """Closed-form equilibrium of the command laws.

    Free approach speed is v_dz, the contact force settles at -1/alpha_vz and
    the z torque at beta_wz times that force. ``contact`` is accepted for
    symmetry with the simulator; the equilibrium does not depend on it.
    """
    if not params.alpha_vz > 0:
        raise InvalidArgumentError("alpha_vz must be positive")
    f_zf = -1.0 / params.alpha_vz
    omega = None
    if params.tau_dz is not None:
        omega = params.alpha_wz * params.tau_dz / params.b_wz
    return SteadyState(v_free=params.v_dz, f_zf=f_zf, tau_zf=params.beta_wz * f_zf, omega_z_unmodified=omega)
