"""Object surface model: spring normal force, friction torque about the
approach axis with a high-friction edge, lateral finger elasticity and
misalignment torques."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional

from .errors import ConfigError, InvalidArgumentError


@dataclass(frozen=True)
class ContactWorld:
    z0: float = 0.0
    K_z: float = 500.0
    K_x: float = 300.0
    K_y: float = 300.0
    d: float = 0.05
    mu_surface: float = 0.2
    mu_edge: float = 0.5
    edge_radius: float = 0.35
    # restoring torque per radian of tilt while touching; a modelling choice
    K_rx: float = 2.0
    K_ry: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise InvalidArgumentError(f"{f.name} must be finite")
        if min(self.K_z, self.K_x, self.K_y) <= 0:
            raise InvalidArgumentError("stiffnesses must be positive")
        if not 0 < self.mu_surface < self.mu_edge:
            raise InvalidArgumentError("need 0 < mu_surface < mu_edge")
        if self.d <= 0:
            raise InvalidArgumentError("lever arm d must be positive")
        if self.edge_radius < 0 or self.K_rx < 0 or self.K_ry < 0:
            raise InvalidArgumentError("edge_radius and tilt stiffnesses must be non-negative")

    @classmethod
    def from_mapping(cls, m: Mapping[str, object]) -> "ContactWorld":
        names = {f.name for f in fields(cls)}
        unknown = set(m) - names
        if unknown:
            raise ConfigError(f"unknown contact keys: {sorted(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in m.items()})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_mapping(self) -> dict:
        return asdict(self)


@dataclass
class ContactState:
    """Hand placement relative to the object, owned by the simulation loop.

    ``z`` is the fingertip coordinate along the approach axis; the surface
    sits at ``world.z0``. ``tilt_x``/``tilt_y`` are the misalignment angles
    between hand and surface.
    """

    z: float = 0.0
    dx: float = 0.0
    dy: float = 0.0
    rotation: float = 0.0
    tilt_x: float = 0.0
    tilt_y: float = 0.0
    in_contact: bool = False

    def penetration(self, world: ContactWorld) -> float:
        return max(self.z - world.z0, 0.0)


def normal_force(world: ContactWorld, z: float) -> float:
    if z <= world.z0:
        return 0.0
    return -world.K_z * (z - world.z0)


def friction_coefficient(world: ContactWorld, rotation_progress: float) -> float:
    return world.mu_edge if rotation_progress >= world.edge_radius else world.mu_surface


def friction_torque_z(world: ContactWorld, f_z: float, rotation_progress: float) -> float:
    return world.d * friction_coefficient(world, rotation_progress) * f_z


def lateral_forces(world: ContactWorld, dx: float, dy: float, in_contact: bool) -> tuple[float, float]:
    if not in_contact:
        return 0.0, 0.0
    return -world.K_x * dx, -world.K_y * dy


def misalignment_torques(world: ContactWorld, tilt_x: float, tilt_y: float, in_contact: bool) -> tuple[float, float]:
    if not in_contact:
        return 0.0, 0.0
    return -world.K_rx * tilt_x, -world.K_ry * tilt_y


def edge_stop_condition(params, world: ContactWorld, mu: Optional[float] = None) -> bool:
    """True when z-rotation cannot continue at friction ``mu`` (default: the edge).

    With f_z < 0 the angular drive is a_wz f_z (beta_wz - d mu), so rotation
    is halted (or reversed) once beta_wz <= d mu.
    """
    mu = world.mu_edge if mu is None else mu
    return params.beta_wz <= world.d * mu
