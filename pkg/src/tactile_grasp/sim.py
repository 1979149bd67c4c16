"""Fixed-step closed-loop grasp simulation.

Each step runs the sensing and control chain in order:

1. contact model -> true hand-frame wrench
2. joint sensors: J^T F + motion bias + noise
3. subtract the predicted bias
4. recover the base-frame wrench through the Jacobian pseudoinverse
5. rotate into the hand frame
6. threshold filter
7. feedback commands
8. first-order velocity lag
9. kinematic update of the hand placement and joint angles

The hand is moved kinematically: the commanded hand-frame twist is mapped to
joint rates through the inverse Jacobian, so joint torques stay consistent
with the contact wrench without simulating arm dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Protocol

import numpy as np

from .arm import DEFAULT_Q0, N_JOINTS, ArmModel, joint_torques_from_wrench, kinematics, wrap_angle, wrench_from_joint_torques
from .calibration import SinusoidBias, remove_bias
from .contact import (
    ContactState,
    ContactWorld,
    friction_torque_z,
    lateral_forces,
    misalignment_torques,
    normal_force,
)
from .controller import (
    MAX_DT,
    ControllerParams,
    HandVelocity,
    grasp_command,
    predicted_steady_state,
    velocity_dynamics_step,
)
from .errors import InvalidArgumentError, SingularityError
from .wrench import AXES, ThresholdFilter, apply_threshold, transform_wrench

CSV_HEADER = (
    "t",
    *(f"ee_{a}" for a in AXES),
    "vx", "vy", "vz", "wx", "wy", "wz",
    "z",
    "contact",
    "u_vx", "u_vy", "u_vz", "u_wx", "u_wy", "u_wz",
)  # fmt: skip

SETTLE_BAND = 0.02
COMPLETE_HOLD = 1.0  # s
COMPLETE_WINDOW = 0.1  # s, moving average used for the completion test
FINAL_FRACTION = 0.05


class BiasPredictor(Protocol):
    def predict(self, q: np.ndarray, direction: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Scenario:
    arm: ArmModel = field(default_factory=ArmModel.default)
    params: ControllerParams = field(default_factory=ControllerParams.table_one)
    world: ContactWorld = field(default_factory=ContactWorld)
    q0: tuple = DEFAULT_Q0
    gap: float = 0.0275
    tilt: tuple = (0.04, 0.005)
    lateral: tuple = (0.001, -0.0005)
    bias: SinusoidBias = field(default_factory=SinusoidBias.default)
    noise_sigma: tuple = (0.0005,) * N_JOINTS
    filter: ThresholdFilter = field(default_factory=ThresholdFilter.default)
    duration: float = 40.0
    dt: float = 0.001
    seed: int = 0
    # end the run once the grasp-complete condition holds
    stop_on_complete: bool = True

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidArgumentError("duration must be positive")
        if not 0 < self.dt <= MAX_DT:
            raise InvalidArgumentError(f"dt must lie in (0, {MAX_DT}]")
        if not self.gap >= 0:
            raise InvalidArgumentError("gap must be non-negative")
        sigma = np.broadcast_to(np.asarray(self.noise_sigma, dtype=float), (N_JOINTS,))
        if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
            raise InvalidArgumentError("noise_sigma must be finite and non-negative")
        object.__setattr__(self, "noise_sigma", tuple(float(s) for s in sigma))
        object.__setattr__(self, "q0", tuple(float(x) for x in self.q0))
        object.__setattr__(self, "tilt", tuple(float(x) for x in self.tilt))
        object.__setattr__(self, "lateral", tuple(float(x) for x in self.lateral))
        if len(self.q0) != N_JOINTS or len(self.tilt) != 2 or len(self.lateral) != 2:
            raise InvalidArgumentError("q0 needs 6 entries, tilt and lateral 2 each")

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.duration / self.dt - 1e-9))


@dataclass
class SimState:
    k: int
    q: np.ndarray
    qdot: np.ndarray
    velocity: HandVelocity
    contact: ContactState
    rng: np.random.Generator
    in_band_steps: int = 0
    grasp_complete_time: Optional[float] = None

    @classmethod
    def initial(cls, scenario: Scenario) -> "SimState":
        w = scenario.world
        contact = ContactState(
            z=w.z0 - scenario.gap,
            dx=scenario.lateral[0],
            dy=scenario.lateral[1],
            tilt_x=scenario.tilt[0],
            tilt_y=scenario.tilt[1],
        )
        return cls(
            k=0,
            q=wrap_angle(np.array(scenario.q0)),
            qdot=np.zeros(N_JOINTS),
            velocity=HandVelocity.zero(),
            contact=contact,
            rng=np.random.default_rng(scenario.seed),
        )


@dataclass
class StepRecord:
    t: float
    wrench_true: np.ndarray
    wrench_raw: np.ndarray
    wrench: np.ndarray  # filtered, hand frame
    wrench_base: np.ndarray
    velocity: np.ndarray
    z: float
    contact: bool
    command: np.ndarray
    tau_raw: np.ndarray
    tau_bias: np.ndarray
    tau_int: np.ndarray
    q: np.ndarray


_LOG_FIELDS = {
    "wrench_true": 6,
    "wrench_raw": 6,
    "wrench": 6,
    "velocity": 6,
    "command": 6,
    "tau_raw": 6,
    "tau_bias": 6,
    "tau_int": 6,
    "q": 6,
}


@dataclass
class SimLog:
    """Column store of step records; row i was sensed at ``t[i]``."""

    t: np.ndarray
    wrench_true: np.ndarray
    wrench_raw: np.ndarray
    wrench: np.ndarray
    velocity: np.ndarray
    z: np.ndarray
    contact: np.ndarray
    command: np.ndarray
    tau_raw: np.ndarray
    tau_bias: np.ndarray
    tau_int: np.ndarray
    q: np.ndarray
    rotation: np.ndarray
    grasp_complete: bool = False
    grasp_complete_time: Optional[float] = None
    halted: Optional[str] = None

    @classmethod
    def allocate(cls, n: int) -> "SimLog":
        cols = {name: np.zeros((n, width)) for name, width in _LOG_FIELDS.items()}
        return cls(t=np.zeros(n), z=np.zeros(n), contact=np.zeros(n, dtype=bool), rotation=np.zeros(n), **cols)

    def __len__(self) -> int:
        return len(self.t)

    def put(self, i: int, rec: StepRecord, rotation: float) -> None:
        self.t[i] = rec.t
        self.z[i] = rec.z
        self.contact[i] = rec.contact
        self.rotation[i] = rotation
        for name in _LOG_FIELDS:
            getattr(self, name)[i] = getattr(rec, name)

    def truncate(self, n: int) -> None:
        for name in ("t", "z", "contact", "rotation", *_LOG_FIELDS):
            setattr(self, name, getattr(self, name)[:n])

    def rows(self):
        for i in range(len(self.t)):
            yield (
                [self.t[i]]
                + self.wrench[i].tolist()
                + self.velocity[i].tolist()
                + [self.z[i]]
                + [int(self.contact[i])]
                + self.command[i].tolist()
            )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(CSV_HEADER) + "\n")
            for row in self.rows():
                fh.write(",".join(repr(float(x)) if not isinstance(x, int) else str(x) for x in row) + "\n")

    @classmethod
    def read_csv(cls, path) -> "SimLog":
        """Load the columns present in the CSV; unlogged channels are zero."""
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != CSV_HEADER:
                raise InvalidArgumentError("unexpected SimLog header")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        log = cls.allocate(len(data))
        log.t = data[:, 0].copy()
        log.wrench = data[:, 1:7].copy()
        log.velocity = data[:, 7:13].copy()
        log.z = data[:, 13].copy()
        log.contact = data[:, 14] != 0
        log.command = data[:, 15:21].copy()
        return log


class GraspSimulation:
    """Steps one scenario; ``predictor`` supplies the bias estimate."""

    def __init__(self, scenario: Scenario, predictor: BiasPredictor):
        self.scenario = scenario
        self.predictor = predictor
        self.state = SimState.initial(scenario)
        self.steady = predicted_steady_state(scenario.params, scenario.world)
        th = scenario.filter.threshold
        target = self.steady.wrench_vector()
        # zero-valued channels get half their filter threshold as band
        self._band = np.where(target != 0, SETTLE_BAND * np.abs(target), 0.5 * th)
        self._target = target
        self._window = max(1, int(round(COMPLETE_WINDOW / scenario.dt)))
        self._hold = int(round(COMPLETE_HOLD / scenario.dt))
        self._sigma = np.array(scenario.noise_sigma)
        self._win_buf = np.zeros((self._window, 6))
        self._win_sum = np.zeros(6)

    def true_wrench(self) -> np.ndarray:
        """Hand-frame contact wrench produced by the current placement."""
        w = self.scenario.world
        c = self.state.contact
        in_contact = c.z > w.z0
        fz = normal_force(w, c.z)
        fx, fy = lateral_forces(w, c.dx, c.dy, in_contact)
        tx, ty = misalignment_torques(w, c.tilt_x, c.tilt_y, in_contact)
        tz = friction_torque_z(w, fz, abs(c.rotation))
        return np.array([fx, fy, fz, tx, ty, tz])

    def step(self) -> StepRecord:
        sc = self.scenario
        st = self.state
        dt = sc.dt
        t = st.k * dt
        pose, J = kinematics(sc.arm, st.q)
        R = pose.rotation  # hand axes in base coordinates

        # (1) contact
        F_true_e = self.true_wrench()
        in_contact = st.contact.z > sc.world.z0
        F_true_b = np.concatenate([R @ F_true_e[:3], R @ F_true_e[3:]])

        # (2) joint sensors
        direction = np.sign(st.qdot)
        tau_raw = joint_torques_from_wrench(J, F_true_b) + sc.bias.predict(st.q, direction)
        if self._sigma.any():
            tau_raw = tau_raw + st.rng.normal(0.0, 1.0, N_JOINTS) * self._sigma

        # (3)-(6) calibration, wrench recovery, frame change, filter
        tau_bias = self.predictor.predict(st.q, direction)
        tau_int = remove_bias(tau_raw, tau_bias)
        F_base = wrench_from_joint_torques(J, tau_int)
        F_ee = transform_wrench(pose.base_to_ee, F_base)
        F_filt = apply_threshold(sc.filter, F_ee)

        # (7)-(8) commands and velocity lag
        cmd = grasp_command(sc.params, F_filt)
        vel_before = st.velocity.as_vector()
        new_vel = velocity_dynamics_step(st.velocity, cmd, sc.params, dt)

        rec = StepRecord(
            t=t,
            wrench_true=F_true_e,
            wrench_raw=F_ee.as_vector(),
            wrench=F_filt.as_vector(),
            wrench_base=F_base.as_vector(),
            velocity=vel_before,
            z=st.contact.z,
            contact=in_contact,
            command=cmd.as_vector(),
            tau_raw=tau_raw,
            tau_bias=tau_bias,
            tau_int=tau_int,
            q=st.q.copy(),
        )

        # (9) kinematic update with the new velocity (semi-implicit Euler)
        v, w = new_vel.linear, new_vel.angular
        c = st.contact
        c.z += v[2] * dt
        c.dx += v[0] * dt
        c.dy += v[1] * dt
        c.tilt_x += w[0] * dt
        c.tilt_y += w[1] * dt
        if in_contact:
            c.rotation += w[2] * dt
        c.in_contact = c.z > sc.world.z0
        twist_base = np.concatenate([R @ v, R @ w])
        st.qdot = np.linalg.solve(J, twist_base)
        st.q = wrap_angle(st.q + dt * st.qdot)
        st.velocity = new_vel
        st.k += 1
        self._track_completion(rec)
        return rec

    def _track_completion(self, rec: StepRecord) -> None:
        st = self.state
        slot = (st.k - 1) % self._window
        self._win_sum += rec.wrench - self._win_buf[slot]
        self._win_buf[slot] = rec.wrench
        if st.k < self._window or st.grasp_complete_time is not None:
            return
        mean = self._win_sum / self._window
        if rec.contact and np.all(np.abs(mean - self._target) <= self._band):
            st.in_band_steps += 1
            if st.in_band_steps >= self._hold:
                st.grasp_complete_time = rec.t
        else:
            st.in_band_steps = 0

    def run(self) -> SimLog:
        n = self.scenario.n_steps
        log = SimLog.allocate(n)
        i = 0
        try:
            while i < n:
                rec = self.step()
                log.put(i, rec, self.state.contact.rotation)
                i += 1
                if self.scenario.stop_on_complete and self.state.grasp_complete_time is not None:
                    break
        except SingularityError as exc:
            log.truncate(i)
            log.halted = f"singularity at t={self.state.k * self.scenario.dt:.6f}s: {exc}"
            exc.log = log
            raise
        log.truncate(i)
        log.grasp_complete = self.state.grasp_complete_time is not None
        log.grasp_complete_time = self.state.grasp_complete_time
        return log


def run_grasp(scenario: Scenario, predictor: Optional[BiasPredictor] = None) -> SimLog:
    """Simulate until the grasp settles or the scenario duration runs out.

    Without a ``predictor`` the ground-truth bias is subtracted, i.e. the
    calibration is perfect. A singular configuration raises
    :class:`SingularityError` with the partial log attached as ``exc.log``.
    """
    return GraspSimulation(scenario, predictor or scenario.bias).run()


# --------------------------------------------------------------------------
# analysis


@dataclass
class ConvergenceReport:
    contact_time: Optional[float]
    approach_settle_time: Optional[float]
    settle_time: dict
    final: dict
    predicted: dict
    delta: dict
    grasp_complete: bool
    grasp_complete_time: Optional[float]
    duration: float

    def to_text(self) -> str:
        def fmt(v):
            if v is None:
                return "none"
            if isinstance(v, bool):
                return "true" if v else "false"
            return repr(float(v))

        lines = [
            f"grasp_complete={fmt(self.grasp_complete)}",
            f"grasp_complete_time={fmt(self.grasp_complete_time)}",
            f"duration={fmt(self.duration)}",
            f"contact_time={fmt(self.contact_time)}",
            f"approach_settle_time={fmt(self.approach_settle_time)}",
        ]
        for group in ("final", "predicted", "delta", "settle_time"):
            for key, val in getattr(self, group).items():
                lines.append(f"{group}_{key}={fmt(val)}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @staticmethod
    def parse(text: str) -> dict:
        out = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                out[k] = v
        return out


def _settle_time(t: np.ndarray, x: np.ndarray, final: float) -> float:
    outside = np.nonzero(np.abs(x - final) > SETTLE_BAND * abs(final))[0]
    if len(outside) == 0:
        return 0.0
    i = outside[-1]
    return float(t[i + 1]) if i + 1 < len(t) else float(t[i])


def final_means(log: SimLog) -> dict:
    n = len(log)
    m = max(1, int(math.ceil(FINAL_FRACTION * n)))
    sl = slice(n - m, n)
    out = {f"ee_{a}": float(np.mean(log.wrench[sl, i])) for i, a in enumerate(AXES)}
    for i, name in enumerate(("vx", "vy", "vz", "wx", "wy", "wz")):
        out[name] = float(np.mean(log.velocity[sl, i]))
    return out


def analyze(log: SimLog, params: ControllerParams, world: Optional[ContactWorld] = None) -> ConvergenceReport:
    if len(log) == 0:
        raise InvalidArgumentError("cannot analyse an empty log")
    steady = predicted_steady_state(params, world)
    t = log.t
    contact_idx = np.nonzero(log.wrench[:, 2] != 0)[0]
    contact_time = float(t[contact_idx[0]]) if len(contact_idx) else None

    pre = slice(0, contact_idx[0]) if len(contact_idx) else slice(0, len(t))
    vz = log.velocity[pre, 2]
    inside = np.abs(vz - steady.v_free) <= SETTLE_BAND * abs(steady.v_free)
    approach = None
    if len(vz) and inside.any():
        # first entry into the band after which v_z stays in it until contact
        outside = np.nonzero(~inside)[0]
        first = 0 if len(outside) == 0 else outside[-1] + 1
        if first < len(vz):
            approach = float(t[pre][first])

    final = final_means(log)
    pred_w = steady.wrench_vector()
    predicted = {f"ee_{a}": float(pred_w[i]) for i, a in enumerate(AXES)}
    predicted["vz_free"] = steady.v_free
    delta = {k: final[k] - predicted[k] for k in predicted if k in final}
    settle = {f"ee_{a}": _settle_time(t, log.wrench[:, i], final[f"ee_{a}"]) for i, a in enumerate(AXES)}
    duration = float(t[-1] - t[0] + (t[1] - t[0] if len(t) > 1 else 0.0))
    return ConvergenceReport(
        contact_time=contact_time,
        approach_settle_time=approach,
        settle_time=settle,
        final={k: v for k, v in final.items()},
        predicted=predicted,
        delta=delta,
        grasp_complete=bool(log.grasp_complete),
        grasp_complete_time=log.grasp_complete_time,
        duration=duration,
    )
