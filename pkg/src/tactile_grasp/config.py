"""INI-style scenario and calibration configuration.

Sections and keys::

    [arm]          link1 .. link6 = a, alpha, d, theta_offset ; q0 = six angles
    [controller]   v_dz, alpha_vx, ..., b_wz, tau_dz (optional), f_f (optional)
    [contact]      z0, K_z, K_x, K_y, d, mu_surface, mu_edge, edge_radius, K_rx, K_ry
    [filter]       force_threshold, torque_threshold
    [scenario]     gap, tilt_x, tilt_y, lateral_x, lateral_y, duration, dt, seed,
                   noise_sigma, stop_on_complete
    [bias]         joint1 .. joint6 = offset, dir_coeff[, amp, freq, phase]...
    [calibration]  samples, sample_dt, noise_sigma, epochs, batch_size,
                   learning_rate, momentum, validation_split, seed

Every section is optional; missing sections take the built-in defaults.
Unknown sections or keys are rejected so that typos do not pass silently.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from io import StringIO
from pathlib import Path
from typing import Optional

import numpy as np

from .arm import N_JOINTS, ArmModel
from .calibration import JointBias, SinusoidBias, TrainConfig
from .contact import ContactWorld
from .controller import ControllerParams
from .errors import ConfigError, TactileGraspError
from .sim import Scenario
from .wrench import DEFAULT_FORCE_THRESHOLD, DEFAULT_TORQUE_THRESHOLD, ThresholdFilter

SECTIONS = ("arm", "controller", "contact", "filter", "scenario", "bias", "calibration")

_SCENARIO_KEYS = {
    "gap", "tilt_x", "tilt_y", "lateral_x", "lateral_y",
    "duration", "dt", "seed", "noise_sigma", "stop_on_complete",
}  # fmt: skip
_CALIBRATION_KEYS = {
    "samples", "sample_dt", "noise_sigma", "epochs", "batch_size",
    "learning_rate", "momentum", "validation_split", "seed",
}  # fmt: skip


@dataclass(frozen=True)
class CalibrationSettings:
    """Free-motion data generation plus the training recipe."""

    samples: int = 20000
    sample_dt: float = 0.01
    noise_sigma: float = 0.005
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class Config:
    scenario: Scenario
    calibration: CalibrationSettings
    text: str  # resolved configuration, INI formatted


def default_config_text() -> str:
    return resources.files("tactile_grasp").joinpath("data/default.ini").read_text()


def _floats(raw: str, where: str) -> list[float]:
    try:
        return [float(x) for x in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{where}: expected numbers, got {raw!r}") from exc


def _number(section, key: str, cast=float):
    raw = section[key]
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: cannot read {raw!r} as {cast.__name__}") from exc


def _check_keys(section, allowed) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"[{section.name}] unknown keys: {sorted(unknown)}")


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (K_z, alpha_vx)
    return cp


def parse_config(text: str) -> Config:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    try:
        scenario = _scenario(cp)
        calibration = _calibration(cp)
    except ConfigError:
        raise
    except (TactileGraspError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return Config(scenario, calibration, render_config(scenario, calibration))


def load_config(path: Optional[str | Path] = None) -> Config:
    """Parse ``path``, or the packaged defaults when ``path`` is None."""
    if path is None:
        return parse_config(default_config_text())
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _scenario(cp) -> Scenario:
    base = Scenario()
    changes: dict = {}

    if cp.has_section("arm"):
        sec = cp["arm"]
        _check_keys(sec, {f"link{i}" for i in range(1, N_JOINTS + 1)} | {"q0"})
        links = [k for k in sec if k.startswith("link")]
        if links:
            if len(links) != N_JOINTS:
                raise ConfigError(f"[arm] needs all of link1..link{N_JOINTS}")
            rows = [_floats(sec[f"link{i}"], f"[arm] link{i}") for i in range(1, N_JOINTS + 1)]
            if any(len(r) != 4 for r in rows):
                raise ConfigError("[arm] each link needs four values: a, alpha, d, theta_offset")
            changes["arm"] = ArmModel(np.array(rows))
        if "q0" in sec:
            q0 = _floats(sec["q0"], "[arm] q0")
            if len(q0) != N_JOINTS:
                raise ConfigError(f"[arm] q0 needs {N_JOINTS} angles")
            changes["q0"] = tuple(q0)

    if cp.has_section("controller"):
        changes["params"] = ControllerParams.from_mapping(dict(cp["controller"]))
    if cp.has_section("contact"):
        changes["world"] = ContactWorld.from_mapping(dict(cp["contact"]))

    if cp.has_section("filter"):
        sec = cp["filter"]
        _check_keys(sec, {"force_threshold", "torque_threshold"})
        f = _number(sec, "force_threshold") if "force_threshold" in sec else DEFAULT_FORCE_THRESHOLD
        t = _number(sec, "torque_threshold") if "torque_threshold" in sec else DEFAULT_TORQUE_THRESHOLD
        changes["filter"] = ThresholdFilter([f] * 3 + [t] * 3)

    if cp.has_section("bias"):
        sec = cp["bias"]
        _check_keys(sec, {f"joint{i}" for i in range(1, N_JOINTS + 1)})
        terms = []
        for i in range(1, N_JOINTS + 1):
            if f"joint{i}" not in sec:
                raise ConfigError(f"[bias] missing joint{i}")
            v = _floats(sec[f"joint{i}"], f"[bias] joint{i}")
            if len(v) < 2 or (len(v) - 2) % 3:
                raise ConfigError(f"[bias] joint{i}: need offset, dir_coeff and (amp, freq, phase) triples")
            harmonics = tuple(tuple(v[k : k + 3]) for k in range(2, len(v), 3))
            terms.append(JointBias(v[0], v[1], harmonics))
        changes["bias"] = SinusoidBias(tuple(terms))

    if cp.has_section("scenario"):
        sec = cp["scenario"]
        _check_keys(sec, _SCENARIO_KEYS)
        for key in ("gap", "duration", "dt"):
            if key in sec:
                changes[key] = _number(sec, key)
        if "seed" in sec:
            changes["seed"] = _number(sec, "seed", int)
        tilt, lateral = list(base.tilt), list(base.lateral)
        for i, axis in enumerate("xy"):
            if f"tilt_{axis}" in sec:
                tilt[i] = _number(sec, f"tilt_{axis}")
            if f"lateral_{axis}" in sec:
                lateral[i] = _number(sec, f"lateral_{axis}")
        changes["tilt"], changes["lateral"] = tuple(tilt), tuple(lateral)
        if "noise_sigma" in sec:
            sigma = _floats(sec["noise_sigma"], "[scenario] noise_sigma")
            if len(sigma) not in (1, N_JOINTS):
                raise ConfigError(f"[scenario] noise_sigma needs 1 or {N_JOINTS} values")
            changes["noise_sigma"] = tuple(sigma * (N_JOINTS // len(sigma)))
        if "stop_on_complete" in sec:
            try:
                changes["stop_on_complete"] = sec.getboolean("stop_on_complete")
            except ValueError as exc:
                raise ConfigError(f"[scenario] stop_on_complete: {exc}") from exc

    return base.with_(**changes)


def _calibration(cp) -> CalibrationSettings:
    if not cp.has_section("calibration"):
        return CalibrationSettings()
    sec = cp["calibration"]
    _check_keys(sec, _CALIBRATION_KEYS)
    d = CalibrationSettings()
    t = d.train
    train = TrainConfig(
        epochs=_number(sec, "epochs", int) if "epochs" in sec else t.epochs,
        batch_size=_number(sec, "batch_size", int) if "batch_size" in sec else t.batch_size,
        learning_rate=_number(sec, "learning_rate") if "learning_rate" in sec else t.learning_rate,
        momentum=_number(sec, "momentum") if "momentum" in sec else t.momentum,
        seed=_number(sec, "seed", int) if "seed" in sec else t.seed,
        validation_split=_number(sec, "validation_split") if "validation_split" in sec else t.validation_split,
    )
    settings = CalibrationSettings(
        samples=_number(sec, "samples", int) if "samples" in sec else d.samples,
        sample_dt=_number(sec, "sample_dt") if "sample_dt" in sec else d.sample_dt,
        noise_sigma=_number(sec, "noise_sigma") if "noise_sigma" in sec else d.noise_sigma,
        train=train,
    )
    if settings.samples < 1:
        raise ConfigError("[calibration] samples must be positive")
    if not settings.sample_dt > 0:
        raise ConfigError("[calibration] sample_dt must be positive")
    if not settings.noise_sigma >= 0:
        raise ConfigError("[calibration] noise_sigma must be non-negative")
    return settings


def _fmt(x) -> str:
    return repr(float(x))


def render_config(scenario: Scenario, calibration: CalibrationSettings) -> str:
    """Fully resolved INI text; parsing it gives back the same settings."""
    cp = _parser()
    cp["arm"] = {f"link{i + 1}": ", ".join(_fmt(v) for v in row) for i, row in enumerate(scenario.arm.dh.tolist())}
    cp["arm"]["q0"] = ", ".join(_fmt(v) for v in scenario.q0)
    cp["controller"] = {k: _fmt(v) for k, v in scenario.params.to_mapping().items()}
    cp["contact"] = {k: _fmt(v) for k, v in scenario.world.to_mapping().items()}
    th = scenario.filter.threshold
    if not (np.all(th[:3] == th[0]) and np.all(th[3:] == th[3])):
        raise ConfigError("per-axis thresholds beyond force/torque pairs cannot be written as config")
    cp["filter"] = {"force_threshold": _fmt(th[0]), "torque_threshold": _fmt(th[3])}
    cp["scenario"] = {
        "gap": _fmt(scenario.gap),
        "tilt_x": _fmt(scenario.tilt[0]),
        "tilt_y": _fmt(scenario.tilt[1]),
        "lateral_x": _fmt(scenario.lateral[0]),
        "lateral_y": _fmt(scenario.lateral[1]),
        "duration": _fmt(scenario.duration),
        "dt": _fmt(scenario.dt),
        "seed": str(scenario.seed),
        "noise_sigma": ", ".join(_fmt(s) for s in scenario.noise_sigma),
        "stop_on_complete": "true" if scenario.stop_on_complete else "false",
    }
    cp["bias"] = {
        f"joint{j + 1}": ", ".join(_fmt(v) for v in (jb.offset, jb.dir_coeff, *(x for h in jb.harmonics for x in h)))
        for j, jb in enumerate(scenario.bias.joints)
    }
    t = calibration.train
    cp["calibration"] = {
        "samples": str(calibration.samples),
        "sample_dt": _fmt(calibration.sample_dt),
        "noise_sigma": _fmt(calibration.noise_sigma),
        "epochs": str(t.epochs),
        "batch_size": str(t.batch_size),
        "learning_rate": _fmt(t.learning_rate),
        "momentum": _fmt(t.momentum),
        "validation_split": _fmt(t.validation_split),
        "seed": str(t.seed),
    }
    buf = StringIO()
    cp.write(buf)
    return buf.getvalue()


__all__ = [
    "CalibrationSettings",
    "Config",
    "default_config_text",
    "load_config",
    "parse_config",
    "render_config",
]
