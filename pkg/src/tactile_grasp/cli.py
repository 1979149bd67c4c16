"""``tactile-grasp`` command line: calibrate, simulate, bias-plot.

Exit codes: 0 ok, 2 configuration or input error, 3 training failure,
4 singular arm configuration, 5 grasp did not complete.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from dataclasses import replace
from importlib import metadata
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, svgplot
from .calibration import (
    BiasModel,
    SinusoidBias,
    free_motion_trajectory,
    generate_free_motion_dataset,
    train_bias_model,
)
from .config import CalibrationSettings, load_config
from .errors import ConfigError, InvalidArgumentError, SingularityError, TrainingError
from .sim import SimLog, analyze, run_grasp
from .wrench import AXES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_SINGULAR = 4
EXIT_NOT_CONVERGED = 5


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return __version__


def _fail(code: int, msg: str) -> int:
    print(f"tactile-grasp: {msg}", file=sys.stderr)
    return code


def _atomic_write(path: Path, writer) -> None:
    """Write through a temporary file so a failed run leaves nothing behind."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.chmod(tmp, 0o666 & ~umask)
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_manifest(path: Path, command: str, config_text: str, seed: int, artifacts: dict) -> None:
    """Record what was produced; called after every other artifact exists."""
    manifest = {
        "command": command,
        "config": config_text,
        "seed": int(seed),
        "artifacts": {k: str(v) for k, v in artifacts.items()},
        "tool_version": tool_version(),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# calibrate


def calibration_dataset(truth: SinusoidBias, settings: CalibrationSettings, seed: int):
    """Free-motion samples used to train (and later to plot) a bias model."""
    q, qdot = free_motion_trajectory(settings.samples, seed, settings.sample_dt)
    return generate_free_motion_dataset(truth, (q, qdot), settings.noise_sigma, seed + 1)


def cmd_calibrate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    settings = cfg.calibration
    seed = settings.train.seed if args.seed is None else args.seed
    train_cfg = replace(settings.train, seed=seed)
    truth = cfg.scenario.bias
    try:
        data = calibration_dataset(truth, settings, seed)
        model, report = train_bias_model(data, train_cfg)
    except TrainingError as exc:
        return _fail(EXIT_TRAINING, f"training failed: {exc}")
    except InvalidArgumentError as exc:
        return _fail(EXIT_CONFIG, str(exc))

    model.metadata = {
        "generator": truth.to_dict(),
        "samples": settings.samples,
        "sample_dt": settings.sample_dt,
        "noise_sigma": settings.noise_sigma,
        "data_seed": seed,
        "validation_rmse": report.validation_rmse,
    }
    out = Path(args.out)
    report_path = out.with_name(out.stem + ".train.csv")
    manifest_path = out.with_name(out.stem + ".manifest.json")
    _atomic_write(out, model.save)
    _atomic_write(report_path, report.write_csv)
    config_text = cfg.text if args.seed is None else _with_seed(cfg.text, "calibration", seed)
    write_manifest(manifest_path, "calibrate", config_text, seed, {"model": out, "train_report": report_path})
    rmse = ", ".join(f"{r:.4g}" for r in report.validation_rmse)
    print(f"model written to {out}; held-out RMSE per joint [N*m]: {rmse}")
    return EXIT_OK


def _with_seed(text: str, section: str, seed: int) -> str:
    lines, current = [], None
    for line in text.splitlines():
        if line.startswith("["):
            current = line.strip()[1:-1]
        elif current == section and line.split("=")[0].strip() == "seed":
            line = f"seed = {seed}"
        lines.append(line)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# simulate


def _wrench_plot(log: SimLog, cols: range, title: str, unit: str) -> str:
    lines = [svgplot.Line(f"ee_{AXES[i]}", log.t, log.wrench[:, i]) for i in cols]
    return svgplot.render(lines, title=title, xlabel="time [s]", ylabel=unit)


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        model = BiasModel.load(args.model)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except (OSError, InvalidArgumentError) as exc:
        return _fail(EXIT_CONFIG, f"cannot load model {args.model}: {exc}")
    scenario = cfg.scenario
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "simlog": out_dir / "simlog.csv",
        "report": out_dir / "report.txt",
        "force_plot": out_dir / "force.svg",
        "torque_plot": out_dir / "torque.svg",
    }

    code = EXIT_OK
    try:
        log = run_grasp(scenario, model)
    except SingularityError as exc:
        log = exc.log
        code = EXIT_SINGULAR
        print(f"tactile-grasp: run halted: {log.halted}", file=sys.stderr)

    log.write_csv(paths["simlog"])
    written = {"model": args.model, "simlog": paths["simlog"]}
    if len(log):
        report = analyze(log, scenario.params, scenario.world)
        text = report.to_text()
        if log.halted:
            text += f"halted={log.halted}\n"
        paths["report"].write_text(text)
        svgplot.write(paths["force_plot"], _wrench_plot(log, range(0, 3), "Hand-frame forces", "force [N]"))
        svgplot.write(paths["torque_plot"], _wrench_plot(log, range(3, 6), "Hand-frame torques", "torque [N*m]"))
        written.update({k: paths[k] for k in ("report", "force_plot", "torque_plot")})
        print(
            f"contact at {report.contact_time} s; final f_z = {report.final['ee_fz']:.4f} N, "
            f"tau_z = {report.final['ee_tz']:.5f} N*m; complete at {report.grasp_complete_time}"
        )
    write_manifest(out_dir / "manifest.json", "simulate", cfg.text, scenario.seed, written)
    if code == EXIT_OK and not log.grasp_complete:
        code = _fail(EXIT_NOT_CONVERGED, f"grasp did not complete within {scenario.duration} s")
    return code


# --------------------------------------------------------------------------
# bias-plot

SCATTER_POINTS = 3000


def cmd_bias_plot(args) -> int:
    if not 0 <= args.joint <= 5:
        return _fail(EXIT_CONFIG, f"joint must lie in 0..5, got {args.joint}")
    try:
        model = BiasModel.load(args.model)
    except (OSError, InvalidArgumentError) as exc:
        return _fail(EXIT_CONFIG, f"cannot load model {args.model}: {exc}")

    meta = model.metadata or {}
    defaults = CalibrationSettings()
    truth = SinusoidBias.from_dict(meta["generator"]) if "generator" in meta else SinusoidBias.default()
    settings = CalibrationSettings(
        samples=int(meta.get("samples", defaults.samples)),
        sample_dt=float(meta.get("sample_dt", defaults.sample_dt)),
        noise_sigma=float(meta.get("noise_sigma", defaults.noise_sigma)),
    )
    seed = int(meta.get("data_seed", model.seed))
    data = calibration_dataset(truth, settings, seed)
    angle, _, torque = data.for_joint(args.joint)
    keep = np.unique(np.linspace(0, len(angle) - 1, min(SCATTER_POINTS, len(angle))).round().astype(int))

    grid = np.linspace(-np.pi, np.pi, 400)
    curves = [
        svgplot.Line(label, grid, model.predict_joint(args.joint, grid, s), color=color, css_class="model-curve")
        for s, label, color in ((1.0, "model, q' > 0", "#1f3fbf"), (-1.0, "model, q' < 0", "#5fa8ff"))
    ]
    svg = svgplot.render(
        curves,
        [svgplot.Scatter("free-motion samples", angle[keep], torque[keep])],
        title=f"Joint {args.joint} bias: samples and fitted model",
        xlabel="joint angle [rad]",
        ylabel="bias torque [N*m]",
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    svgplot.write(out, svg)
    write_manifest(
        out.with_name(out.stem + ".manifest.json"),
        "bias-plot",
        json.dumps({"model": str(args.model), "joint": args.joint}, sort_keys=True),
        seed,
        {"model": args.model, "plot": out},
    )
    return EXIT_OK


# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse already uses 2; keep the message terse
        self.print_usage(sys.stderr)
        raise SystemExit(_fail(EXIT_CONFIG, message))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tactile-grasp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=tool_version())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("calibrate", help="generate free-motion data and train the bias model")
    c.add_argument("--config", help="INI config (packaged defaults when omitted)")
    c.add_argument("--out", required=True, help="model file to write (JSON)")
    c.add_argument("--seed", type=int, help="overrides [calibration] seed")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", help="run the grasp scenario with a trained model")
    s.add_argument("--config", help="INI config (packaged defaults when omitted)")
    s.add_argument("--model", required=True)
    s.add_argument("--out-dir", required=True)
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bias-plot", help="plot one joint's samples and fitted bias branches")
    b.add_argument("--model", required=True)
    b.add_argument("--joint", type=int, required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_bias_plot)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
