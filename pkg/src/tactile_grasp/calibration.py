"""Learned joint-torque bias calibration.

Each joint gets a small ReLU network mapping (joint angle, movement
direction) to the motion-induced bias torque. Training data comes from a
synthetic free-motion run where the arm touches nothing, so every recorded
torque is bias plus sensor noise.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .arm import N_JOINTS, wrap_angle
from .errors import InvalidArgumentError, TrainingError

LAYER_SIZES = (2, 64, 64, 1)
MODEL_FORMAT = "tactile-grasp-bias-model"
MODEL_VERSION = 1
DATASET_HEADER = ("joint", "angle_rad", "direction", "torque_nm")
MIN_SAMPLES_PER_JOINT = 100


# --------------------------------------------------------------------------
# ground truth used by the synthetic free-motion generator


@dataclass(frozen=True)
class JointBias:
    """offset + dir_coeff * s + sum_k amp_k * sin(freq_k * q + phase_k)"""

    offset: float = 0.0
    dir_coeff: float = 0.0
    harmonics: tuple[tuple[float, float, float], ...] = ()

    def __call__(self, angle, direction):
        angle = np.asarray(angle, dtype=float)
        out = self.offset + self.dir_coeff * np.asarray(direction, dtype=float)
        for amp, freq, phase in self.harmonics:
            out = out + amp * np.sin(freq * angle + phase)
        return out


@dataclass(frozen=True)
class SinusoidBias:
    joints: tuple[JointBias, ...]

    def __post_init__(self):
        if len(self.joints) != N_JOINTS:
            raise InvalidArgumentError(f"need {N_JOINTS} joint bias terms, got {len(self.joints)}")
        # dense copies for the per-step evaluation in the simulator
        width = max(1, max(len(jb.harmonics) for jb in self.joints))
        h = np.zeros((N_JOINTS, width, 3))
        for j, jb in enumerate(self.joints):
            if jb.harmonics:
                h[j, : len(jb.harmonics)] = jb.harmonics
        object.__setattr__(self, "_harm", h)
        object.__setattr__(self, "_offset", np.array([jb.offset for jb in self.joints]))
        object.__setattr__(self, "_dir", np.array([jb.dir_coeff for jb in self.joints]))

    @classmethod
    def default(cls) -> "SinusoidBias":
        # shoulder joints carry most of the gravity load, wrist joints little
        return cls(
            (
                JointBias(0.05, 0.06, ((0.30, 1.0, 0.0),)),
                JointBias(-0.04, 0.05, ((0.25, 1.0, 0.5), (0.05, 2.0, 0.0))),
                JointBias(0.02, 0.04, ((0.20, 1.0, -0.3),)),
                JointBias(0.00, 0.02, ((0.08, 1.0, 0.2),)),
                JointBias(0.01, 0.015, ((0.06, 1.0, 0.0),)),
                JointBias(0.00, 0.01, ((0.04, 1.0, 1.0),)),
            )
        )

    def joint(self, j: int, angle, direction):
        return self.joints[j](angle, direction)

    def predict(self, q, direction) -> np.ndarray:
        """Exact bias; lets the ground truth stand in for a perfect model."""
        q = np.asarray(q, dtype=float)
        h = self._harm
        waves = h[:, :, 0] * np.sin(h[:, :, 1] * q[:, None] + h[:, :, 2])
        return self._offset + self._dir * np.asarray(direction, dtype=float) + waves.sum(axis=1)

    __call__ = predict

    def to_dict(self) -> dict:
        return {
            "joints": [
                {"offset": jb.offset, "dir_coeff": jb.dir_coeff, "harmonics": [list(h) for h in jb.harmonics]}
                for jb in self.joints
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SinusoidBias":
        return cls(
            tuple(
                JointBias(float(j["offset"]), float(j["dir_coeff"]), tuple(tuple(map(float, h)) for h in j["harmonics"]))
                for j in d["joints"]
            )
        )


def free_motion_trajectory(n_points: int, seed: int, dt: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Collision-free sweep of every joint over (-pi, pi].

    Each joint sweeps end to end in short stop-and-go moves at random
    speeds, so all three direction values occur across the whole range.
    Returns ``(q, qdot)`` arrays of shape (n_points, 6).
    """
    if n_points < 1:
        raise InvalidArgumentError("trajectory needs at least one point")
    rng = np.random.default_rng(seed)
    q = np.empty((n_points, N_JOINTS))
    qdot = np.empty((n_points, N_JOINTS))
    for j in range(N_JOINTS):
        angle = rng.uniform(-np.pi, np.pi)
        target = math.copysign(np.pi, rng.uniform(-1, 1))
        k = 0
        while k < n_points:
            if abs(target - angle) < 1e-9:
                target = -math.copysign(rng.uniform(0.97, 1.0) * np.pi, target)
            if rng.random() < 0.4:
                steps = int(rng.integers(10, 40))
                seg_q = np.full(steps, angle)
                seg_v = np.zeros(steps)
            else:
                # stop-and-go sweep towards the current target
                stop = angle + float(np.clip(target - angle, -rng.uniform(0.2, 0.6), rng.uniform(0.2, 0.6)))
                speed = rng.uniform(0.3, 1.2)
                steps = max(1, int(abs(stop - angle) / (speed * dt)))
                seg_q = np.linspace(angle, stop, steps, endpoint=False)
                seg_v = np.full(steps, math.copysign(speed, stop - angle))
                angle = stop
            m = min(steps, n_points - k)
            q[k : k + m, j] = seg_q[:m]
            qdot[k : k + m, j] = seg_v[:m]
            k += m
    return wrap_angle(q), qdot


# --------------------------------------------------------------------------
# dataset


@dataclass(frozen=True)
class BiasSample:
    joint: int
    angle: float
    direction: int
    torque: float


@dataclass
class BiasDataset:
    """Column storage for bias samples; iterates as :class:`BiasSample`."""

    joint: np.ndarray
    angle: np.ndarray
    direction: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=np.int64)
        self.angle = np.asarray(self.angle, dtype=float)
        self.direction = np.asarray(self.direction, dtype=np.int64)
        self.torque = np.asarray(self.torque, dtype=float)
        n = len(self.joint)
        if not (len(self.angle) == len(self.direction) == len(self.torque) == n):
            raise InvalidArgumentError("dataset columns differ in length")
        if n and (self.joint.min() < 0 or self.joint.max() >= N_JOINTS):
            raise InvalidArgumentError("joint index out of range")
        if not np.all(np.isin(self.direction, (-1, 0, 1))):
            raise InvalidArgumentError("direction must be -1, 0 or +1")
        if not (np.all(np.isfinite(self.angle)) and np.all(np.isfinite(self.torque))):
            raise InvalidArgumentError("dataset contains non-finite values")

    def __len__(self) -> int:
        return len(self.joint)

    def __iter__(self) -> Iterator[BiasSample]:
        for j, a, s, t in zip(self.joint, self.angle, self.direction, self.torque):
            yield BiasSample(int(j), float(a), int(s), float(t))

    @classmethod
    def from_samples(cls, samples: Sequence[BiasSample]) -> "BiasDataset":
        return cls(
            [s.joint for s in samples],
            [s.angle for s in samples],
            [s.direction for s in samples],
            [s.torque for s in samples],
        )

    def for_joint(self, j: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        m = self.joint == j
        return self.angle[m], self.direction[m], self.torque[m]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DATASET_HEADER)
            for j, a, s, t in zip(self.joint, self.angle, self.direction, self.torque):
                w.writerow((int(j), repr(float(a)), int(s), repr(float(t))))

    @classmethod
    def read_csv(cls, path) -> "BiasDataset":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r, None)
            if tuple(header or ()) != DATASET_HEADER:
                raise InvalidArgumentError(f"unexpected dataset header {header!r}")
            rows = list(r)
        cols = list(zip(*rows)) if rows else [(), (), (), ()]
        return cls(
            np.array(cols[0], dtype=np.int64),
            np.array(cols[1], dtype=float),
            np.array(cols[2], dtype=np.int64),
            np.array(cols[3], dtype=float),
        )


def generate_free_motion_dataset(bias_ground_truth, trajectory, noise_sigma: float, seed: int) -> BiasDataset:
    """One noisy bias sample per joint per trajectory point.

    ``trajectory`` is either a sequence of joint states (objects with ``q`` and ``qdot``) or a
    ``(q, qdot)`` pair of arrays. ``bias_ground_truth`` needs a
    ``joint(j, angle, direction)`` method (see :class:`SinusoidBias`).
    """
    if isinstance(trajectory, tuple) and len(trajectory) == 2 and isinstance(trajectory[0], np.ndarray):
        q, qdot = (np.atleast_2d(np.asarray(a, dtype=float)) for a in trajectory)
    else:
        states = list(trajectory)
        if not states:
            raise InvalidArgumentError("trajectory is empty")
        q = np.stack([s.q for s in states])
        qdot = np.stack([s.qdot for s in states])
    if q.size == 0:
        raise InvalidArgumentError("trajectory is empty")
    if noise_sigma < 0:
        raise InvalidArgumentError("noise_sigma must be non-negative")
    n = q.shape[0]
    direction = np.sign(qdot).astype(np.int64)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_sigma, size=(N_JOINTS, n)) if noise_sigma > 0 else np.zeros((N_JOINTS, n))
    torque = np.stack([np.broadcast_to(bias_ground_truth.joint(j, q[:, j], direction[:, j]), (n,)) for j in range(N_JOINTS)])
    torque = torque + noise
    joint = np.repeat(np.arange(N_JOINTS), n)
    return BiasDataset(joint, q.T.ravel(), direction.T.ravel(), torque.ravel())


# --------------------------------------------------------------------------
# network


@dataclass
class JointNet:
    """Fully connected 2 -> 64 -> 64 -> 1 regressor with ReLU hidden layers.

    ``weights[i]`` has shape (fan_in, fan_out); inputs are rows.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def init(cls, rng: np.random.Generator, sizes=LAYER_SIZES) -> "JointNet":
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, X: np.ndarray) -> np.ndarray:
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h[:, 0]

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Mean squared error and its gradient, ordered like :meth:`params`."""
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        err = acts[-1][:, 0] - y
        loss = float(np.mean(err * err))
        delta = (2.0 / len(y)) * err[:, None]
        grads: list[np.ndarray] = []
        for i in range(last, -1, -1):
            grads.append(delta.sum(axis=0))
            grads.append(acts[i].T @ delta)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        grads.reverse()  # now [W0, b0, W1, b1, ...]
        return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 20
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    validation_split: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InvalidArgumentError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise InvalidArgumentError("momentum must lie in [0, 1)")
        if not 0 < self.validation_split < 1:
            raise InvalidArgumentError("validation_split must lie in (0, 1)")


@dataclass
class TrainReport:
    epoch_mse: list[list[float]] = field(default_factory=list)  # [joint][epoch], N*m^2
    validation_rmse: list[float] = field(default_factory=list)  # per joint, N*m

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("joint", "epoch", "train_mse", "validation_rmse"))
            for j, losses in enumerate(self.epoch_mse):
                for e, mse in enumerate(losses):
                    val = repr(self.validation_rmse[j]) if e == len(losses) - 1 else ""
                    w.writerow((j, e + 1, repr(mse), val))


@dataclass
class BiasModel:
    nets: list[JointNet]
    angle_mean: float
    angle_scale: float
    target_mean: np.ndarray
    target_scale: np.ndarray
    seed: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.nets) != N_JOINTS:
            raise InvalidArgumentError(f"bias model needs {N_JOINTS} joint networks")
        self.target_mean = np.asarray(self.target_mean, dtype=float)
        self.target_scale = np.asarray(self.target_scale, dtype=float)
        for net in self.nets:
            shapes = [w.shape for w in net.weights]
            expected = list(zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]))
            if shapes != expected or [b.shape for b in net.biases] != [(n,) for n in LAYER_SIZES[1:]]:
                raise InvalidArgumentError(f"layer shapes {shapes} do not match {expected}")
            if not all(np.all(np.isfinite(p)) for p in net.params()):
                raise InvalidArgumentError("model parameters must be finite")
        self._stack()

    def _stack(self):
        # batched copies so a 6-joint prediction is a handful of einsums
        self._W = [np.stack([n.weights[i] for n in self.nets]) for i in range(len(LAYER_SIZES) - 1)]
        self._b = [np.stack([n.biases[i] for n in self.nets]) for i in range(len(LAYER_SIZES) - 1)]

    def features(self, angle, direction) -> np.ndarray:
        angle = np.asarray(angle, dtype=float)
        return np.stack([(angle - self.angle_mean) / self.angle_scale, np.asarray(direction, dtype=float)], axis=-1)

    def predict_joint(self, j: int, angle, direction) -> np.ndarray:
        angle = np.atleast_1d(np.asarray(angle, dtype=float))
        direction = np.broadcast_to(direction, angle.shape)
        y = self.nets[j].forward(self.features(angle, direction))
        return y * self.target_scale[j] + self.target_mean[j]

    def predict(self, q, direction) -> np.ndarray:
        x = self.features(q, direction)  # (6, 2)
        h = x[:, None, :]
        last = len(self._W) - 1
        for i, (W, b) in enumerate(zip(self._W, self._b)):
            h = h @ W + b[:, None, :]
            if i < last:
                h = np.maximum(h, 0.0)
        return h[:, 0, 0] * self.target_scale + self.target_mean

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "layer_sizes": list(LAYER_SIZES),
            "activation": "relu",
            "seed": int(self.seed),
            "angle_mean": self.angle_mean,
            "angle_scale": self.angle_scale,
            "target_mean": self.target_mean.tolist(),
            "target_scale": self.target_scale.tolist(),
            "joints": [
                {"weights": [w.tolist() for w in n.weights], "biases": [b.tolist() for b in n.biases]}
                for n in self.nets
            ],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BiasModel":
        if d.get("format") != MODEL_FORMAT:
            raise InvalidArgumentError("not a bias model file")
        if d.get("version") != MODEL_VERSION:
            raise InvalidArgumentError(f"unsupported model version {d.get('version')!r}")
        if tuple(d.get("layer_sizes", ())) != LAYER_SIZES:
            raise InvalidArgumentError(f"layer sizes {d.get('layer_sizes')} do not match {list(LAYER_SIZES)}")
        nets = [
            JointNet([np.array(w, dtype=float) for w in j["weights"]], [np.array(b, dtype=float) for b in j["biases"]])
            for j in d["joints"]
        ]
        return cls(
            nets,
            float(d["angle_mean"]),
            float(d["angle_scale"]),
            np.array(d["target_mean"], dtype=float),
            np.array(d["target_scale"], dtype=float),
            int(d["seed"]),
            d.get("metadata", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "BiasModel":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"cannot parse model file: {exc}") from exc
        try:
            return cls.from_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"malformed model file: {exc}") from exc


def _stacked_loss_and_grads(Ws, bs, X, y):
    """Batched twin of :meth:`JointNet.loss_and_grads` over a leading joint axis."""
    acts = [X]
    h = X
    last = len(Ws) - 1
    for i, (W, b) in enumerate(zip(Ws, bs)):
        h = h @ W + b[:, None, :]
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    err = acts[-1][..., 0] - y
    loss = np.mean(err * err, axis=1)
    delta = (2.0 / y.shape[1]) * err[..., None]
    gW, gb = [None] * len(Ws), [None] * len(Ws)
    for i in range(last, -1, -1):
        gb[i] = delta.sum(axis=1)
        gW[i] = acts[i].transpose(0, 2, 1) @ delta
        if i > 0:
            delta = (delta @ Ws[i].transpose(0, 2, 1)) * (acts[i] > 0)
    return loss, gW, gb


def _train_nets(nets: list[JointNet], X, y, cfg: TrainConfig, rngs, to_units) -> list[list[float]]:
    """Momentum SGD on several equally sized joint problems at once.

    Each joint draws its shuffles from its own generator, so the result is
    the same as training the joints one after another.
    """
    n_layers = len(nets[0].weights)
    Ws = [np.stack([net.weights[i] for net in nets]) for i in range(n_layers)]
    bs = [np.stack([net.biases[i] for net in nets]) for i in range(n_layers)]
    with np.errstate(over="ignore", invalid="ignore"):
        # overflow shows up as a non-finite loss, reported below
        return _sgd_epochs(nets, Ws, bs, X, y, cfg, rngs, to_units)


def _sgd_epochs(nets, Ws, bs, X, y, cfg, rngs, to_units):
    k, n = y.shape
    n_layers = len(Ws)
    vW = [np.zeros_like(W) for W in Ws]
    vb = [np.zeros_like(b) for b in bs]
    rows = np.arange(k)[:, None]
    history: list[list[float]] = [[] for _ in range(k)]
    for _ in range(cfg.epochs):
        order = np.stack([rng.permutation(n) for rng in rngs])
        for start in range(0, n, cfg.batch_size):
            idx = order[:, start : start + cfg.batch_size]
            loss, gW, gb = _stacked_loss_and_grads(Ws, bs, X[rows, idx], y[rows, idx])
            if not np.isfinite(loss).all():
                raise TrainingError("training loss became non-finite")
            for p, v, g in zip(Ws + bs, vW + vb, gW + gb):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
        h = X
        for i, (W, b) in enumerate(zip(Ws, bs)):
            h = h @ W + b[:, None, :]
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
        mse = np.mean((h[..., 0] - y) ** 2, axis=1) * to_units
        if not np.isfinite(mse).all():
            raise TrainingError("training loss became non-finite")
        for j in range(k):
            history[j].append(float(mse[j]))
    for j, net in enumerate(nets):
        net.weights = [W[j].copy() for W in Ws]
        net.biases = [b[j].copy() for b in bs]
    return history


def train_bias_model(data: BiasDataset, cfg: TrainConfig) -> tuple[BiasModel, TrainReport]:
    """Fit one network per joint with minibatch SGD and momentum on MSE."""
    if not isinstance(data, BiasDataset):
        data = BiasDataset.from_samples(list(data))
    angle_mean, angle_scale = 0.0, math.pi
    jobs = []
    for j in range(N_JOINTS):
        angle, direction, torque = data.for_joint(j)
        if len(torque) < MIN_SAMPLES_PER_JOINT:
            raise InvalidArgumentError(f"joint {j} has {len(torque)} samples, need >= {MIN_SAMPLES_PER_JOINT}")
        rng = np.random.default_rng([cfg.seed, j])
        order = rng.permutation(len(torque))
        n_val = max(1, int(round(cfg.validation_split * len(torque))))
        val, train = order[:n_val], order[n_val:]
        if cfg.batch_size > len(train):
            raise InvalidArgumentError(f"batch_size {cfg.batch_size} exceeds the {len(train)} training samples")
        mean = float(np.mean(torque[train]))
        scale = float(np.std(torque[train]))
        if scale < 1e-12:
            scale = 1.0
        X = np.stack([(angle - angle_mean) / angle_scale, direction.astype(float)], axis=1)
        y = (torque - mean) / scale
        jobs.append((X, y, train, val, mean, scale, rng, JointNet.init(rng)))

    # joints with the same training-set size are trained together
    history: dict[int, list[float]] = {}
    by_size: dict[int, list[int]] = {}
    for j, job in enumerate(jobs):
        by_size.setdefault(len(job[2]), []).append(j)
    for group in by_size.values():
        X = np.stack([jobs[j][0][jobs[j][2]] for j in group])
        y = np.stack([jobs[j][1][jobs[j][2]] for j in group])
        units = np.array([jobs[j][5] ** 2 for j in group])
        hist = _train_nets([jobs[j][7] for j in group], X, y, cfg, [jobs[j][6] for j in group], units)
        history.update(zip(group, hist))

    report = TrainReport()
    for j, (X, y, _, val, _, scale, _, net) in enumerate(jobs):
        val_err = (net.forward(X[val]) - y[val]) * scale
        report.epoch_mse.append(history[j])
        report.validation_rmse.append(float(np.sqrt(np.mean(val_err * val_err))))
    model = BiasModel(
        [job[7] for job in jobs],
        angle_mean,
        angle_scale,
        np.array([job[4] for job in jobs]),
        np.array([job[5] for job in jobs]),
        cfg.seed,
    )
    return model, report


def predict_bias(model, q, direction) -> np.ndarray:
    """Per-joint bias torques for joint angles ``q`` and movement signs ``direction``."""
    out = model.predict(np.asarray(q, dtype=float), np.asarray(direction, dtype=float))
    if not np.all(np.isfinite(out)):
        raise InvalidArgumentError("bias prediction is not finite")
    return out


def remove_bias(tau_s, tau_bias) -> np.ndarray:
    return np.asarray(tau_s, dtype=float) - np.asarray(tau_bias, dtype=float)
