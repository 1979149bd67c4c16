import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tactile_grasp.arm import DEFAULT_Q0, ArmModel, JointState, geometric_jacobian, kinematics, wrench_from_joint_torques
from tactile_grasp.calibration import (
    LAYER_SIZES,
    BiasDataset,
    BiasModel,
    BiasSample,
    JointBias,
    JointNet,
    SinusoidBias,
    TrainConfig,
    free_motion_trajectory,
    generate_free_motion_dataset,
    predict_bias,
    remove_bias,
    train_bias_model,
)
from tactile_grasp.errors import InvalidArgumentError, TrainingError


def uniform_truth(offset=0.0, dir_coeff=0.0, harmonics=()):
    return SinusoidBias(tuple(JointBias(offset, dir_coeff, harmonics) for _ in range(6)))


def small_dataset(n=400, sigma=0.0, truth=None, seed=0):
    truth = truth or SinusoidBias.default()
    return generate_free_motion_dataset(truth, free_motion_trajectory(n, seed), sigma, seed + 1)


# -- ground truth ------------------------------------------------------------------


def test_joint_bias_formula():
    jb = JointBias(0.1, 0.3, ((2.0, 1.0, 0.5), (0.2, 3.0, 0.0)))
    q = np.linspace(-3, 3, 7)
    expected = 0.1 + 0.3 * -1 + 2 * np.sin(q + 0.5) + 0.2 * np.sin(3 * q)
    np.testing.assert_allclose(jb(q, -1), expected, rtol=1e-15)


def test_vectorised_prediction_matches_per_joint(rng):
    truth = SinusoidBias.default()
    q = rng.uniform(-math.pi, math.pi, 6)
    s = rng.integers(-1, 2, 6)
    np.testing.assert_allclose(truth.predict(q, s), [truth.joint(j, q[j], s[j]) for j in range(6)], rtol=1e-14)


def test_truth_dict_round_trip():
    truth = SinusoidBias.default()
    assert SinusoidBias.from_dict(truth.to_dict()) == truth


def test_truth_needs_six_joints():
    with pytest.raises(InvalidArgumentError):
        SinusoidBias((JointBias(),) * 5)


# -- free-motion trajectory --------------------------------------------------------------


def test_trajectory_covers_range_and_directions():
    q, qdot = free_motion_trajectory(20000, seed=1)
    assert q.shape == qdot.shape == (20000, 6)
    assert np.all(q > -math.pi) and np.all(q <= math.pi)
    for j in range(6):
        counts, _ = np.histogram(q[:, j], bins=12, range=(-math.pi, math.pi))
        assert counts.min() > 0.02 * len(q)
        for s in (-1, 0, 1):
            assert np.mean(np.sign(qdot[:, j]) == s) > 0.1


def test_trajectory_is_deterministic():
    a = free_motion_trajectory(500, seed=3)
    b = free_motion_trajectory(500, seed=3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    with pytest.raises(InvalidArgumentError):
        free_motion_trajectory(0, seed=0)


# -- dataset generation ------------------------------------------------------------------


def test_noise_free_constant_trajectory_is_exact():
    truth = SinusoidBias.default()
    states = [JointState(np.array(DEFAULT_Q0), np.array([1.0, -1, 0, 1, -1, 0]))] * 10
    data = generate_free_motion_dataset(truth, states, 0.0, seed=0)
    assert len(data) == 60
    for s in data:
        assert s.torque == truth.joint(s.joint, s.angle, s.direction)


def test_noise_level_matches_sigma():
    truth = SinusoidBias.default()
    q, qdot = free_motion_trajectory(10000, seed=0)
    data = generate_free_motion_dataset(truth, (q, qdot), 0.05, seed=9)
    resid = np.array([s.torque - truth.joint(s.joint, s.angle, s.direction) for s in data if s.joint == 0])
    assert len(resid) == 10000
    assert 0.045 <= resid.std() <= 0.055


def test_same_seed_gives_identical_dataset_files(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    small_dataset(300, 0.05).write_csv(a)
    small_dataset(300, 0.05).write_csv(b)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "joint,angle_rad,direction,torque_nm"


def test_dataset_csv_round_trip(tmp_path):
    data = small_dataset(200, 0.05)
    path = tmp_path / "d.csv"
    data.write_csv(path)
    back = BiasDataset.read_csv(path)
    for col in ("joint", "angle", "direction", "torque"):
        np.testing.assert_array_equal(getattr(back, col), getattr(data, col))


def test_dataset_validation(tmp_path):
    with pytest.raises(InvalidArgumentError):
        generate_free_motion_dataset(SinusoidBias.default(), [], 0.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        generate_free_motion_dataset(SinusoidBias.default(), free_motion_trajectory(5, 0), -1.0, seed=0)
    with pytest.raises(InvalidArgumentError):
        BiasDataset([0], [0.0], [2], [0.0])
    with pytest.raises(InvalidArgumentError):
        BiasDataset([6], [0.0], [0], [0.0])
    with pytest.raises(InvalidArgumentError):
        BiasDataset([0], [np.nan], [0], [0.0])
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c,d\n")
    with pytest.raises(InvalidArgumentError):
        BiasDataset.read_csv(bad)


def test_dataset_from_samples():
    samples = [BiasSample(1, 0.5, -1, 0.25), BiasSample(0, -0.5, 0, 1.0)]
    assert list(BiasDataset.from_samples(samples)) == samples


# -- network and gradients ------------------------------------------------------------------


def test_network_shapes():
    net = JointNet.init(np.random.default_rng(0))
    assert [w.shape for w in net.weights] == [(2, 64), (64, 64), (64, 1)]
    assert net.forward(np.zeros((7, 2))).shape == (7,)


def test_backprop_matches_central_differences():
    rng = np.random.default_rng(4)
    net = JointNet.init(rng)
    for b in net.biases:
        b[:] = rng.normal(0, 0.1, b.shape)
    X = rng.uniform(-1, 1, (30, 2))
    y = rng.normal(size=30)
    _, grads = net.loss_and_grads(X, y)
    params = net.params()
    h = 1e-6
    checked = 0
    while checked < 20:
        k = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(n)) for n in params[k].shape)
        old = params[k][idx]
        params[k][idx] = old + h
        lp, _ = net.loss_and_grads(X, y)
        params[k][idx] = old - h
        lm, _ = net.loss_and_grads(X, y)
        params[k][idx] = old
        numeric = (lp - lm) / (2 * h)
        analytic = grads[k][idx]
        scale = max(abs(numeric), abs(analytic))
        if scale < 1e-7:
            continue  # dead unit; relative error undefined
        assert abs(numeric - analytic) / scale < 1e-4, (k, idx, numeric, analytic)
        checked += 1


def _reference_sgd(net, X, y, cfg, rng):
    params = net.params()
    vel = [np.zeros_like(p) for p in params]
    for _ in range(cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = net.loss_and_grads(X[idx], y[idx])
            for p, v, g in zip(params, vel, grads):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v


def test_joint_batched_training_equals_plain_momentum_sgd():
    data = small_dataset(300, 0.01)
    cfg = TrainConfig(epochs=3, seed=5)
    model, _ = train_bias_model(data, cfg)
    for j in (0, 4):
        angle, direction, torque = data.for_joint(j)
        rng = np.random.default_rng([cfg.seed, j])
        order = rng.permutation(len(torque))
        n_val = int(round(cfg.validation_split * len(torque)))
        train = order[n_val:]
        mean, scale = torque[train].mean(), torque[train].std()
        X = np.stack([angle / math.pi, direction.astype(float)], axis=1)
        net = JointNet.init(rng)
        _reference_sgd(net, X[train], (torque[train] - mean) / scale, cfg, rng)
        for a, b in zip(net.params(), model.nets[j].params()):
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


# -- training behaviour ---------------------------------------------------------------------


def test_constant_target_is_learned():
    data = small_dataset(2000, 0.0, truth=uniform_truth(offset=1.0))
    model, report = train_bias_model(data, TrainConfig())
    assert max(report.validation_rmse) <= 1e-2
    np.testing.assert_allclose(predict_bias(model, np.zeros(6), np.zeros(6)), 1.0, atol=2e-2)


def test_training_makes_progress():
    data = small_dataset(1000, 0.05, truth=uniform_truth(0.0, 0.3, ((2.0, 1.0, 0.0),)))
    _, report = train_bias_model(data, TrainConfig(epochs=5))
    for losses in report.epoch_mse:
        assert len(losses) == 5
        assert losses[-1] < losses[0]


def test_training_is_deterministic():
    data = small_dataset(300, 0.05)
    a, _ = train_bias_model(data, TrainConfig(epochs=2, seed=11))
    b, _ = train_bias_model(data, TrainConfig(epochs=2, seed=11))
    c, _ = train_bias_model(data, TrainConfig(epochs=2, seed=12))
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


def test_too_little_data_rejected():
    with pytest.raises(InvalidArgumentError):
        train_bias_model(small_dataset(99), TrainConfig())


def test_divergence_is_reported():
    data = small_dataset(300, 0.05)
    with pytest.raises(TrainingError):
        train_bias_model(data, TrainConfig(epochs=3, learning_rate=1e3))


def test_train_config_validation():
    for bad in ({"epochs": 0}, {"batch_size": 0}, {"learning_rate": 0}, {"momentum": 1.0}, {"validation_split": 1.0}):
        with pytest.raises(InvalidArgumentError):
            TrainConfig(**bad)
    with pytest.raises(InvalidArgumentError):
        train_bias_model(small_dataset(150), TrainConfig(batch_size=200))


def test_train_report_csv(tmp_path):
    _, report = train_bias_model(small_dataset(200), TrainConfig(epochs=2))
    path = tmp_path / "r.csv"
    report.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "joint,epoch,train_mse,validation_rmse"
    assert len(lines) == 1 + 6 * 2


# -- model persistence and prediction ---------------------------------------------------------


@pytest.fixture(scope="module")
def quick_model():
    model, _ = train_bias_model(small_dataset(400, 0.01), TrainConfig(epochs=2))
    return model


def test_model_file_round_trip(tmp_path, quick_model, rng):
    path = tmp_path / "m.json"
    quick_model.save(path)
    back = BiasModel.load(path)
    q = rng.uniform(-3, 3, 6)
    s = rng.integers(-1, 2, 6)
    np.testing.assert_array_equal(back.predict(q, s), quick_model.predict(q, s))
    assert back.seed == quick_model.seed


def test_model_file_rejects_mismatches(tmp_path, quick_model):
    d = quick_model.to_dict()
    d["joints"][2]["weights"][1] = np.zeros((64, 32)).tolist()
    with pytest.raises(InvalidArgumentError):
        BiasModel.from_dict(d)
    for key, value in (("format", "other"), ("version", 99), ("layer_sizes", [2, 32, 1])):
        d = quick_model.to_dict()
        d[key] = value
        with pytest.raises(InvalidArgumentError):
            BiasModel.from_dict(d)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(InvalidArgumentError):
        BiasModel.load(bad)


def test_prediction_is_deterministic_and_batched_consistently(quick_model, rng):
    q = rng.uniform(-3, 3, 6)
    s = rng.integers(-1, 2, 6)
    a = predict_bias(quick_model, q, s)
    np.testing.assert_array_equal(a, predict_bias(quick_model, q, s))
    single = [quick_model.predict_joint(j, q[j], s[j])[0] for j in range(6)]
    np.testing.assert_allclose(a, single, rtol=1e-12)


def test_flat_model_predicts_its_constant():
    nets = []
    for _ in range(6):
        net = JointNet.init(np.random.default_rng(0))
        for p in net.params():
            p[...] = 0.0
        nets.append(net)
    model = BiasModel(nets, 0.0, math.pi, np.full(6, 0.7), np.ones(6), seed=0)
    for q in np.linspace(-3, 3, 5):
        np.testing.assert_allclose(predict_bias(model, np.full(6, q), np.ones(6)), 0.7)


def test_prediction_is_lipschitz_in_angle(quick_model):
    # |d pred / dq| <= target_scale / angle_scale * product of layer spectral norms
    for j in range(6):
        net = quick_model.nets[j]
        bound = quick_model.target_scale[j] / quick_model.angle_scale
        bound *= np.prod([np.linalg.norm(W, 2) for W in net.weights])
        q = np.linspace(-math.pi, math.pi, 2001)
        for s in (-1, 0, 1):
            y = quick_model.predict_joint(j, q, s)
            slope = np.abs(np.diff(y) / np.diff(q)).max()
            assert slope <= bound * (1 + 1e-9)


def test_remove_bias():
    np.testing.assert_array_equal(remove_bias(np.arange(6.0), np.arange(6.0)), np.zeros(6))
    np.testing.assert_array_equal(remove_bias(np.ones(6), np.zeros(6)), np.ones(6))


def test_perfect_bias_model_cancels_free_motion_torques():
    arm = ArmModel.default()
    truth = SinusoidBias.default()
    q, qdot = free_motion_trajectory(200, seed=2)
    for k in range(0, 200, 20):
        s = np.sign(qdot[k])
        tau_s = truth.predict(q[k], s)  # no contact, no noise
        tau_int = remove_bias(tau_s, truth.predict(q[k], s))
        np.testing.assert_array_equal(tau_int, np.zeros(6))
        J = geometric_jacobian(arm, q[k])
        if np.linalg.cond(J) < 1e6:
            np.testing.assert_array_equal(wrench_from_joint_torques(J, tau_int).as_vector(), np.zeros(6))


# -- trained default model ------------------------------------------------------------------------


def test_default_model_traces_both_direction_branches(default_model):
    model, _ = default_model
    truth = SinusoidBias.default()
    sigma = 0.005  # calibration noise of the default recipe
    probes = np.linspace(-math.pi, math.pi, 100, endpoint=False) + math.pi / 100
    for j in range(6):
        for s in (-1.0, 1.0):
            err = model.predict_joint(j, probes, s) - truth.joint(j, probes, s)
            assert np.abs(err).max() <= 1.5 * sigma * 2, (j, s)  # worst probe
            assert np.sqrt(np.mean(err**2)) <= 1.5 * sigma, (j, s)


@pytest.mark.parametrize("q_test", [DEFAULT_Q0, (0.3, -0.5, 0.2, 1.2, 0.8, -0.4)])
def test_end_to_end_wrench_error_is_noise_limited(default_model, q_test):
    model, _ = default_model
    truth = SinusoidBias.default()
    sigma = 0.005
    rng = np.random.default_rng(7)
    _, J = kinematics(ArmModel.default(), np.array(q_test))
    errors = []
    for _ in range(2000):
        s = rng.integers(-1, 2, 6).astype(float)
        tau_s = truth.predict(np.array(q_test), s) + rng.normal(0, sigma, 6)
        tau_int = remove_bias(tau_s, predict_bias(model, np.array(q_test), s))
        errors.append(wrench_from_joint_torques(J, tau_int).as_vector())
    rms = np.sqrt(np.mean(np.square(errors)))
    # noise alone mapped through the pseudoinverse of J^T
    noise_rms = sigma * np.linalg.norm(np.linalg.inv(J.T), "fro") / math.sqrt(6)
    assert rms <= 2 * noise_rms


@given(st.integers(0, 2**16))
def test_generated_samples_respect_types(seed):
    data = small_dataset(150, 0.01, seed=seed)
    assert set(np.unique(data.direction)) <= {-1, 0, 1}
    assert np.all(np.isfinite(data.torque))
    assert np.bincount(data.joint).tolist() == [150] * 6
