import math

import numpy as np
import pytest

from oracles import first_order_position
from tactile_grasp.arm import ArmModel
from tactile_grasp.calibration import JointBias, SinusoidBias
from tactile_grasp.errors import InvalidArgumentError, SingularityError
from tactile_grasp.sim import (
    CSV_HEADER,
    ConvergenceReport,
    GraspSimulation,
    Scenario,
    SimLog,
    analyze,
    final_means,
    run_grasp,
)
from tactile_grasp.wrench import contact_sign_check

QUIET = Scenario().with_(noise_sigma=0.0)
ZERO_BIAS = SinusoidBias((JointBias(),) * 6)


@pytest.fixture(scope="module")
def quiet_full_run():
    """Noise-free, perfectly calibrated run that continues past completion."""
    sc = QUIET.with_(duration=25.0, stop_on_complete=False)
    return sc, run_grasp(sc)


# -- single steps ------------------------------------------------------------------


def test_cold_start_without_gap():
    sc = Scenario().with_(gap=0.0, bias=ZERO_BIAS, noise_sigma=0.0)
    sim = GraspSimulation(sc, sc.bias)
    rec = sim.step()
    np.testing.assert_array_equal(rec.wrench, np.zeros(6))
    assert rec.command[2] == sc.params.b_z * sc.params.v_dz
    np.testing.assert_array_equal(rec.command[[0, 1, 3, 4, 5]], np.zeros(5))


def test_step_advances_time_by_dt():
    sim = GraspSimulation(QUIET, QUIET.bias)
    times = [sim.step().t for _ in range(5)]
    np.testing.assert_allclose(np.diff(times), QUIET.dt, rtol=1e-12)
    assert sim.state.k == 5


def test_sensing_chain_round_trips_true_wrench():
    # start in contact so that every wrench channel is nonzero
    sc = QUIET.with_(gap=0.0)
    sim = GraspSimulation(sc, sc.bias)
    sim.state.contact.z = 0.004
    sim.state.contact.rotation = 0.1
    for _ in range(20):
        q = sim.state.q.copy()
        rec = sim.step()
        from tactile_grasp.arm import forward_kinematics

        R = forward_kinematics(sc.arm, q).rotation
        true_base = np.concatenate([R @ rec.wrench_true[:3], R @ rec.wrench_true[3:]])
        np.testing.assert_allclose(rec.wrench_base, true_base, atol=1e-9)
        np.testing.assert_allclose(rec.wrench_raw, rec.wrench_true, atol=1e-9)


# -- runs --------------------------------------------------------------------------


def test_log_shape_and_times(quiet_full_run):
    sc, log = quiet_full_run
    assert len(log) == sc.n_steps == 25000
    assert np.all(np.diff(log.t) > 0)
    assert log.t[0] == 0.0


def test_free_approach_matches_closed_form_position(quiet_full_run):
    sc, log = quiet_full_run
    pre = ~log.contact
    expected = sc.world.z0 - sc.gap + first_order_position(log.t[pre], sc.params.v_dz, sc.params.b_z)
    assert np.abs(log.z[pre] - expected).max() <= 1e-3


def test_contact_time_follows_lag_integral(quiet_full_run):
    sc, log = quiet_full_run
    predicted = sc.gap / sc.params.v_dz + 1.0 / sc.params.b_z
    contact = analyze(log, sc.params, sc.world).contact_time
    assert abs(contact - predicted) <= 0.1 * predicted


def test_approach_axis_force_opposes_motion(quiet_full_run):
    _, log = quiet_full_run
    idx = np.nonzero(log.contact & (log.velocity[:, 2] > 0))[0]
    assert len(idx) > 100
    for i in idx:
        assert contact_sign_check(log.wrench[i, :3] * [0, 0, 1], log.velocity[i, :3] * [0, 0, 1])


def test_rotation_stops_at_the_edge(quiet_full_run):
    sc, log = quiet_full_run
    crossed = np.nonzero(np.abs(log.rotation) >= sc.world.edge_radius)[0]
    assert len(crossed)
    i0 = crossed[0]
    w0 = abs(log.velocity[i0, 5])
    i1 = i0 + int(round(4.0 / sc.params.b_wz / sc.dt))
    # first-order decay: within 2% of the crossing rate after 4 time constants
    assert abs(log.velocity[i1, 5]) <= 0.02 * w0 + 1e-9
    assert abs(log.velocity[-1, 5]) < 1e-4
    assert abs(log.rotation[-1]) - sc.world.edge_radius < 0.05


def test_misalignment_torque_is_driven_out_of_the_band(quiet_full_run):
    _, log = quiet_full_run
    assert np.abs(log.wrench_true[log.contact][:10, 3]).max() > 0.02
    assert abs(log.wrench[-1, 3]) < 0.02 and abs(log.wrench_true[-1, 3]) < 0.02


def test_stopping_on_completion_truncates_the_log():
    log = run_grasp(QUIET)
    assert log.grasp_complete
    assert log.t[-1] == pytest.approx(log.grasp_complete_time)
    assert len(log) < QUIET.n_steps


def test_short_run_does_not_complete():
    log = run_grasp(QUIET.with_(duration=0.1))
    assert not log.grasp_complete and log.grasp_complete_time is None
    assert len(log) == 100


def test_runs_are_deterministic(tmp_path):
    sc = Scenario().with_(duration=7.0, seed=3)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_grasp(sc).write_csv(a)
    run_grasp(sc).write_csv(b)
    assert a.read_bytes() == b.read_bytes()
    run_grasp(sc.with_(seed=4)).write_csv(b)
    assert a.read_bytes() != b.read_bytes()


def test_singular_arm_halts_with_partial_log():
    planar = ArmModel(np.array([[0.15, 0.0, 0.0, 0.0]] * 6))
    with pytest.raises(SingularityError) as info:
        run_grasp(QUIET.with_(arm=planar))
    log = info.value.log
    assert len(log) == 0 and "singular" in log.halted


# -- log files ----------------------------------------------------------------------


def test_csv_header_and_round_trip(tmp_path):
    log = run_grasp(QUIET.with_(duration=0.05))
    path = tmp_path / "log.csv"
    log.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,ee_fx,ee_fy,ee_fz,ee_tx,ee_ty,ee_tz,vx,vy,vz,wx,wy,wz,z,contact,u_vx,u_vy,u_vz,u_wx,u_wy,u_wz"
    assert tuple(lines[0].split(",")) == CSV_HEADER
    assert len(lines) == 51
    back = SimLog.read_csv(path)
    for col in ("t", "wrench", "velocity", "z", "contact", "command"):
        np.testing.assert_array_equal(getattr(back, col), getattr(log, col))


def test_csv_header_checked(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidArgumentError):
        SimLog.read_csv(path)


# -- analysis --------------------------------------------------------------------------


def _constant_log(n, wrench, vz):
    log = SimLog.allocate(n)
    log.t = np.arange(n) * 0.001
    log.wrench[:] = wrench
    log.velocity[:, 2] = vz
    log.contact[:] = True
    return log


def test_constant_log_settles_immediately():
    p = QUIET.params
    log = _constant_log(500, [0, 0, -2.5, 0, 0, -0.0625], 0.0)
    rep = analyze(log, p, QUIET.world)
    assert all(v == 0.0 for v in rep.settle_time.values())
    for k in ("ee_fx", "ee_fy", "ee_fz", "ee_tx", "ee_ty", "ee_tz"):
        assert rep.delta[k] == pytest.approx(0.0, abs=1e-15)
    assert rep.contact_time == 0.0


def test_deltas_are_last_five_percent_means_minus_prediction():
    log = run_grasp(Scenario().with_(duration=12.0))
    rep = analyze(log, QUIET.params, QUIET.world)
    m = math.ceil(0.05 * len(log))
    tail = log.wrench[-m:]
    for i, axis in enumerate(("fx", "fy", "fz", "tx", "ty", "tz")):
        assert rep.final[f"ee_{axis}"] == pytest.approx(tail[:, i].mean(), abs=1e-15)
        assert rep.delta[f"ee_{axis}"] == pytest.approx(tail[:, i].mean() - rep.predicted[f"ee_{axis}"], abs=1e-15)
    assert final_means(log)["ee_fz"] == rep.final["ee_fz"]


def test_approach_settles_within_four_time_constants(quiet_full_run):
    sc, log = quiet_full_run
    rep = analyze(log, sc.params, sc.world)
    assert rep.approach_settle_time <= 4.0 / sc.params.b_z + 0.5


def test_empty_log_rejected():
    with pytest.raises(InvalidArgumentError):
        analyze(SimLog.allocate(0), QUIET.params)


def test_report_text_round_trip(quiet_full_run):
    sc, log = quiet_full_run
    rep = analyze(log, sc.params, sc.world)
    parsed = ConvergenceReport.parse(rep.to_text())
    assert float(parsed["final_ee_fz"]) == rep.final["ee_fz"]
    assert parsed["grasp_complete"] in ("true", "false")
    assert all("=" in line for line in rep.to_text().splitlines())


# -- scenario --------------------------------------------------------------------------


def test_scenario_validation():
    for bad in ({"duration": 0}, {"dt": 0.02}, {"dt": 0}, {"gap": -0.01}, {"noise_sigma": -1.0}, {"q0": (0.0,) * 5}):
        with pytest.raises(InvalidArgumentError):
            Scenario(**bad)
    assert Scenario().n_steps == 40000
    assert Scenario(noise_sigma=0.1).noise_sigma == (0.1,) * 6
