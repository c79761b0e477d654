import math

import numpy as np
import pytest

from hybrid_scltl.automaton import DONE, accepts
from hybrid_scltl.hybrid import (Engine, HybridController, JumpRecord, NumericalBlowup,
                                 TrajectoryLog, certificate_lambda, check_certificate,
                                 check_eventuality, check_time_domain, run)
from hybrid_scltl.scenario import load_scenario, scenario_from_dict


def _small(**extra):
    cfg = {
        "name": "small", "plant": "zero", "plant_params": {"n": 2},
        "alphabet": ["a", "b"], "formula": "F a",
        "roi": [{"name": "a", "center": [1.0, 0.0], "radius": 0.2},
                {"name": "b", "center": [-1.0, 0.0], "radius": 0.2}],
        "x0": [0.0, 0.5], "dt": 0.01, "t_max": 0.5,
        "sysid": {"prepopulate": False, "beta_theta": 1e-9, "theta0": [[0, 0], [0, 0]]},
    }
    for k, v in extra.items():
        cfg[k] = v
    return scenario_from_dict(cfg)


def test_zero_dynamics_state_unchanged():
    log = run(_small(controller="off"))
    np.testing.assert_array_equal(log.x, np.tile([0.0, 0.5], (len(log), 1)))
    assert len(log) == 51
    assert check_eventuality(log, Engine(_small()).fsa)["accepted"] is False


def test_immediate_jump_at_start():
    eng = Engine(_small(x0=[1.05, 0.0], stop_on_accept=True, settle_time=0.1))
    log = eng.run()
    assert log.jumps[0].t == 0.0
    assert log.jumps[0].o == "a" and log.jumps[0].v == DONE
    ev = check_eventuality(log, eng.fsa)
    assert ev == {"accepted": True, "T": 0.0, "J": 1}
    # stops after the settle window
    assert log.t[-1] == pytest.approx(0.1)


def test_no_jump_outside_target():
    log = run(_small(controller="off"))
    assert log.jumps == []
    assert set(log.o) == {"a"}


def test_check_eventuality_initial_accepting_state():
    log = run(_small(controller="off"))
    fake_fsa = type("F", (), {"accepting": frozenset({0})})()
    assert check_eventuality(log, fake_fsa) == {"accepted": True, "T": 0.0, "J": 0}


def test_degenerate_certificate_vacuous():
    eng = Engine(_small(controller="off"))
    log = eng.run()
    rep = check_certificate(log, eng.fsa, eng.dta, eng.rois)
    assert rep["a_distance_decrease"] and rep["b_surrogate_decrease"]
    assert certificate_lambda([]) == 1.0


def test_certificate_lambda_witness():
    j = [JumpRecord(0.1, 1, 0, 1, "o1", "o2", 3, 2, 1.0, 4.0),
         JumpRecord(0.2, 2, 1, 3, "o2", "o3", 2, 1, 1.0, 1.5)]
    # min(0.5 * 1 / 3, 0.5 * 1 / 1)
    assert certificate_lambda(j) == pytest.approx(1 / 6)


def test_forbidden_entry_is_reported(bench_runs):
    eng, _ = bench_runs[("o1", "o2", "o3")]
    log = Engine(load_scenario("benchmark2d", {"controller": "off", "t_max": 2.0})).run()
    rep = check_certificate(log, eng.fsa, eng.dta, eng.rois)
    assert not rep["c_forbidden_clear"]
    assert not check_eventuality(log, eng.fsa)["accepted"]


@pytest.mark.parametrize("word", [("o1", "o2", "o3"), ("o2", "o1", "o3")])
def test_benchmark_fixed_words(bench_runs, word):
    eng, log = bench_runs[word]
    assert log.status == "ok"
    assert log.word() == word
    assert accepts(eng.fsa, list(log.word()))
    ev = check_eventuality(log, eng.fsa)
    assert ev["accepted"] and ev["T"] <= 5.0 and ev["J"] == 3
    rep = check_certificate(log, eng.fsa, eng.dta, eng.rois)
    assert rep["ok"], rep
    assert check_time_domain(log)
    assert np.all(log.clearance > 0)


def test_first_jump_of_benchmark(bench_runs):
    _, log = bench_runs[("o1", "o2", "o3")]
    first = log.jumps[0]
    assert (first.s_from, first.s_to, first.o, first.v) == (0, 1, "o1", "o2")
    assert (first.Vd_before, first.Vd_after) == (3, 2)


def test_benchmark_log_shape_and_bounds(bench_runs):
    _, log = bench_runs[("o1", "o2", "o3")]
    assert len(log) == 5001
    for arr in (log.x, log.u, log.Wc, log.Wa, log.delta, log.theta_err):
        assert np.all(np.isfinite(arr))
    gth = log.gamma_theta_eig
    assert gth[:, 0].min() > 0 and gth[:, 1].max() < 10 * 20.0
    assert log.gamma_eig[:, 0].min() > 0


def test_bellman_error_decays_on_benchmark(bench_runs):
    _, log = bench_runs[("o1", "o2", "o3")]
    first = np.abs(log.delta[log.t < 0.5]).mean()
    last = np.abs(log.delta[log.t > log.t[-1] - 0.5]).mean()
    assert last < first


def test_determinism():
    sc = load_scenario("benchmark2d", {"t_max": 0.3})
    a, b = run(sc), run(sc)
    for name in ("x", "u", "Wc", "Wa", "delta", "theta_err", "value"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_dt_halving_one_second():
    a = run(load_scenario("benchmark2d", {"t_max": 1.0}))
    b = run(load_scenario("benchmark2d", {"t_max": 1.0, "dt": 0.0005}))
    assert np.linalg.norm(a.x[-1] - b.x[-1]) < 1e-3


def test_numerical_blowup_is_raised(caplog):
    sc = load_scenario("benchmark2d", {"t_max": 0.2, "sysid.dt_window": 0.4})
    with pytest.raises(NumericalBlowup) as info:
        run(sc)
    assert "stiff" in caplog.text
    assert isinstance(info.value.log, TrajectoryLog)


def test_online_accumulation_fills_stack():
    sc = load_scenario("benchmark2d", {"t_max": 1.0, "sysid.prepopulate": False,
                                       "sysid.online": True, "sysid.M": 5,
                                       "sysid.gamma0": 1.0})
    eng = Engine(sc)
    eng.run()
    assert len(eng.stack) == 5


def test_controller_wrapper():
    est = HybridController("benchmark2d", word=["o2", "o1", "o3"], overrides={"t_max": 1.0})
    assert est.get_params()["word"] == ["o2", "o1", "o3"]
    est.fit()
    assert est.accepted_ == [True]
    u = est.predict(np.array([[0.0, -1.0], [0.5, -0.5]]))
    assert u.shape == (2, 2)
    assert np.all(np.isfinite(u))
