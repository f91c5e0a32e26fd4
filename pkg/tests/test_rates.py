import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffwave.checks import Check, all_passed, assess_sweep
from diffwave.errors import DegenerateFit
from diffwave.rates import (
    NORM_KEYS,
    NormSeries,
    SweepConfig,
    aggregate,
    check_thermal_creep,
    emit_report,
    fit_eps_exponent,
    fit_time_exponent,
    load_case,
    monotone_in_eps,
    run_case,
    weighted_sup,
)
from diffwave.wave import WaveField

T = np.array([0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0])


def synthetic(eps, alpha=-1.0, beta=3.0, c=1.0):
    vals = c * eps**beta * (1 + T) ** alpha
    return NormSeries(eps, (0.9, 1.1), 1.0, T.copy(), {k: vals.copy() for k in NORM_KEYS}, [], 0.0)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(-3.0, 1.0), c=st.floats(1e-8, 1e3))
def test_time_fit_exact_on_power_law(alpha, c):
    a, resid = fit_time_exponent(synthetic(0.1, alpha, c=c), "L2x_pert")
    assert a == pytest.approx(alpha, abs=1e-12)
    assert resid < 1e-12


@settings(max_examples=25, deadline=None)
@given(beta=st.floats(0.5, 4.0))
def test_eps_fit_exact_on_power_law(beta):
    group = [synthetic(e, beta=beta) for e in (0.2, 0.1, 0.05)]
    b, _ = fit_eps_exponent(group, "L2x_dpert")
    assert b == pytest.approx(beta, abs=1e-12)


def test_fit_rejects_degenerate_data():
    zero = synthetic(0.1, c=0.0)
    with pytest.raises(DegenerateFit):
        fit_time_exponent(zero, "L2x_pert")
    with pytest.raises(ValueError):
        fit_time_exponent(synthetic(0.1), "L2x_pert", window=(50.0, 100.0))
    with pytest.raises(ValueError):
        fit_eps_exponent([synthetic(0.1), synthetic(0.2)], "L2x_pert")


def test_weighted_sup_and_monotonicity():
    s = synthetic(0.1, alpha=-1.0)
    assert weighted_sup(s, "L2x_pert", 0.9) == pytest.approx(1e-3)
    group = [synthetic(e) for e in (0.2, 0.1, 0.05)]
    assert monotone_in_eps(group, "L2x_pert", 10.0)
    growing = [synthetic(e, beta=-1.0) for e in (0.2, 0.1, 0.05)]
    assert not monotone_in_eps(growing, "L2x_pert", 10.0)


def test_assessment_gates_on_canonical_epsilon():
    group = [synthetic(e) for e in (0.2, 0.1, 0.05)]
    for g in group:
        g.norms["L2x_dpert"] = g.norms["L2x_dpert"] * (1 + T) ** -0.5
    # steeper decay at eps = 0.2 that leaves the t = 10 value unchanged
    group[0].norms["L2x_pert"] = group[0].norms["L2x_pert"] * ((1 + T) / 11.0) ** -2.0
    checks = assess_sweep(group)
    assert not checks["alpha_L2_eps=0.2"].passed and not checks["alpha_L2_eps=0.2"].gating
    assert checks["alpha_L2_eps=0.1"].passed and checks["alpha_L2_eps=0.1"].gating
    assert checks["beta_L2"].passed
    assert all_passed({k: v for k, v in checks.items() if not k.startswith("sup_monotone")})


def test_all_passed_ignores_informational():
    checks = {"a": Check(1, "x", True), "b": Check(2, "y", False, gating=False)}
    assert all_passed(checks)
    checks["c"] = Check(3, "z", False)
    assert not all_passed(checks)


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(epsilons=(0.0,))
    with pytest.raises(ValueError):
        SweepConfig(t_samples=(0.0, 200.0))
    cases = SweepConfig(epsilons=(0.2, 0.1, 0.05)).cases()
    assert [c[0] for c in cases] == [0.2, 0.1, 0.05]


@pytest.fixture(scope="module")
def small_case():
    return run_case(0.2, (0.9, 1.1), 1.0, 2.0, (0.0, 0.5, 1.0, 2.0), n_cells=512, eta0=1.0, keep_trajectory=True)


def test_run_case_outputs(small_case):
    assert list(small_case.t) == pytest.approx([0.0, 0.5, 1.0, 2.0])
    assert all(small_case.norms[k][0] <= 1e-10 for k in ("L2x_pert", "L2x_dpert", "L2x_zxx"))
    assert small_case.conservation <= 1e-8
    assert small_case.creep["ok"]
    assert len(small_case.trajectory) == 4


def test_creep_preconditions(small_case, profile):
    from diffwave.profile import ProfileParams, solve_profile

    down = WaveField(solve_profile(ProfileParams(1.1, 0.9)), 0.2, t_max=2.0)
    with pytest.raises(ValueError):
        check_thermal_creep(small_case.trajectory, down)


def test_creep_on_profile_matches_reference(small_case, profile):
    w = WaveField(profile, 0.2, t_max=2.0)
    rep = check_thermal_creep(small_case.trajectory[:1], w, 1.0)
    # the profile itself: u / theta_x = kappa / (2T) up to O(eps^2)
    assert rep.max_reference_deviation < 0.05
    assert rep.within_bounds


def test_report_round_trip_and_determinism(tmp_path, small_case):
    a = emit_report([small_case], tmp_path / "a")
    b = emit_report([small_case], tmp_path / "b")
    ra, rb = (tmp_path / d / "report.json" for d in ("a", "b"))
    assert ra.read_bytes() == rb.read_bytes()
    back = load_case(next((tmp_path / "a").glob("case_*.json")))
    for k in NORM_KEYS:
        np.testing.assert_array_equal(back.norms[k], small_case.norms[k])
    again = aggregate(tmp_path / "a")
    assert again == json.loads(ra.read_text())
    assert a["suite_version"] == "1"
    case = a["cases"][0]
    assert set(case) >= {"params", "norms", "fits", "creep", "flags"}
    assert set(case["fits"]["alpha"]) == set(NORM_KEYS)


def test_zero_wave_flagged(tmp_path):
    case = run_case(0.2, (1.0, 1.0), 1.0, 1.0, (0.0, 0.5, 1.0), n_cells=256)
    rep = emit_report([case], tmp_path)
    assert rep["cases"][0]["flags"]["all_zero_perturbation"]


def test_emit_requires_results(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path)
