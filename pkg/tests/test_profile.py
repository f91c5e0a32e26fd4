import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ORACLE_T0, ORACLE_T2, ORACLE_TP0, ORACLE_TP2
from diffwave.errors import InsufficientTail
from diffwave.profile import (
    ProfileParams,
    SelfSimilarProfile,
    profile_eval,
    second_derivative,
    solve_profile,
    spacetime_fields,
    verify_slope_bounds,
    verify_tail,
)
from oracles import refinement_order


def test_frozen_oracle_values(profile):
    T, Tp, _ = profile_eval(profile, np.array([0.0, 2.0]))
    np.testing.assert_allclose(T, [ORACLE_T0, ORACLE_T2], rtol=0, atol=1e-10)
    np.testing.assert_allclose(Tp, [ORACLE_TP0, ORACLE_TP2], rtol=0, atol=1e-10)


def test_far_field_limits_and_shape(profile):
    p = profile.params
    assert abs(profile.T_values[0] - p.theta_minus) <= p.tol
    assert abs(profile.T_values[-1] - p.theta_plus) <= p.tol
    assert np.all(profile.Tp_values >= 0)
    assert profile.T_values.min() >= p.theta_minus - 1e-12
    assert profile.T_values.max() <= p.theta_plus + 1e-12


def test_mirror_symmetry():
    up = solve_profile(ProfileParams(0.9, 1.1))
    down = solve_profile(ProfileParams(1.1, 0.9))
    np.testing.assert_allclose(down.T_values, up.T_values[::-1], atol=1e-12)
    np.testing.assert_allclose(down.Tp_values, -up.Tp_values[::-1], atol=1e-12)


def test_constant_profile(flat_profile):
    assert flat_profile.is_constant
    assert np.all(flat_profile.T_values == 1.0)
    assert np.all(flat_profile.Tp_values == 0.0)


def test_second_derivative_matches_differences(profile):
    eta, T, Tp = profile.eta_nodes, profile.T_values, profile.Tp_values
    h = eta[1] - eta[0]
    fd = (Tp[2:] - Tp[:-2]) / (2 * h)
    ode = second_derivative(eta[1:-1], T[1:-1], Tp[1:-1], profile.params.kappa)
    assert np.max(np.abs(fd - ode)) < 10 * h**2


def test_ode_residual_refines_at_second_order(profile):
    kappa = profile.params.kappa
    errs = []
    for n in (201, 401, 801):
        eta = np.linspace(-6, 6, n)
        h = eta[1] - eta[0]
        T, Tp, _ = profile_eval(profile, eta)
        q = Tp / T
        r = eta[1:-1] / kappa * Tp[1:-1] + (q[2:] - q[:-2]) / (2 * h)
        errs.append(np.max(np.abs(r)))
    assert refinement_order(errs).min() >= 1.8


def test_tail_slopes(profile):
    rep = verify_tail(profile)
    assert rep.theory_right == pytest.approx(-0.55)
    assert rep.theory_left == pytest.approx(-0.45)
    assert rep.rel_err_right < 0.1
    assert rep.rel_err_left < 0.1


def test_tail_rejects_constant(flat_profile):
    with pytest.raises(InsufficientTail):
        verify_tail(flat_profile)


def test_slope_bounds_positive(profile):
    rep = verify_slope_bounds(profile)
    assert 0 < rep.r_min <= rep.r_max < np.inf


def test_json_round_trip(profile):
    back = SelfSimilarProfile.from_json(profile.to_json())
    assert np.array_equal(back.T_values, profile.T_values)
    assert np.array_equal(back.Tp_values, profile.Tp_values)
    assert back.params == profile.params


def test_spacetime_scaling(profile):
    x = np.linspace(-5, 5, 11)
    T, Tx, Tt, Txx = spacetime_fields(profile, x, 0.0)
    T0, Tp0, Tpp0 = profile_eval(profile, x)
    np.testing.assert_array_equal(T, T0)
    np.testing.assert_array_equal(Tx, Tp0)
    # the centre does not move
    assert spacetime_fields(profile, np.array([0.0]), 7.0)[2][0] == 0.0


@pytest.mark.parametrize("field,value", [("theta_minus", 0.0), ("kappa", -1.0), ("n_nodes", 10)])
def test_params_validation(field, value):
    with pytest.raises(ValueError):
        ProfileParams(**{field: value})


@settings(max_examples=8, deadline=None)
@given(
    lo=st.floats(0.5, 1.0),
    gap=st.floats(0.05, 0.5),
    kappa=st.floats(0.5, 2.0),
)
def test_maximum_principle_and_monotonicity(lo, gap, kappa):
    prof = solve_profile(ProfileParams(lo, lo + gap, kappa, eta_max=12.0))
    assert prof.T_values.min() >= lo - 1e-10
    assert prof.T_values.max() <= lo + gap + 1e-10
    assert np.all(prof.Tp_values >= 0)
