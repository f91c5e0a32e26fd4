import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffwave.errors import NonPositiveTemperature
from diffwave.wave import (
    WaveField,
    eval_bar,
    eval_tilde,
    profile_terms,
    residuals,
    verify_approximate_system,
    verify_limit_identity,
)
from oracles import refinement_order


def _grid(h, half=12.0, t=0.0):
    r = np.sqrt(1 + t)
    n = int(round(2 * half * r / h))
    return np.linspace(-half * r, half * r, n + 1)


def test_bar_profile_structure(wave):
    x = np.linspace(-10, 10, 201)
    v, u, theta = eval_bar(wave, x, 0.5)
    np.testing.assert_array_equal(v, theta)
    # pressure of the diffusion wave is exactly one
    np.testing.assert_allclose(theta / v, 1.0, rtol=0, atol=1e-15)
    p = profile_terms(wave, x, 0.5)
    np.testing.assert_allclose(u, wave.kappa * p.Tx / (2 * p.T), rtol=1e-14)


def test_corrected_pressure_is_small_perturbation(wave):
    x = np.linspace(-10, 10, 401)
    p = profile_terms(wave, x, 0.0)
    u_max = np.max(np.abs(p.u))
    lower = 1 - wave.epsilon**2 * u_max**2 / (2 * p.T.min())
    assert np.all(p.P <= 1.0 + 1e-15)
    assert np.all(p.P >= lower - 1e-15)


def test_far_field_condition(wave):
    v, _, theta = eval_bar(wave, np.array([-1e3, 1e3]), 0.0)
    np.testing.assert_allclose(theta / v, [1.0, 1.0])


@pytest.mark.parametrize("eps", [0.0, 0.1])
def test_residuals_vanish_without_wave(flat_profile, eps):
    w = WaveField(flat_profile, eps)
    r = residuals(w, np.linspace(-5, 5, 51), 1.0)
    assert np.all(r.R1 == 0) and np.all(r.R2 == 0)


def test_residuals_vanish_at_zero_mach(profile):
    r = residuals(WaveField(profile, 0.0), np.linspace(-5, 5, 51), 1.0)
    np.testing.assert_array_equal(r.R1, 0.0)
    np.testing.assert_array_equal(r.R2, 0.0)


def test_constant_profile_residuals_zero(flat_profile):
    w = WaveField(flat_profile, 0.1)
    assert max(verify_approximate_system(w, _grid(0.05), 0.0)) < 1e-13
    assert verify_limit_identity(w, _grid(0.05), 0.0) < 1e-13


@pytest.mark.parametrize("t", [0.0, 1.0])
def test_approximate_system_second_order(wave, t):
    res = np.array([verify_approximate_system(wave, _grid(h, t=t), t) for h in (0.02, 0.01, 0.005)])
    for k in range(3):
        assert refinement_order(res[:, k]).min() >= 1.8


def test_mass_equation_exact_analytically(wave):
    x = np.linspace(-10, 10, 401)
    for t in (0.0, 3.0):
        p = profile_terms(wave, x, t)
        np.testing.assert_allclose(p.Tt, p.ux, rtol=0, atol=1e-13)


def test_limit_identity_second_order(wave):
    errs = [verify_limit_identity(wave, _grid(h), 0.0) for h in (0.02, 0.01, 0.005)]
    assert refinement_order(errs).min() >= 1.8


def test_rejects_large_mach(profile):
    with pytest.raises(ValueError):
        WaveField(profile, 1.5)


def test_scaled_coordinates(wave):
    x, t = wave.scaled(10.0, 100.0)
    assert x == pytest.approx(1.0) and t == pytest.approx(1.0)


def test_non_positive_temperature_detected(monkeypatch, profile):
    import diffwave.wave as wmod

    real = wmod.eval_tilde

    def broken(w, x, t, check=True):
        v, u, theta, *rest = real(w, x, t, check)
        return (v, u, theta - 2.0, *rest)

    monkeypatch.setattr(wmod, "eval_tilde", broken)
    with pytest.raises(NonPositiveTemperature):
        WaveField(profile, 0.1)


@settings(max_examples=20, deadline=None)
@given(eps=st.floats(0.01, 0.5), t=st.floats(0.0, 50.0))
def test_kinetic_correction_identity(profile, eps, t):
    w = WaveField(profile, eps, t_max=1.0)
    x = np.linspace(-8, 8, 33) * np.sqrt(1 + t)
    _, u, theta_bar = eval_bar(w, x, t)
    _, _, theta_tilde, *_ = eval_tilde(w, x, t)
    np.testing.assert_allclose(theta_bar - theta_tilde, 0.5 * (eps * u) ** 2, atol=1e-15)
