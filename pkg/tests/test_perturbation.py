import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import diffwave.perturbation as pmod
from diffwave.errors import NoAdmissibleN
from diffwave.hydro import GridSpec, init_state
from diffwave.perturbation import (
    DIAGNOSTIC_COLUMNS,
    char_decompose,
    compute_perturbation,
    convection_matrix,
    e1_bounds,
    energy_E1_K1,
    energy_E2_K2,
    entropy_F,
    f_sandwich,
    left_matrix,
    norms_report,
    reconstruct,
    right_matrix,
    select_weight_N,
    verify_perturbation_systems,
    weight_violation,
    with_weight,
)
from diffwave.wave import WaveField

v_tilde = st.floats(0.2, 5.0)


@pytest.fixture(scope="module")
def late(short_run):
    return short_run[-1]


@pytest.fixture(scope="module")
def late_pert(late, wave):
    return compute_perturbation(late, wave)


def test_initial_perturbation_vanishes(wave):
    s = init_state(wave, GridSpec.for_run(0.1, 1.0, 512))
    p = compute_perturbation(s, wave)
    for f in (p.phi, p.psi, p.zeta, p.omega, p.Phi, p.Psi, p.W):
        assert np.max(np.abs(f)) <= 1e-14
    d = norms_report(p, s, wave)
    assert all(v <= 1e-10 for k, v in d.norms_x.items() if k.startswith("L2"))


def test_antiderivatives_anchor_left(late_pert):
    assert late_pert.Phi[0] == late_pert.Psi[0] == late_pert.Wbar[0] == 0.0


def test_zeta_identity_on_snapshots(short_run, wave):
    for s in short_run[1:]:
        p = compute_perturbation(s, wave)
        assert p.identity_residual <= p.identity_bound


def test_rejects_mismatched_epsilon(late, profile):
    with pytest.raises(ValueError):
        compute_perturbation(late, WaveField(profile, 0.2, t_max=1.0))


@settings(max_examples=30, deadline=None)
@given(v=v_tilde)
def test_left_right_inverse(v):
    lam = np.sqrt(2.0 / np.array([v]))
    L, R = left_matrix(lam)[0], right_matrix(lam)[0]
    np.testing.assert_allclose(L @ R, np.eye(3), atol=1e-14)
    # unnormalised rows and columns: l_i . r_j = 4 delta_ij
    np.testing.assert_allclose((2 * L) @ (2 * R), 4 * np.eye(3), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(v=v_tilde)
def test_diagonalization(v):
    vv = np.array([v])
    lam = np.sqrt(2.0 / vv)
    Lam = (left_matrix(lam) @ convection_matrix(vv) @ right_matrix(lam))[0]
    np.testing.assert_allclose(Lam, np.diag([-lam[0], 0.0, lam[0]]), atol=1e-12)


def test_eigenvalues_of_convection_matrix():
    v = np.array([0.9])
    ev = np.sort(np.linalg.eigvals(convection_matrix(v)[0]).real)
    np.testing.assert_allclose(ev, [-np.sqrt(2 / 0.9), 0.0, np.sqrt(2 / 0.9)], atol=1e-14)


def test_characteristic_round_trip(late_pert, wave):
    char = char_decompose(late_pert, wave)
    m = np.stack([late_pert.Phi, late_pert.Psi, late_pert.W], axis=-1)
    assert np.max(np.abs(reconstruct(char) - m)) <= 1e-12


def test_weight_is_minimal_and_admissible(late_pert, wave):
    char = char_decompose(late_pert, wave)
    N = select_weight_N(char, wave)
    assert weight_violation(char, N) == -1
    if N > 0:
        assert weight_violation(char, N - 1) >= 0


def test_weight_zero_without_wave(flat_profile):
    w = WaveField(flat_profile, 0.1)
    s = init_state(w, GridSpec.symmetric(50.0, 256))
    char = char_decompose(compute_perturbation(s, w), w)
    assert select_weight_N(char, w) == 0


def test_weight_fallback_flag(monkeypatch, late_pert, wave):
    def none(*args, **kw):
        raise NoAdmissibleN("forced")

    monkeypatch.setattr(pmod, "select_weight_N", none)
    char = with_weight(char_decompose(late_pert, wave), wave)
    assert char.N == 0 and char.N_fallback


def test_energy_equivalence_and_dissipation(short_run, wave):
    for s in short_run[1:]:
        p = compute_perturbation(s, wave)
        char = with_weight(char_decompose(p, wave), wave)
        b = e1_bounds(p, char)
        assert b.holds
        E1, K1 = energy_E1_K1(p, char, wave)  # asserts the W_y bound internally
        assert E1 == pytest.approx(b.E1, rel=1e-12)
        assert K1 >= 0


def test_entropy_function():
    assert entropy_F(1.0) == 0.0
    assert entropy_F(1 + 1e-9) == pytest.approx(0.5e-18, rel=1e-6)


@settings(max_examples=50, deadline=None)
@given(s=st.floats(1e-3, 50.0))
def test_entropy_nonnegative(s):
    assert entropy_F(s) >= 0.0


@settings(max_examples=50, deadline=None)
@given(s=st.floats(0.5, 1.5))
def test_entropy_quadratic_sandwich(s):
    d2 = (s - 1.0) ** 2
    assert d2 / 6 - 1e-16 <= entropy_F(s) <= d2 + 1e-16


def test_f_sandwich_on_snapshots(short_run, wave):
    for s in short_run:
        rep = f_sandwich(s, wave)
        assert rep.guarded_cells > 0
        assert rep.holds


def test_E2_small_and_quadratic(late, wave):
    r = energy_E2_K2(late, wave)
    assert r.E2 >= 0 and r.K2 >= 0
    assert 0.1 < r.ratio < 2.0


def test_diagnostics_row(late_pert, late, wave):
    d = norms_report(late_pert, late, wave)
    assert len(d.csv_row()) == len(DIAGNOSTIC_COLUMNS)
    eps = wave.epsilon
    assert d.norms_x["L2x_pert"] == pytest.approx(eps * d.norms_y["L2_pert"])
    assert d.norms_x["Linf_u_err"] == pytest.approx(d.norms_y["Linf_psi"] / eps)
    assert not d.N_fallback


def test_system_residuals_small(short_run, wave):
    r = verify_perturbation_systems(short_run, wave)
    for group in (r.fin1, r.fin2, r.fin3):
        assert all(np.isfinite(group))


def test_system_residuals_need_three_snapshots(short_run, wave):
    with pytest.raises(ValueError):
        verify_perturbation_systems(short_run[:2], wave)
