"""Acceptance suite on the canonical case (far field 0.9 / 1.1, kappa = 1).

Each test records one PASS/FAIL line; the lines are printed together in the
terminal summary. The canonical sweep (8192 cells to t = 100 for three
epsilons) takes roughly ten minutes on one core.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from diffwave.checks import (
    all_passed,
    approximate_system_orders,
    assess_sweep,
    equivalence_checks,
    structural_checks,
    system_orders,
)
from diffwave.hydro import conservation_report
from diffwave.perturbation import (
    char_decompose,
    compute_perturbation,
    e1_bounds,
    energy_E1_K1,
    f_sandwich,
    with_weight,
)
from diffwave.profile import ProfileParams, profile_eval, solve_profile, verify_tail
from diffwave.rates import SweepConfig, run_sweep
from diffwave.wave import WaveField
from oracles import collocation_profile

CANONICAL = ProfileParams(0.9, 1.1, 1.0)


def record(n, title, passed, detail=""):
    ACCEPTANCE_LINES[n] = f"[{'PASS' if passed else 'FAIL'}] {n:2d}. {title}: {detail}"
    print(ACCEPTANCE_LINES[n])
    assert passed, ACCEPTANCE_LINES[n]


def _brief(checks):
    return ", ".join(f"{k}={c.value if not isinstance(c.value, float) else f'{c.value:.3g}'}" for k, c in checks.items())


@pytest.fixture(scope="module")
def sweep():
    start = time.perf_counter()
    results = run_sweep(SweepConfig(), keep_trajectories=True)
    return {r.epsilon: r for r in results}, time.perf_counter() - start


@pytest.fixture(scope="module")
def sweep_checks(sweep):
    return assess_sweep(list(sweep[0].values()))


def test_01_profile_matches_oracle():
    start = time.perf_counter()
    prof = solve_profile(CANONICAL)
    elapsed = time.perf_counter() - start
    eta, T, Tp, evaluate, _ = collocation_profile(0.9, 1.1, 1.0, eta_max=8.0, n=300)
    inner = np.abs(eta) <= prof.params.eta_max
    gap_T = np.max(np.abs(profile_eval(prof, eta[inner])[0] - T[inner]))
    gap_Tp = np.max(np.abs(profile_eval(prof, eta[inner])[1] - Tp[inner]))
    gap = max(gap_T, gap_Tp)
    record(1, "profile vs collocation oracle", gap <= 1e-8 and elapsed < 5.0, f"max gap {gap:.2e}, solve {elapsed:.2f}s")


def test_02_gaussian_tails():
    rep = verify_tail(solve_profile(CANONICAL))
    ok = rep.rel_err_right <= 0.1 and rep.rel_err_left <= 0.1
    record(
        2,
        "tail slopes",
        ok,
        f"right {rep.slope_right:.4f} vs {rep.theory_right:.4f}, left {rep.slope_left:.4f} vs {rep.theory_left:.4f}",
    )


def test_03_approximate_system_orders(profile):
    wave = WaveField(profile, 0.1, t_max=1.0)
    checks = {f"{k}@t={t:g}": c for t in (0.0, 1.0) for k, c in approximate_system_orders(wave, t).items()}
    worst = min(min(c.value) for c in checks.values() if isinstance(c.value, list) and c.threshold.startswith(">="))
    record(3, "approximate-system and limit-identity orders", all_passed(checks), f"min order {worst:.2f}")


def test_04_scaled_unscaled_equivalence(profile):
    checks = equivalence_checks(profile)
    record(4, "scaled/unscaled equivalence", all_passed(checks), _brief(checks))


def test_05_structural_identities(sweep):
    canonical = sweep[0][0.1]
    checks = structural_checks(canonical.trajectory, canonical_wave(canonical))
    record(5, "structural identities on stored snapshots", all_passed(checks), _brief(checks))


def canonical_wave(series):
    return WaveField(solve_profile(ProfileParams(*series.theta_pair, series.kappa)), series.epsilon, t_max=100.0)


def test_06_energy_equivalences(sweep):
    series = sweep[0][0.1]
    wave = canonical_wave(series)
    ok, notes = True, []
    for s in series.trajectory[1:]:
        pert = compute_perturbation(s, wave)
        char = with_weight(char_decompose(pert, wave), wave)
        b = e1_bounds(pert, char)
        try:
            energy_E1_K1(pert, char, wave)
            wy = True
        except AssertionError:
            wy = False
        sw = f_sandwich(s, wave)
        ok &= b.holds and wy and sw.holds
        if not (b.holds and wy and sw.holds):
            notes.append(f"t={s.t:g}")
    detail = f"{len(series.trajectory) - 1} snapshots" + (f", failing at {notes}" if notes else "")
    record(6, "E1 bounds, W_y dissipation bound, entropy sandwich", ok, detail)


def test_07_perturbation_system_orders(profile):
    checks, _ = system_orders(WaveField(profile, 0.1, t_max=1.0))
    worst = min(min(c.value) for c in checks.values() if c.threshold.startswith(">="))
    record(7, "perturbation-system residual orders", all_passed(checks), f"min order {worst:.2f}")


def test_08_time_decay(sweep_checks):
    a0, a1 = sweep_checks["alpha_L2_eps=0.1"], sweep_checks["alpha_dL2_eps=0.1"]
    sup = sweep_checks["sup_weighted_eps=0.1"]
    others = {k: round(c.value, 3) for k, c in sweep_checks.items() if k.startswith("alpha") and not c.gating}
    record(
        8,
        "time-decay exponents at eps=0.1",
        a0.passed and a1.passed and sup.passed,
        f"alpha_L2={a0.value:.3f} in {a0.threshold}, alpha_dL2={a1.value:.3f} in {a1.threshold}, "
        f"weighted sup={sup.value:.3g}; other eps {others}",
    )


def test_09_epsilon_scaling(sweep_checks):
    keys = ["beta_L2", "beta_dL2"] + [k for k in sweep_checks if k.startswith("sup_monotone")]
    checks = {k: sweep_checks[k] for k in keys}
    detail = f"beta_L2={checks['beta_L2'].value:.3f}, beta_dL2={checks['beta_dL2'].value:.3f}, " + ", ".join(
        f"{k}={'ok' if checks[k].passed else 'no'}" for k in keys[2:]
    )
    record(9, "epsilon scaling", all_passed(checks), detail)


def test_10_thermal_creep_and_runtime(sweep, sweep_checks):
    creep = sweep_checks["creep"]
    elapsed = sweep[1]
    c = creep.value
    detail = (
        f"ratio [{c.get('ratio_min', math.nan):.4f}, {c.get('ratio_max', math.nan):.4f}] "
        f"within [{c.get('lower_bound', math.nan):.4f}, {c.get('upper_bound', math.nan):.4f}], "
        f"sweep {elapsed / 60:.1f} min"
    )
    record(10, "thermal creep at eps=0.05 and sweep runtime", creep.passed and elapsed <= 1800, detail)


def test_11_conservation_and_positivity(sweep, short_run):
    worst = max(r.conservation for r in sweep[0].values())
    worst = max(worst, conservation_report(short_run).worst)
    positive = all(r.positivity for r in sweep[0].values())
    positive &= all(min(s.v.min(), s.theta.min()) > 0 for r in sweep[0].values() for s in r.trajectory)
    record(11, "conservation and positivity", worst <= 1e-8 and positive, f"worst imbalance {worst:.2e} per unit tau")
