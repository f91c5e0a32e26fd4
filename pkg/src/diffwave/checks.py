"""Verification suites shared by the command line and the test-suite.

Each suite returns a flat mapping of named results; every entry carries the
measured value, the threshold it is compared against and a pass flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hydro import GridSpec, SolverConfig, conservation_report, init_state, run, verify_unscaled_equivalence
from .perturbation import (
    char_decompose,
    compute_perturbation,
    convection_matrix,
    left_matrix,
    reconstruct,
    right_matrix,
    verify_perturbation_systems,
)
from .profile import SelfSimilarProfile
from .rates import L2_KEYS, SUP_KEYS, NormSeries, fit_eps_exponent, fit_time_exponent, weighted_sup
from .errors import DegenerateFit
from .wave import WaveField, verify_approximate_system, verify_limit_identity


@dataclass(frozen=True)
class Check:
    value: object
    threshold: object
    passed: bool
    gating: bool = True  # informational checks are reported but never fail a run

    def as_dict(self) -> dict:
        return {"value": self.value, "threshold": self.threshold, "passed": bool(self.passed), "gating": self.gating}


def all_passed(checks: dict) -> bool:
    return all(c.passed for c in checks.values() if c.gating)


def _orders(errors):
    e = np.asarray(errors, dtype=float)
    return [float(v) for v in np.log2(e[:-1] / e[1:])]


def _order_check(errors, minimum, floor=1e-12):
    """Observed refinement orders; errors already at rounding level count as converged."""
    if max(errors) <= floor:
        return Check(list(map(float, errors)), f"<= {floor:g}", True)
    orders = _orders(errors)
    return Check(orders, f">= {minimum}", min(orders) >= minimum)


def approximate_system_orders(wave: WaveField, t=0.0, half_width=12.0, spacings=(0.02, 0.01, 0.005)):
    """Refinement orders of the approximate-system and limit-identity residuals."""
    res, lim = [], []
    root = math.sqrt(1.0 + t)
    for h in spacings:
        n = int(round(2 * half_width * root / h))
        x = np.linspace(-half_width * root, half_width * root, n + 1)
        res.append(verify_approximate_system(wave, x, t))
        lim.append(verify_limit_identity(wave, x, t))
    res = np.array(res)
    out = {f"approx_eq{k + 1}": _order_check(res[:, k], 1.8) for k in range(3)}
    out["limit_identity"] = _order_check(lim, 1.8)
    return out


def system_orders(wave: WaveField, t_sizing=1.0, tau_centre=10.0, cells=(512, 1024, 2048), config=None):
    """Joint (h, dtau) refinement of the reformulated-system residuals.

    Snapshot triples are spaced 4h apart in tau around ``tau_centre``.
    Returns the orders per equation plus the trajectories of the finest level.
    """
    config = config or SolverConfig()
    levels = []
    finest = None
    for n in cells:
        grid = GridSpec.for_run(wave.epsilon, t_sizing, n)
        s0 = init_state(wave, grid)
        d = 4 * grid.h
        traj = run(s0, tau_centre + d, config, wave, [tau_centre - d, tau_centre, tau_centre + d])
        levels.append(verify_perturbation_systems(traj, wave))
        finest = traj
    out = {}
    for name in ("fin1", "fin2", "fin3"):
        errs = np.array([getattr(r, name) for r in levels])
        for k in range(3):
            out[f"{name}_{k + 1}"] = _order_check(errs[:, k], 1.0)
    return out, finest


def structural_checks(snapshots, wave: WaveField, rng_seed=0):
    """Per-snapshot identities: zeta relation, characteristic round trip, diagonalization."""
    worst_identity = 0.0
    identity_ok = True
    roundtrip = 0.0
    diag_err = 0.0
    for s in snapshots:
        pert = compute_perturbation(s, wave, check=False)
        identity_ok &= pert.identity_residual <= pert.identity_bound
        worst_identity = max(worst_identity, pert.identity_residual / max(pert.identity_bound, 1e-300))
        char = char_decompose(pert, wave)
        m = np.stack([pert.Phi, pert.Psi, pert.W], axis=-1)
        roundtrip = max(roundtrip, float(np.max(np.abs(reconstruct(char) - m), initial=0.0)))
        lam3 = char.lambda3
        Lam = left_matrix(lam3) @ convection_matrix(char.v_tilde) @ right_matrix(lam3)
        target = np.zeros_like(Lam)
        target[:, 0, 0] = char.lambda1
        target[:, 2, 2] = char.lambda3
        diag_err = max(diag_err, float(np.max(np.abs(Lam - target))))
    rng = np.random.default_rng(rng_seed)
    lam = np.sqrt(2.0 / rng.uniform(0.5, 2.0, 1000))
    lr = 4.0 * left_matrix(lam) @ right_matrix(lam)  # entries l_i . r_j
    lr_err = float(np.max(np.abs(lr - 4.0 * np.eye(3))))
    return {
        "zeta_identity": Check(worst_identity, "<= 1 (fraction of 10 h^2 scale)", identity_ok),
        "char_roundtrip": Check(roundtrip, "<= 1e-12", roundtrip <= 1e-12),
        "diagonalization": Check(diag_err, "<= 1e-12", diag_err <= 1e-12),
        "l_dot_r": Check(lr_err, "<= 1e-14", lr_err <= 1e-14),
    }


def equivalence_checks(profile: SelfSimilarProfile, epsilons=(0.1, 0.2, 0.5), n_cells=256, n_steps=100, config=None):
    out = {}
    for eps in epsilons:
        wave = WaveField(profile, eps, t_max=1.0)
        grid = GridSpec.for_run(eps, 0.05, n_cells)
        gap = verify_unscaled_equivalence(wave, grid, None, n_steps, config)
        out[f"unscaled_eps={eps:g}"] = Check(gap, "<= 1e-10", gap <= 1e-10)
    return out


def verify_suite(profile: SelfSimilarProfile, epsilon=0.1, n_cells=1024, config=None) -> dict:
    """Identity suites at desk scale for one profile."""
    config = config or SolverConfig()
    wave = WaveField(profile, epsilon, t_max=1.0)
    out = {}
    for t in (0.0, 1.0):
        for k, v in approximate_system_orders(wave, t).items():
            out[f"{k}_t={t:g}"] = v
    cells = (n_cells // 4, n_cells // 2, n_cells)
    orders, traj = system_orders(wave, cells=cells, config=config)
    out.update(orders)
    out.update(structural_checks(traj, wave))
    cons = conservation_report(traj).worst
    out["conservation"] = Check(cons, "<= 1e-8", cons <= 1e-8)
    out.update(equivalence_checks(profile, config=config))
    return out


# -- acceptance assessment for sweep results --------------------------------------


def _safe(fn, *args):
    try:
        return fn(*args)[0]
    except (DegenerateFit, ValueError, KeyError):
        return None


def assess_sweep(results: list[NormSeries], window=(10.0, 100.0), t_ref=10.0, canonical_eps=0.1) -> dict:
    """Decay, epsilon-scaling, creep and conservation checks on a canonical sweep.

    Time exponents gate only on the case closest to ``canonical_eps``; the
    other epsilons are fitted and reported as informational entries.
    """
    out = {}
    ordered = sorted(results, key=lambda r: -r.epsilon)
    canonical = min(ordered, key=lambda r: abs(r.epsilon - canonical_eps)).epsilon
    for r in ordered:
        tag = f"eps={r.epsilon:g}"
        gate = r.epsilon == canonical
        a0 = _safe(fit_time_exponent, r, "L2x_pert", window)
        a1 = _safe(fit_time_exponent, r, "L2x_dpert", window)
        out[f"alpha_L2_{tag}"] = Check(a0, "[-1.5, -0.5]", a0 is not None and -1.5 <= a0 <= -0.5, gate)
        out[f"alpha_dL2_{tag}"] = Check(a1, "[-2.0, -1.0]", a1 is not None and -2.0 <= a1 <= -1.0, gate)
        sup = weighted_sup(r, "L2x_pert", 0.9)
        out[f"sup_weighted_{tag}"] = Check(sup, "finite", math.isfinite(sup))
        out[f"conservation_{tag}"] = Check(r.conservation, "<= 1e-8", r.conservation <= 1e-8)
        out[f"positivity_{tag}"] = Check(r.positivity, "True", bool(r.positivity))
    if len({r.epsilon for r in ordered}) >= 3:
        b0 = _safe(fit_eps_exponent, ordered, "L2x_pert", t_ref)
        b1 = _safe(fit_eps_exponent, ordered, "L2x_dpert", t_ref)
        out["beta_L2"] = Check(b0, ">= 2.5", b0 is not None and b0 >= 2.5)
        out["beta_dL2"] = Check(b1, ">= 2.2", b1 is not None and b1 >= 2.2)
        for key in SUP_KEYS:
            vals = [r.value_at(key, t_ref) for r in ordered]
            mono = all(b < a for a, b in zip(vals, vals[1:]))
            out[f"sup_monotone_{key}"] = Check(vals, "strictly decreasing as eps decreases", mono)
        for key in L2_KEYS:
            vals = [r.value_at(key, t_ref) for r in ordered]
            mono = all(b <= a * 1.05 for a, b in zip(vals, vals[1:]))
            out[f"l2_monotone_{key}"] = Check(vals, "non-increasing within 5%", mono)
    smallest = ordered[-1]
    creep = smallest.creep
    if creep is not None:
        out["creep"] = Check(creep, "ratio in [kappa/(4 max T), kappa/min T], signs positive", bool(creep.get("ok")))
    return out
