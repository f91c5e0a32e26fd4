"""Perturbations of a solver snapshot around the corrected profile, and their energies.

All fields live on the solver's cell centres in scaled coordinates (y, tau).
Derivatives of profile quantities are analytic; derivatives of solver data use
second-order central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import IdentityViolation, NoAdmissibleN
from .hydro import FieldState
from .wave import WaveField, profile_terms

SQRT2 = math.sqrt(2.0)
N_MAX = 1_000_000


@dataclass(frozen=True, eq=False)
class PerturbationState:
    tau: float
    epsilon: float
    h: float
    y: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    omega: np.ndarray
    zeta: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    Wbar: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    identity_residual: float
    identity_bound: float


@dataclass(frozen=True, eq=False)
class CharFields:
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    lambda1: np.ndarray
    lambda3: np.ndarray
    T1: np.ndarray
    N: int
    # analytic y-derivatives used by the weight selection
    T_y: np.ndarray
    T1_y: np.ndarray
    lambda1_y: np.ndarray
    lambda3_y: np.ndarray
    v_tilde: np.ndarray
    N_fallback: bool = False

    @property
    def B(self) -> np.ndarray:
        return np.array([self.b1, self.b2, self.b3])


@dataclass(frozen=True)
class EnergyDiagnostics:
    tau: float
    t: float
    E1: float
    K1: float
    E2: float
    K2: float
    N: int
    N_fallback: bool
    norms_y: dict
    norms_x: dict
    apriori: float

    def csv_row(self) -> list[float]:
        x = self.norms_x
        return [
            self.tau, self.t, self.E1, self.K1, self.E2, self.K2,
            x["L2x_pert"], x["L2x_dpert"], x["L2x_zxx"],
            x["Linf_pert"], x["Linf_u_err"], x["Linf_zx"],
        ]


DIAGNOSTIC_COLUMNS = (
    "tau", "t", "E1", "K1", "E2", "K2",
    "L2x_pert", "L2x_dpert", "L2x_zxx", "Linf_pert", "Linf_u_err", "Linf_zx",
)


def _dy(f, h):
    return np.gradient(f, h, edge_order=2)


def _terms(state: FieldState, wave: WaveField):
    eps = state.epsilon
    return profile_terms(wave, eps * state.grid.centers, eps * eps * state.tau)


def compute_perturbation(state: FieldState, wave: WaveField, check: bool = True) -> PerturbationState:
    if not math.isclose(state.epsilon, wave.epsilon, rel_tol=0, abs_tol=0):
        raise ValueError("state and wave disagree on epsilon")
    eps = state.epsilon
    h = state.grid.h
    y = state.grid.centers
    p = _terms(state, wave)
    eu = eps * p.u
    phi = state.v - p.T
    psi = state.U - eu
    zeta = state.theta - p.theta
    omega = state.theta + 0.5 * state.U**2 - p.theta - 0.5 * eu**2
    Phi, Psi, Wbar = (cumulative_trapezoid(f, dx=h, initial=0.0) for f in (phi, psi, omega))
    W = Wbar - eu * Psi
    eu_y = eps * eps * p.ux
    Y = 0.5 * psi**2 - eu_y * Psi

    # zeta = W_y - Y, checked on interior cells
    res = zeta[1:-1] - ((W[2:] - W[:-2]) / (2 * h) - Y[1:-1])
    residual = float(np.max(np.abs(res))) if res.size else 0.0
    d2_omega = np.max(np.abs(np.diff(omega, 2))) / h**2
    d3_flux = np.max(np.abs(np.diff(eu * Psi, 3))) / h**3
    rounding = 64 * np.finfo(float).eps * (np.max(np.abs(W)) / h + np.max(np.abs(zeta)))
    bound = float(10 * h**2 * (d2_omega + d3_flux) + rounding)
    if check and residual > bound:
        raise IdentityViolation(f"zeta identity residual {residual:.3e} exceeds {bound:.3e}")
    return PerturbationState(
        state.tau, eps, h, y, phi, psi, omega, zeta, Phi, Psi, Wbar, W, Y, residual, bound
    )


# -- characteristic decomposition ---------------------------------------------


def left_matrix(lam3):
    """L = (l1, l2, l3)^T / 2 per cell; shape (..., 3, 3)."""
    lam3 = np.asarray(lam3, dtype=float)
    L = np.zeros(lam3.shape + (3, 3))
    L[..., 0, :] = np.stack([-np.ones_like(lam3), -2.0 / lam3, np.ones_like(lam3)], axis=-1)
    L[..., 1, 0] = SQRT2
    L[..., 1, 2] = SQRT2
    L[..., 2, :] = np.stack([-np.ones_like(lam3), 2.0 / lam3, np.ones_like(lam3)], axis=-1)
    return 0.5 * L


def right_matrix(lam3):
    """R = (r1, r2, r3) / 2 per cell, the inverse of ``left_matrix``."""
    lam3 = np.asarray(lam3, dtype=float)
    R = np.zeros(lam3.shape + (3, 3))
    R[..., :, 0] = np.stack([-np.ones_like(lam3), -lam3, np.ones_like(lam3)], axis=-1)
    R[..., 0, 1] = SQRT2
    R[..., 2, 1] = SQRT2
    R[..., :, 2] = np.stack([-np.ones_like(lam3), lam3, np.ones_like(lam3)], axis=-1)
    return 0.5 * R


def convection_matrix(v_tilde):
    """Rows (0, -1, 0), (-1/v, 0, 1/v), (0, 1, 0) per cell."""
    v = np.asarray(v_tilde, dtype=float)
    A = np.zeros(v.shape + (3, 3))
    A[..., 0, 1] = -1.0
    A[..., 1, 0] = -1.0 / v
    A[..., 1, 2] = 1.0 / v
    A[..., 2, 1] = 1.0
    return A


def char_decompose(pert: PerturbationState, wave: WaveField) -> CharFields:
    eps = pert.epsilon
    p = profile_terms(wave, eps * pert.y, eps * eps * pert.tau)
    v = p.T
    lam3 = np.sqrt(2.0 / v)
    theta_plus = wave.profile.params.theta_plus
    T_y = eps * p.Tx
    lam3_y = -0.5 * lam3 * T_y / v
    L = left_matrix(lam3)
    m = np.stack([pert.Phi, pert.Psi, pert.W], axis=-1)
    B = np.einsum("nij,nj->ni", L, m)
    return CharFields(
        b1=B[:, 0], b2=B[:, 1], b3=B[:, 2],
        lambda1=-lam3, lambda3=lam3, T1=v / theta_plus, N=0,
        T_y=T_y, T1_y=T_y / theta_plus, lambda1_y=-lam3_y, lambda3_y=lam3_y, v_tilde=v,
    )


def reconstruct(char: CharFields) -> np.ndarray:
    """(Phi, Psi, W) back from the characteristic fields; shape (n, 3)."""
    R = right_matrix(char.lambda3)
    return np.einsum("nij,nj->ni", R, char.B.T)


@njit(cache=True)
def _weight_ok(N, T1, T1_y, lam1, lam3, lam1_y, lam3_y, T_y, b1s, b3s, start):
    """Index of the first cell violating the weight inequality (scanning from ``start``), or -1.

    The inequality is divided by T1^(-N-1) so that large N never overflows.
    """
    n = T1.shape[0]
    for k in range(n):
        i = (start + k) % n
        if b1s[i] + b3s[i] <= 0.0:
            continue
        t1 = T1[i]
        tn1 = t1 ** (N + 1)
        left = (
            -0.5 * t1 ** (2 * N) * (N * lam1[i] * T1_y[i] + t1 * lam1_y[i]) * b1s[i]
            + 0.5 * (N * lam3[i] * T1_y[i] - t1 * lam3_y[i]) * b3s[i]
        )
        right = 2.0 * abs(T_y[i]) * (b1s[i] + b3s[i]) * tn1
        if left < right:
            return i
    return -1


def weight_violation(char: CharFields, N: int) -> int:
    """First violating cell index for weight exponent N, or -1 if the inequality holds everywhere."""
    return _weight_ok(
        N, char.T1, char.T1_y, char.lambda1, char.lambda3, char.lambda1_y, char.lambda3_y,
        char.T_y, char.b1**2, char.b3**2, 0,
    )


@njit(cache=True)
def _search_N(n_max, T1, T1_y, lam1, lam3, lam1_y, lam3_y, T_y, b1s, b3s):
    start = 0
    for N in range(n_max + 1):
        bad = _weight_ok(N, T1, T1_y, lam1, lam3, lam1_y, lam3_y, T_y, b1s, b3s, start)
        if bad < 0:
            return N
        start = bad
    return -1


def select_weight_N(char: CharFields, wave: WaveField, n_max: int = N_MAX) -> int:
    """Smallest N <= n_max satisfying the characteristic weight inequality on every cell."""
    if wave.delta == 0:
        return 0
    N = _search_N(
        n_max, char.T1, char.T1_y, char.lambda1, char.lambda3, char.lambda1_y, char.lambda3_y,
        char.T_y, char.b1**2, char.b3**2,
    )
    if N < 0:
        raise NoAdmissibleN(f"no weight exponent up to {n_max} satisfies the inequality")
    return int(N)


def with_weight(char: CharFields, wave: WaveField) -> CharFields:
    """Attach the selected N, falling back to N = 0 with a flag when none exists."""
    try:
        return replace(char, N=select_weight_N(char, wave), N_fallback=False)
    except NoAdmissibleN:
        return replace(char, N=0, N_fallback=True)


# -- energies -------------------------------------------------------------------


def dissipation_matrix(v_tilde, kappa):
    """(kappa / 4v) w w^T with w = (1, sqrt 2, 1); per cell, shape (..., 3, 3)."""
    w = np.array([1.0, SQRT2, 1.0])
    v = np.asarray(v_tilde, dtype=float)
    return (kappa / (4.0 * v))[..., None, None] * np.outer(w, w)


@dataclass(frozen=True)
class E1Bounds:
    lower: float
    upper: float
    m_norm2: float
    E1: float

    @property
    def holds(self) -> bool:
        return self.lower * self.m_norm2 <= self.E1 * (1 + 1e-12) and self.E1 <= self.upper * self.m_norm2 * (1 + 1e-12)


def energy_E1_K1(pert: PerturbationState, char: CharFields, wave: WaveField):
    h = pert.h
    v = char.v_tilde
    kappa = wave.kappa
    N = char.N
    wl, wr = char.T1**N, char.T1 ** (-N)
    density = 0.5 * pert.Phi**2 + 0.5 * v * pert.Psi**2 + 0.5 * pert.W**2
    density += 0.5 * wl * char.b1**2 + 0.5 * char.b2**2 + 0.5 * wr * char.b3**2
    E1 = float(trapezoid(density, dx=h))
    W_y = _dy(pert.W, h)
    B_y = np.array([_dy(b, h) for b in (char.b1, char.b2, char.b3)])
    mix = B_y[0] + SQRT2 * B_y[1] + B_y[2]
    K1 = float(trapezoid(kappa / v * W_y**2 + kappa / (4 * v) * mix**2, dx=h))
    if trapezoid(W_y**2, dx=h) > np.max(v) / kappa * K1 * (1 + 1e-12) + 1e-300:
        raise AssertionError("dissipation bound on W_y violated")
    return E1, K1


def e1_bounds(pert: PerturbationState, char: CharFields) -> E1Bounds:
    """Pointwise equivalence constants between E1 density and |(Phi, Psi, W)|^2."""
    v = char.v_tilde
    s = np.linalg.svd(left_matrix(char.lambda3), compute_uv=False)
    w = np.stack([char.T1**char.N, np.ones_like(v), char.T1 ** (-char.N)])
    lower = 0.5 * np.minimum(1.0, v) + 0.5 * w.min(axis=0) * s[:, -1] ** 2
    upper = 0.5 * np.maximum(1.0, v) + 0.5 * w.max(axis=0) * s[:, 0] ** 2
    m2 = float(trapezoid(pert.Phi**2 + pert.Psi**2 + pert.W**2, dx=pert.h))
    density = 0.5 * (pert.Phi**2 + v * pert.Psi**2 + pert.W**2)
    density += 0.5 * (w[0] * char.b1**2 + char.b2**2 + w[2] * char.b3**2)
    return E1Bounds(float(lower.min()), float(upper.max()), m2, float(trapezoid(density, dx=pert.h)))


def entropy_F(s):
    """F(s) = s - 1 - ln s, evaluated without cancellation near s = 1."""
    d = np.asarray(s, dtype=float) - 1.0
    return d - np.log1p(d)


@dataclass(frozen=True)
class E2Result:
    E2: float
    K2: float
    ratio: float


def energy_E2_K2(state: FieldState, wave: WaveField) -> E2Result:
    h = state.grid.h
    p = _terms(state, wave)
    eps = state.epsilon
    psi = state.U - eps * p.u
    phi = state.v - p.T
    zeta = state.theta - p.theta
    E2 = float(trapezoid(p.theta * entropy_F(state.v / p.T) + 0.5 * psi**2 + p.theta * entropy_F(state.theta / p.theta), dx=h))
    zeta_y = _dy(zeta, h)
    K2 = float(trapezoid(wave.kappa / (state.v * state.theta) * zeta_y**2, dx=h))
    quad = float(trapezoid(phi**2 + psi**2 + zeta**2, dx=h))
    return E2Result(E2, K2, E2 / quad if quad > 0 else float("nan"))


@dataclass(frozen=True)
class SandwichReport:
    guarded_cells: int
    worst_lower_slack: float
    worst_upper_slack: float

    @property
    def holds(self) -> bool:
        return self.worst_lower_slack >= 0 and self.worst_upper_slack >= 0


def f_sandwich(state: FieldState, wave: WaveField) -> SandwichReport:
    """Check C1 q^2 <= theta~ F(.) <= C2 q^2 for the v and theta parts on guarded cells.

    v part: C1 = min theta~ / (3 max v~^2), C2 = max theta~ / min v~^2.
    theta part: C1 = 1 / (3 max theta~), C2 = 1 / min theta~.
    """
    p = _terms(state, wave)
    lo, hi = np.inf, np.inf
    count = 0
    parts = (
        (state.v, p.T, p.theta.min() / (3 * p.T.max() ** 2), p.theta.max() / p.T.min() ** 2),
        (state.theta, p.theta, 1.0 / (3 * p.theta.max()), 1.0 / p.theta.min()),
    )
    for q, ref, c1, c2 in parts:
        s = q / ref
        mask = np.abs(s - 1.0) <= 0.5
        count += int(mask.sum())
        if not mask.any():
            continue
        val = p.theta[mask] * entropy_F(s[mask])
        d2 = (q - ref)[mask] ** 2
        # rounding allowance: relative to the value, plus the ulp-level floor of (s - 1)^2
        tol = 1e-12 * val + (8 * np.finfo(float).eps) ** 2 * p.theta[mask]
        lo = min(lo, float(np.min(val - c1 * d2 + tol)))
        hi = min(hi, float(np.min(c2 * d2 - val + tol)))
    return SandwichReport(count, lo, hi)


# -- norms ----------------------------------------------------------------------


def norms_report(pert: PerturbationState, state: FieldState, wave: WaveField) -> EnergyDiagnostics:
    """Energies plus y- and x-coordinate norms of the perturbation."""
    h = pert.h
    eps = pert.epsilon
    char = with_weight(char_decompose(pert, wave), wave)
    E1, K1 = energy_E1_K1(pert, char, wave)
    e2 = energy_E2_K2(state, wave)

    fields = (pert.phi, pert.psi, pert.zeta)
    # central stencils only: one-sided edge formulas amplify the boundary-cell ripple
    dfields = tuple((f[2:] - f[:-2]) / (2 * h) for f in fields)
    zeta_yy = (pert.zeta[2:] - 2 * pert.zeta[1:-1] + pert.zeta[:-2]) / h**2
    l2 = lambda fs: float(sum(trapezoid(f**2, dx=h) for f in fs))
    sup = lambda fs: float(max(np.max(np.abs(f)) for f in fs))
    norms_y = {
        "L2_pert": l2(fields),
        "L2_dpert": l2(dfields),
        "L2_zyy": l2([zeta_yy]),
        "Linf_pert": sup(fields),
        "Linf_dpert": sup(dfields),
        "Linf_v_theta": sup([pert.phi, pert.zeta]),
        "Linf_psi": sup([pert.psi]),
        "Linf_zy": sup([dfields[2]]),
    }
    norms_x = {
        "L2x_pert": eps * norms_y["L2_pert"],
        "L2x_dpert": norms_y["L2_dpert"] / eps,
        "L2x_zxx": norms_y["L2_zyy"] / eps**3,
        "Linf_pert": norms_y["Linf_v_theta"],
        "Linf_u_err": norms_y["Linf_psi"] / eps,
        "Linf_zx": norms_y["Linf_zy"] / eps,
    }
    apriori = apriori_monitor(pert, state, wave)
    return EnergyDiagnostics(
        pert.tau, eps * eps * pert.tau, E1, K1, e2.E2, e2.K2, char.N, char.N_fallback,
        norms_y, norms_x, apriori,
    )


def apriori_monitor(pert: PerturbationState, state: FieldState, wave: WaveField) -> float:
    """Left side of the a priori smallness assumption: sup of squared H^1-type norms.

    Reported as ||(Phi, Psi, W)||_{H^1}^2 + ||(phi, psi, zeta)||_{H^1}^2 + ||zeta_yy||^2
    in y-coordinates; compared by the caller against a configured threshold.
    """
    h = pert.h
    total = 0.0
    for f in (pert.Phi, pert.Psi, pert.W, pert.phi, pert.psi, pert.zeta):
        total += trapezoid(f**2, dx=h) + trapezoid(_dy(f, h) ** 2, dx=h)
    total += trapezoid(_dy(_dy(pert.zeta, h), h) ** 2, dx=h)
    return float(total)


# -- reformulated systems ---------------------------------------------------------


@dataclass(frozen=True)
class SystemResiduals:
    """Max-norm residuals per equation, evaluated at the middle snapshot of a triple."""

    fin1: tuple[float, float, float]
    fin2: tuple[float, float, float]
    fin3: tuple[float, float, float]


def _tau_derivative(f0, f1, f2, t0, t1, t2):
    """Three-point derivative at the middle node; exact for quadratics on uneven spacing."""
    a, b = t1 - t0, t2 - t1
    return (-b / (a * (a + b))) * f0 + ((b - a) / (a * b)) * f1 + (a / (b * (a + b))) * f2


def system_residuals(snaps, wave: WaveField, margin: int = 3) -> SystemResiduals:
    """Residuals of the integrated, W-form and differentiated perturbation systems.

    ``snaps`` is three consecutive snapshots; interior cells only (``margin`` per side).
    """
    s0, s1, s2 = snaps
    eps = s1.epsilon
    h = s1.grid.h
    kappa = wave.kappa
    taus = (s0.tau, s1.tau, s2.tau)
    perts = [compute_perturbation(s, wave, check=False) for s in snaps]
    q0, q1, q2 = perts
    dt = lambda name: _tau_derivative(getattr(q0, name), getattr(q1, name), getattr(q2, name), *taus)
    y = s1.grid.centers
    p = profile_terms(wave, eps * y, eps * eps * s1.tau)
    v, U, theta = s1.v, s1.U, s1.theta
    P = theta / v
    Pt = p.P
    u = U / eps
    # profile quantities in scaled form: d/dy = eps d/dx, d/dtau = eps^2 d/dt
    ut_y = eps * p.ux
    ut_tau = eps**2 * p.ut
    theta_t_y = eps * (p.Tx - eps**2 * p.u * p.ux)
    Pt_y = eps * p.Px
    R1, R2 = p.R1, p.R2
    R1_y, R2_y = eps * p.R1x, eps * p.R2x

    Phi_t, Psi_t, Wbar_t, W_t = dt("Phi"), dt("Psi"), dt("Wbar"), dt("W")
    phi_t, psi_t, zeta_t = dt("phi"), dt("psi"), dt("zeta")
    q = q1
    d = lambda f: _dy(f, h)
    theta_y = d(theta)
    heat = kappa * (theta_y / v - theta_t_y / p.T)

    fin1 = (
        Phi_t - d(q.Psi),
        Psi_t + P - Pt + R1,
        Wbar_t + eps * (P * u - Pt * p.u) - heat + eps * R2,
    )

    Phi_y, W_y = d(q.Phi), d(q.W)
    J1 = (Pt - 1.0) / p.T * Phi_y - (P - Pt + Pt / p.T * (v - p.T) - (theta - p.theta) / p.T)
    J2 = (1.0 - P) * d(q.Psi)
    Q1 = J1 + q.Y / p.T - R1
    Q2 = (
        kappa * (1.0 / v - 1.0 / p.T) * theta_y + J2 - eps * ut_tau * q.Psi
        - kappa / p.T * d(q.Y) - eps * R2 + eps * p.u * R1
    )
    fin2 = (
        Phi_t - d(q.Psi),
        Psi_t - Phi_y / p.T + W_y / p.T - Q1,
        W_t + d(q.Psi) - kappa / p.T * d(W_y) - Q2,
    )

    Q3 = eps * Pt_y * p.u + eps**2 * p.u * ut_tau - eps * R2_y
    fin3 = (
        phi_t - d(q.psi),
        psi_t + d(P - Pt) + R1_y,
        zeta_t + eps * P * d(u) - eps * Pt * ut_y - d(heat) - Q3,
    )
    core = slice(margin, -margin)
    norm = lambda rs: tuple(float(np.max(np.abs(r[core]))) for r in rs)
    return SystemResiduals(norm(fin1), norm(fin2), norm(fin3))


def verify_perturbation_systems(trajectory, wave: WaveField) -> SystemResiduals:
    """Worst residuals over all consecutive snapshot triples of a trajectory."""
    if len(trajectory) < 3:
        raise ValueError("need at least three snapshots")
    worst = None
    for k in range(1, len(trajectory) - 1):
        r = system_residuals(trajectory[k - 1 : k + 2], wave)
        if worst is None:
            worst = r
        else:
            worst = SystemResiduals(
                *(tuple(max(a, b) for a, b in zip(getattr(worst, f), getattr(r, f))) for f in ("fin1", "fin2", "fin3"))
            )
    return worst
