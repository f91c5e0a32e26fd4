"""Finite-volume solver for the heat-conductive gas in scaled coordinates.

With y = x/eps, tau = t/eps^2 and U = eps u the gas system loses every
explicit eps:

    v_tau - U_y = 0,   U_tau + P_y = 0,   (theta + U^2/2)_tau + (P U)_y = kappa (theta_y / v)_y,

with P = theta / v. All eps-dependence enters through the initial and boundary
data taken from the corrected profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .errors import GridTooNarrow, PositivityLoss
from .profile import profile_eval
from .wave import WaveField, eval_tilde

CONDUCTION_SCHEMES = ("implicit-trapezoidal", "explicit-substep")
BOUNDARY_CONDITIONS = ("profile-dirichlet", "constant-farfield")
LIMITERS = ("none", "minmod")


@dataclass(frozen=True)
class GridSpec:
    y_min: float
    y_max: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 128:
            raise ValueError(f"n_cells must be >= 128, got {self.n_cells}")
        if not math.isclose(self.y_max, -self.y_min, rel_tol=1e-14) or self.y_max <= 0:
            raise ValueError("grid must be symmetric with y_max = -y_min > 0")

    @classmethod
    def symmetric(cls, y_max: float, n_cells: int) -> "GridSpec":
        return cls(-float(y_max), float(y_max), int(n_cells))

    @classmethod
    def for_run(cls, epsilon: float, t_end: float, n_cells: int) -> "GridSpec":
        """Domain sizing policy: y_max = 6 sqrt(1 + t_end) / eps + 10."""
        return cls.symmetric(6.0 * math.sqrt(1.0 + t_end) / epsilon + 10.0, n_cells)

    @property
    def h(self) -> float:
        return (self.y_max - self.y_min) / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.n_cells) + 0.5) * self.h

    def ghost_centers(self) -> tuple[np.ndarray, np.ndarray]:
        h = self.h
        left = np.array([self.y_min - 1.5 * h, self.y_min - 0.5 * h])
        right = np.array([self.y_max + 0.5 * h, self.y_max + 1.5 * h])
        return left, right


@dataclass(frozen=True)
class SolverConfig:
    cfl: float = 0.5
    conduction: str = "implicit-trapezoidal"
    bc: str = "profile-dirichlet"
    limiter: str = "none"

    def __post_init__(self):
        if not (0.0 < self.cfl <= 0.9):
            raise ValueError(f"cfl must lie in (0, 0.9], got {self.cfl}")
        if self.conduction not in CONDUCTION_SCHEMES:
            raise ValueError(f"unknown conduction scheme {self.conduction!r}")
        if self.bc not in BOUNDARY_CONDITIONS:
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.limiter not in LIMITERS:
            raise ValueError(f"unknown limiter {self.limiter!r}")

    @property
    def limiter_code(self) -> int:
        return K.LIMITER_MINMOD if self.limiter == "minmod" else K.LIMITER_NONE

    @property
    def conduction_code(self) -> int:
        return K.CONDUCTION_EXPLICIT if self.conduction == "explicit-substep" else K.CONDUCTION_IMPLICIT


@dataclass(frozen=True, eq=False)
class FieldState:
    """Cell values of (v, U, theta) at scaled time tau.

    ``inflow`` accumulates the time-integrated net flux entering the domain
    through both boundaries for (v, U, theta + U^2/2).
    """

    tau: float
    v: np.ndarray
    U: np.ndarray
    theta: np.ndarray
    epsilon: float
    grid: GridSpec
    inflow: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def t(self) -> float:
        return self.epsilon**2 * self.tau

    @property
    def P(self) -> np.ndarray:
        return self.theta / self.v

    @property
    def energy(self) -> np.ndarray:
        return self.theta + 0.5 * self.U**2

    def totals(self) -> np.ndarray:
        """Cell sums times h of (v, U, theta + U^2/2)."""
        h = self.grid.h
        return np.array([self.v.sum() * h, self.U.sum() * h, self.energy.sum() * h])

    def to_csv(self, directory) -> Path:
        """Write ``state_tau=<tau>.csv`` with columns y, v, U, theta."""
        path = Path(directory) / f"state_tau={self.tau:.17g}.csv"
        data = np.column_stack([self.grid.centers, self.v, self.U, self.theta])
        np.savetxt(path, data, delimiter=",", header="y,v,U,theta", comments="", fmt="%.17g")
        return path


class _Boundary:
    """Arrays handed to the compiled stepper: wave parameters, spline data and ghost layout."""

    def __init__(self, wave: WaveField, grid: GridSpec, bc: str):
        prof = wave.profile
        p = prof.params
        left, right = grid.ghost_centers()
        self.ghost_y = np.concatenate([left, right])
        self.code = K.BC_FROZEN if bc == "constant-farfield" else K.BC_PROFILE
        # beyond the table the profile continues with its end values (continuous extension)
        ends = (prof.T_values[0], prof.T_values[-1])
        self.wave = np.array([wave.epsilon, p.kappa, *ends, p.eta_max, float(prof.is_constant)])
        if prof.is_constant:
            self.Tc = np.zeros((6, 1))
            self.Tpc = np.zeros((6, 1))
            self.xn = np.array([-1.0, 1.0])
        else:
            self.Tc = np.ascontiguousarray(prof._T_spline.c)
            self.Tpc = np.ascontiguousarray(prof._Tp_spline.c)
            self.xn = np.ascontiguousarray(prof._T_spline.x)
        tm, tp = p.theta_minus, p.theta_plus
        self.frozen = np.array([[tm, tm, tp, tp], [0.0] * 4, [tm, tm, tp, tp]])

    def values(self, tau: float) -> np.ndarray:
        """Conserved ghost values (3, 4) at scaled time tau."""
        if self.code == K.BC_FROZEN:
            return self.frozen.copy()
        out = np.empty((3, 4))
        K.ghost_values(self.wave, self.Tc, self.Tpc, self.xn, self.ghost_y, float(tau), out)
        return out


def init_state(wave: WaveField, grid: GridSpec) -> FieldState:
    """Sample the corrected profile at t = 0 on the cell centres (y = x / eps)."""
    eps = wave.epsilon
    if wave.delta > 0:
        edge = eps * np.array([grid.y_min, grid.y_max])
        _, Tp, _ = profile_eval(wave.profile, edge)
        if np.max(np.abs(Tp)) >= 1e-10 * wave.delta:
            raise GridTooNarrow(f"|T'| at the domain edge is {np.max(np.abs(Tp)):.2e}")
    v, u, theta, *_ = eval_tilde(wave, eps * grid.centers, 0.0)
    return FieldState(0.0, v, eps * u, theta, eps, grid)


def stable_dtau(state: FieldState, config: SolverConfig, kappa: float | None = None) -> float:
    """CFL step from the largest local sound speed sqrt(2 theta)/v."""
    return _dtau(state.v, state.theta, state.grid.h, config, kappa)


def _dtau(v, theta, h, config, kappa):
    dtau = config.cfl * h / np.max(np.sqrt(2.0 * theta) / v)
    if config.conduction == "explicit-substep":
        if kappa is None:
            raise ValueError("explicit conduction needs kappa for the parabolic limit")
        dtau = min(dtau, config.cfl * h * h * np.min(v) / (2.0 * kappa))
    return float(dtau)


def _advance(q, tau, target, fixed_dt, grid, config, wave, boundary, inflow):
    tau_new, status, steps = K.advance(
        q, float(tau), float(target), float(fixed_dt), grid.h, config.cfl, wave.kappa,
        config.limiter_code, config.conduction_code, boundary.code,
        boundary.wave, boundary.Tc, boundary.Tpc, boundary.xn, boundary.ghost_y, boundary.frozen,
        inflow,
    )
    if status == K.STATUS_POSITIVITY:
        raise PositivityLoss(f"non-positive v or theta at tau={tau_new:.6g}", tau=tau_new)
    return tau_new, steps


def _pack(state: FieldState) -> np.ndarray:
    return np.array([state.v, state.U, state.energy])


def _unpack(q, tau, template: FieldState, inflow) -> FieldState:
    return FieldState(
        tau=float(tau),
        v=q[0].copy(),
        U=q[1].copy(),
        theta=q[2] - 0.5 * q[1] ** 2,
        epsilon=template.epsilon,
        grid=template.grid,
        inflow=inflow.copy(),
    )


def step(state: FieldState, dtau: float, config: SolverConfig, wave: WaveField) -> FieldState:
    """One Strang-split step; returns a new state."""
    boundary = _Boundary(wave, state.grid, config.bc)
    q = _pack(state)
    inflow = state.inflow.copy()
    tau, _ = _advance(q, state.tau, state.tau + dtau, dtau, state.grid, config, wave, boundary, inflow)
    return _unpack(q, tau, state, inflow)


def run(state: FieldState, tau_end: float, config: SolverConfig, wave: WaveField, sample_times=None):
    """Advance to ``tau_end`` and return snapshots at ``sample_times`` (scaled times).

    Steps are truncated to land exactly on every sample time. Sample times at or
    before the starting time yield the starting state.
    """
    if tau_end < state.tau:
        raise ValueError("tau_end precedes the state time")
    samples = sorted(set(float(s) for s in (sample_times if sample_times is not None else [tau_end])))
    if samples and samples[-1] > tau_end:
        raise ValueError("sample times beyond tau_end")
    snapshots = [state for s in samples if s <= state.tau]
    pending = [s for s in samples if s > state.tau]
    if not pending:
        return snapshots or [state]
    boundary = _Boundary(wave, state.grid, config.bc)
    q = _pack(state)
    inflow = state.inflow.copy()
    tau = state.tau
    for target in pending:
        tau, _ = _advance(q, tau, target, 0.0, state.grid, config, wave, boundary, inflow)
        snapshots.append(_unpack(q, tau, state, inflow))
    return snapshots


# -- independent checks -------------------------------------------------------


def _unscaled_rhs(q, ghosts, eps, dx, minmod):
    """Rusanov divergence of the physical system in (x, t); plain numpy."""
    qe = np.concatenate([ghosts[:, :2], q, ghosts[:, 2:]], axis=1)
    dl = qe[:, 1:-1] - qe[:, :-2]
    dr = qe[:, 2:] - qe[:, 1:-1]
    if minmod:
        s = np.where(dl * dr > 0, np.where(np.abs(dl) < np.abs(dr), dl, dr), 0.0)
        half = 0.5 * s
    else:
        half = 0.25 * (dl + dr)
    half[:, 0] = half[:, -1] = 0.0
    half[:, 1] = 0.5 * (q[:, 1] - q[:, 0])
    half[:, -2] = 0.5 * (q[:, -1] - q[:, -2])
    qm = qe[:, 1:-1]
    left = (qm + half)[:, :-1]
    right = (qm - half)[:, 1:]

    def flux(s):
        v, u, E = s
        theta = E - 0.5 * eps**2 * u**2
        P = theta / v
        return np.array([-u, P / eps**2, P * u]), np.sqrt(2 * np.abs(theta)) / (eps * np.abs(v))

    fl, al = flux(left)
    fr, ar = flux(right)
    a = np.maximum(al, ar)
    F = 0.5 * (fl + fr) - 0.5 * a * (right - left)
    return -(F[:, 1:] - F[:, :-1]) / dx


def _unscaled_conduct(q, g0, g1, eps, dx, dt, kappa):
    """Crank-Nicolson for theta_t = kappa (theta_x / v)_x via a banded solve."""
    from scipy.linalg import solve_banded

    v, u, E = q
    theta = E - 0.5 * eps**2 * u**2
    tg = lambda g, j: g[2, j] - 0.5 * eps**2 * g[1, j] ** 2
    iv = 1.0 / np.concatenate([[g0[0, 1]], v, [g0[0, 2]]])
    c = 0.5 * kappa * (iv[:-1] + iv[1:])
    r = 0.5 * dt / dx**2
    ext = np.concatenate([[tg(g0, 1)], theta, [tg(g0, 2)]])
    rhs = theta + r * (c[1:] * (ext[2:] - ext[1:-1]) - c[:-1] * (ext[1:-1] - ext[:-2]))
    rhs[0] += r * c[0] * tg(g1, 1)
    rhs[-1] += r * c[-1] * tg(g1, 2)
    ab = np.zeros((3, v.size))
    ab[0, 1:] = -r * c[1:-1]
    ab[1] = 1 + r * (c[:-1] + c[1:])
    ab[2, :-1] = -r * c[1:-1]
    new = solve_banded((1, 1), ab, rhs)
    q[2] += new - theta


def _unscaled_ghosts(wave, x_ghost, t):
    from .wave import corrected_primitives

    v, u, theta = corrected_primitives(wave, x_ghost, t)
    return np.array([v, u, theta + 0.5 * wave.epsilon**2 * u**2])


def verify_unscaled_equivalence(
    wave: WaveField, grid: GridSpec, t_end: float | None = None, n_steps: int = 100, config: SolverConfig | None = None
) -> float:
    """Max-norm gap in (v, eps u, theta) between the scaled solver and a direct unscaled integration.

    The unscaled integrator advances (v, u, theta + eps^2 u^2 / 2) in physical
    (x, t) with its own plain-array implementation of the same scheme. Both start
    from the corrected profile and take ``n_steps`` equal steps to ``t_end``
    (default: the stable scaled step times ``n_steps``).
    """
    config = config or SolverConfig()
    if config.conduction != "implicit-trapezoidal" or config.bc != "profile-dirichlet":
        raise ValueError("the unscaled reference implements the default conduction and boundary only")
    eps = wave.epsilon
    state = init_state(wave, grid)
    dtau = stable_dtau(state, config) if t_end is None else t_end / eps**2 / n_steps
    scaled = state
    for _ in range(n_steps):
        scaled = step(scaled, dtau, config, wave)

    dx, dt = eps * grid.h, eps**2 * dtau
    left, right = grid.ghost_centers()
    xg = eps * np.concatenate([left, right])
    minmod = config.limiter == "minmod"
    q = np.array([state.v, state.U / eps, state.energy])
    t = 0.0
    for _ in range(n_steps):
        t1 = t + dt
        mid = t + 0.5 * dt
        g0, gm, g1 = (_unscaled_ghosts(wave, xg, s) for s in (t, mid, t1))
        _unscaled_conduct(q, g0, gm, eps, dx, mid - t, wave.kappa)
        k1 = _unscaled_rhs(q, g0, eps, dx, minmod)
        q1 = q + dt * k1
        k2 = _unscaled_rhs(q1, g1, eps, dx, minmod)
        q = 0.5 * q + 0.5 * (q1 + dt * k2)
        _unscaled_conduct(q, gm, g1, eps, dx, t1 - mid, wave.kappa)
        t = t1
    theta = q[2] - 0.5 * eps**2 * q[1] ** 2
    gaps = (scaled.v - q[0], scaled.U - eps * q[1], scaled.theta - theta)
    return float(max(np.max(np.abs(g)) for g in gaps))


@dataclass(frozen=True)
class ConservationLedger:
    """Per-interval imbalance of (sum v h, sum U h, sum E h) after removing boundary inflow.

    ``imbalance`` has one row per consecutive snapshot pair: |d total - d inflow| / d tau,
    relative to max(|total|, 1).
    """

    taus: np.ndarray
    imbalance: np.ndarray
    net_inflow: np.ndarray

    @property
    def worst(self) -> float:
        return float(np.max(self.imbalance)) if self.imbalance.size else 0.0


def conservation_report(trajectory, config: SolverConfig | None = None) -> ConservationLedger:
    if not trajectory:
        raise ValueError("empty trajectory")
    taus = np.array([s.tau for s in trajectory])
    totals = np.array([s.totals() for s in trajectory])
    inflow = np.array([s.inflow for s in trajectory])
    dtau = np.diff(taus)
    ok = dtau > 0
    d = np.abs(np.diff(totals, axis=0) - np.diff(inflow, axis=0))[ok]
    scale = np.maximum(np.abs(totals[1:][ok]), 1.0)
    imbalance = d / dtau[ok, None] / scale
    return ConservationLedger(taus, imbalance, np.diff(inflow, axis=0))
