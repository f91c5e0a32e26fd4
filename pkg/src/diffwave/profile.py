"""Self-similar temperature profile of the nonlinear diffusion equation.

The profile ``T(eta)``, ``eta = x / sqrt(1 + t)``, solves

    (eta / kappa) T' + (T' / T)' = 0,    T(-inf) = theta_minus,  T(+inf) = theta_plus,

which is ``T_t = (kappa T_x / (2 T))_x`` written in the similarity variable.
Writing ``s = ln(|T'| / T)`` turns it into the first-order system

    T' = sign * T * exp(s),     s' = -eta * T / kappa,

whose slope is exact in relative terms even deep in the Gaussian tails.
The system is invariant under ``T(eta) -> c T(sqrt(c) eta)``, so a single
scale-free shooting parameter fixes the ratio of the end states and a final
rescaling fixes their level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BPoly

from .errors import InsufficientTail, NoConvergence, NonMonotone

_RTOL = 1e-13
_ATOL = 1e-15
_TABLE_STEP = 0.01


@dataclass(frozen=True)
class ProfileParams:
    theta_minus: float = 0.9
    theta_plus: float = 1.1
    kappa: float = 1.0
    eta_max: float = 8.0
    n_nodes: int = 2048
    tol: float = 1e-10

    def __post_init__(self):
        for name in ("theta_minus", "theta_plus", "kappa", "eta_max", "tol"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 64:
            raise ValueError(f"n_nodes must be an integer >= 64, got {self.n_nodes!r}")

    @property
    def delta(self) -> float:
        """Wave strength |theta_plus - theta_minus|."""
        return abs(self.theta_plus - self.theta_minus)

    @property
    def sign(self) -> int:
        return int(np.sign(self.theta_plus - self.theta_minus))

    def as_dict(self) -> dict:
        return {
            "theta_minus": self.theta_minus,
            "theta_plus": self.theta_plus,
            "kappa": self.kappa,
            "eta_max": self.eta_max,
            "n_nodes": self.n_nodes,
            "tol": self.tol,
        }


@dataclass(frozen=True, eq=False)
class SelfSimilarProfile:
    params: ProfileParams
    eta_nodes: np.ndarray
    T_values: np.ndarray
    Tp_values: np.ndarray
    shoot_param: float
    achieved_mismatch: float
    _T_spline: BPoly | None = field(default=None, repr=False)
    _Tp_spline: BPoly | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("eta_nodes", "T_values", "Tp_values"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.is_constant:
            # degree-7 Hermite: the verification operators take second differences
            # of interpolated values, so the node-scale error must sit below 1e-12
            k = self.params.kappa
            eta, T, Tp = self.eta_nodes, self.T_values, self.Tp_values
            Tpp = second_derivative(eta, T, Tp, k)
            Tppp = third_derivative(eta, T, Tp, Tpp, k)
            T4 = fourth_derivative(eta, T, Tp, Tpp, Tppp, k)
            object.__setattr__(self, "_T_spline", BPoly.from_derivatives(eta, np.column_stack([T, Tp, Tpp, Tppp])))
            object.__setattr__(self, "_Tp_spline", BPoly.from_derivatives(eta, np.column_stack([Tp, Tpp, Tppp, T4])))

    @property
    def is_constant(self) -> bool:
        return self.params.theta_minus == self.params.theta_plus

    @property
    def delta(self) -> float:
        return self.params.delta

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "params": self.params.as_dict(),
            "eta_nodes": [_repr17(x) for x in self.eta_nodes],
            "T_values": [_repr17(x) for x in self.T_values],
            "Tp_values": [_repr17(x) for x in self.Tp_values],
            "shoot_param": _repr17(self.shoot_param),
            "achieved_mismatch": _repr17(self.achieved_mismatch),
        }
        # numbers are written as raw decimal literals (17 significant digits)
        return json.dumps(doc, indent=1).replace('"@', "").replace('@"', "")

    @classmethod
    def from_json(cls, text: str) -> "SelfSimilarProfile":
        doc = json.loads(text)
        params = ProfileParams(**doc["params"])
        return cls(
            params=params,
            eta_nodes=np.asarray(doc["eta_nodes"], dtype=float),
            T_values=np.asarray(doc["T_values"], dtype=float),
            Tp_values=np.asarray(doc["Tp_values"], dtype=float),
            shoot_param=float(doc["shoot_param"]),
            achieved_mismatch=float(doc["achieved_mismatch"]),
        )


def _repr17(x) -> str:
    return "@" + format(float(x), ".17g") + "@"


def second_derivative(eta, T, Tp, kappa):
    """T'' from the ODE identity T'' = T'^2 / T - eta T T' / kappa."""
    eta = np.asarray(eta, dtype=float)
    return Tp * Tp / T - eta * T * Tp / kappa


def third_derivative(eta, T, Tp, Tpp, kappa):
    """T''' from differentiating the ODE identity once."""
    eta = np.asarray(eta, dtype=float)
    return 2 * Tp * Tpp / T - Tp**3 / T**2 - (T * Tp + eta * Tp * Tp + eta * T * Tpp) / kappa


def fourth_derivative(eta, T, Tp, Tpp, Tppp, kappa):
    eta = np.asarray(eta, dtype=float)
    return (
        2 * (Tpp * Tpp + Tp * Tppp) / T
        - 5 * Tp * Tp * Tpp / T**2
        + 2 * Tp**4 / T**3
        - (2 * Tp * Tp + 2 * T * Tpp + 3 * eta * Tp * Tpp + eta * T * Tppp) / kappa
    )


def _rhs(sign, kappa):
    def f(eta, y):
        T, s = y
        return (sign * T * math.exp(s), -eta * T / kappa)

    return f


def _integrate(T0, s0, sign, kappa, eta_end, dense=False):
    # the tabulation pass takes short steps so node values carry no step-to-step noise
    return solve_ivp(
        _rhs(sign, kappa),
        (0.0, eta_end),
        (T0, s0),
        method="DOP853",
        rtol=_RTOL,
        atol=_ATOL,
        dense_output=dense,
        max_step=_TABLE_STEP if dense else np.inf,
    )


def _unit_limits(q, kappa, eta_end):
    """End values of the T(0) = 1 solution with log slope ratio q, increasing case."""
    right = _integrate(1.0, q, 1, kappa, eta_end)
    left = _integrate(1.0, q, 1, kappa, -eta_end)
    return left.y[0, -1], right.y[0, -1]


def solve_profile(params: ProfileParams, max_iter: int = 200) -> SelfSimilarProfile:
    """Shoot the self-similar two-point problem and tabulate T, T' on a uniform grid.

    The free parameter is ``q = ln(T'(0)/T(0)) - ln(T(0))/2``, which is invariant
    under the scaling symmetry. For each ``q`` the ``T(0) = 1`` solution is
    integrated outward in both directions; the ratio of its end states is
    increasing in ``q`` and is bisected onto ``theta_hi / theta_lo``. Rescaling
    by ``c = theta_lo / T(-inf)`` then enforces the left limit, and
    ``T(0) = c`` is reported as the shooting value.
    """
    p = params
    eta = np.linspace(-p.eta_max, p.eta_max, int(p.n_nodes))
    if p.theta_minus == p.theta_plus:
        return SelfSimilarProfile(
            params=p,
            eta_nodes=eta,
            T_values=np.full_like(eta, p.theta_plus),
            Tp_values=np.zeros_like(eta),
            shoot_param=p.theta_plus,
            achieved_mismatch=0.0,
        )

    lo_state, hi_state = sorted((p.theta_minus, p.theta_plus))
    target = math.log(hi_state / lo_state)
    # the unit solution is rescaled by c ~ theta, so its eta range must cover eta_max * sqrt(c)
    eta_unit = p.eta_max * math.sqrt(max(hi_state, 1.0)) + 4.0

    def log_ratio(q):
        lo, hi = _unit_limits(q, p.kappa, eta_unit)
        return math.log(hi / lo), lo

    q_lo, q_hi = -1.0, 0.0
    for _ in range(200):
        if log_ratio(q_lo)[0] < target:
            break
        q_lo -= 2.0
    else:
        raise NoConvergence("could not bracket the shooting parameter from below")
    for _ in range(200):
        if log_ratio(q_hi)[0] > target:
            break
        q_lo = q_hi
        q_hi += 1.0
    else:
        raise NoConvergence("could not bracket the shooting parameter from above")

    for _ in range(max_iter):
        q_mid = 0.5 * (q_lo + q_hi)
        if q_mid in (q_lo, q_hi):
            break
        if log_ratio(q_mid)[0] < target:
            q_lo = q_mid
        else:
            q_hi = q_mid
        if q_hi - q_lo < 1e-15:
            break
    q = 0.5 * (q_lo + q_hi)
    _, lo_unit = log_ratio(q)
    c = lo_state / lo_unit
    s0 = q + 0.5 * math.log(c)

    eta_right = eta[eta >= 0.0]
    eta_left = eta[eta < 0.0][::-1]
    right = _integrate(c, s0, 1, p.kappa, p.eta_max, dense=True)
    left = _integrate(c, s0, 1, p.kappa, -p.eta_max, dense=True)
    if not (right.success and left.success):
        raise NoConvergence(f"profile integration failed: {right.message or left.message}")
    T_r, s_r = right.sol(eta_right)
    T_l, s_l = left.sol(eta_left)
    T_inc = np.concatenate([T_l[::-1], T_r])
    Tp_inc = T_inc * np.exp(np.concatenate([s_l[::-1], s_r]))

    if p.sign < 0:
        # mirror symmetry: increasing profile with end states swapped, reflected in eta
        T_vals, Tp_vals = T_inc[::-1].copy(), -Tp_inc[::-1]
    else:
        T_vals, Tp_vals = T_inc, Tp_inc

    mismatch = max(abs(T_vals[0] - p.theta_minus), abs(T_vals[-1] - p.theta_plus))
    if not mismatch <= p.tol:
        raise NoConvergence(
            f"far-field mismatch {mismatch:.3e} exceeds tol {p.tol:.1e}; eta_max may be too small"
        )
    if np.any(p.sign * Tp_vals < 0.0):
        raise NonMonotone("profile slope changed sign")
    return SelfSimilarProfile(
        params=p,
        eta_nodes=eta,
        T_values=T_vals,
        Tp_values=Tp_vals,
        shoot_param=float(c),
        achieved_mismatch=float(mismatch),
    )


def profile_eval(profile: SelfSimilarProfile, eta):
    """Return (T, T', T'') at ``eta``; outside the nodes T keeps its end values."""
    p = profile.params
    eta = np.asarray(eta, dtype=float)
    if profile.is_constant:
        return (np.full_like(eta, p.theta_plus), np.zeros_like(eta), np.zeros_like(eta))
    inside = np.abs(eta) <= p.eta_max
    e = np.clip(eta, -p.eta_max, p.eta_max)
    T = profile._T_spline(e)
    Tp = profile._Tp_spline(e)
    Tpp = second_derivative(e, T, Tp, p.kappa)
    T = np.where(inside, T, np.where(eta < 0, profile.T_values[0], profile.T_values[-1]))
    Tp = np.where(inside, Tp, 0.0)
    Tpp = np.where(inside, Tpp, 0.0)
    return T, Tp, Tpp


def spacetime_fields(profile: SelfSimilarProfile, x, t):
    """Return (T, T_x, T_t, T_xx) of T(x / sqrt(1 + t))."""
    x = np.asarray(x, dtype=float)
    s = 1.0 + np.asarray(t, dtype=float)
    root = np.sqrt(s)
    T, Tp, Tpp = profile_eval(profile, x / root)
    return T, Tp / root, -0.5 * x * Tp / (s * root), Tpp / s


@dataclass(frozen=True)
class TailReport:
    slope_right: float
    slope_left: float
    theory_right: float
    theory_left: float
    residual_right: float
    residual_left: float

    @property
    def rel_err_right(self) -> float:
        return abs(self.slope_right / self.theory_right - 1.0)

    @property
    def rel_err_left(self) -> float:
        return abs(self.slope_left / self.theory_left - 1.0)


def _lsq_slope(x, y):
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return float(coef[0]), resid


def verify_tail(profile: SelfSimilarProfile, min_nodes: int = 16) -> TailReport:
    """Fit log|T'| against eta^2 on the outer half of each side."""
    p = profile.params
    if profile.is_constant:
        raise InsufficientTail("constant profile has no tail to fit")
    edge = np.abs(profile.Tp_values[[0, -1]]).max()
    if edge >= 1e-3 * p.delta:
        raise InsufficientTail("eta_max too small: slope has not decayed at the cutoff")
    eta, Tp = profile.eta_nodes, np.abs(profile.Tp_values)
    fits = []
    for mask in (eta >= p.eta_max / 2, eta <= -p.eta_max / 2):
        mask = mask & (Tp > 0)
        if mask.sum() < min_nodes:
            raise InsufficientTail(f"only {int(mask.sum())} nodes in fit window")
        fits.append(_lsq_slope(eta[mask] ** 2, np.log(Tp[mask])))
    (sr, rr), (sl, rl) = fits
    return TailReport(
        slope_right=sr,
        slope_left=sl,
        theory_right=-p.theta_plus / (2 * p.kappa),
        theory_left=-p.theta_minus / (2 * p.kappa),
        residual_right=rr,
        residual_left=rl,
    )


@dataclass(frozen=True)
class SlopeBoundReport:
    window: tuple
    r_min: float
    r_max: float


def verify_slope_bounds(profile: SelfSimilarProfile, eta0_window=(-1.0, 1.0), n_samples: int = 401):
    """Range of sign * T'(eta) / delta over a compact window."""
    p = profile.params
    if profile.is_constant:
        raise ValueError("slope bounds need theta_plus != theta_minus")
    a, b = eta0_window
    eta = np.linspace(a, b, n_samples if b > a else 1)
    _, Tp, _ = profile_eval(profile, eta)
    ratio = p.sign * Tp / p.delta
    r_min, r_max = float(ratio.min()), float(ratio.max())
    if not (np.isfinite(r_min) and np.isfinite(r_max) and r_min > 0):
        raise NonMonotone(f"slope ratio bounds ({r_min}, {r_max}) not finite positive")
    return SlopeBoundReport(window=(float(a), float(b)), r_min=r_min, r_max=r_max)
