"""Diffusion wave, its low-Mach corrected profile and the residual potentials.

Physical coordinates (x, t). The diffusion wave is (v, u, theta) = (T, kappa T_x / (2T), T);
the corrected profile lowers the temperature by the kinetic energy (eps u)^2 / 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveTemperature
from .profile import SelfSimilarProfile, profile_eval, spacetime_fields, third_derivative


@dataclass(frozen=True, eq=False)
class WaveField:
    profile: SelfSimilarProfile
    epsilon: float
    t_max: float = 100.0

    def __post_init__(self):
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        root = np.sqrt(1.0 + self.t_max)
        x = np.linspace(-10 * root, 10 * root, 4096)
        for t in (0.0, self.t_max):
            v, _, theta, *_ = eval_tilde(self, x, t)
            if np.any(v <= 0) or np.any(theta <= 0):
                raise NonPositiveTemperature(
                    f"corrected profile not positive at t={t} (epsilon={self.epsilon})"
                )

    @property
    def kappa(self) -> float:
        return self.profile.params.kappa

    @property
    def delta(self) -> float:
        return self.profile.delta

    def scaled(self, y, tau):
        """Map scaled coordinates (y, tau) to physical (x, t)."""
        return self.epsilon * np.asarray(y, dtype=float), self.epsilon**2 * np.asarray(tau, dtype=float)


@dataclass(frozen=True)
class ResidualSample:
    R1: np.ndarray
    R2: np.ndarray


@dataclass(frozen=True)
class ProfileTerms:
    """Corrected-profile values and analytic derivatives at (x, t), physical coordinates."""

    T: np.ndarray
    Tx: np.ndarray
    Tt: np.ndarray
    Txx: np.ndarray
    Txt: np.ndarray
    Txxx: np.ndarray
    u: np.ndarray
    ux: np.ndarray
    ut: np.ndarray
    uxx: np.ndarray
    theta: np.ndarray
    P: np.ndarray
    Px: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    R1x: np.ndarray
    R2x: np.ndarray


def profile_terms(wave: WaveField, x, t) -> ProfileTerms:
    k = wave.kappa
    eps2 = wave.epsilon**2
    x = np.asarray(x, dtype=float)
    s = 1.0 + np.asarray(t, dtype=float)
    root = np.sqrt(s)
    eta = x / root
    T, Tp, Tpp = profile_eval(wave.profile, eta)
    Tppp = third_derivative(eta, T, Tp, Tpp, k)
    Tx = Tp / root
    Txx = Tpp / s
    Txxx = Tppp / (s * root)
    Tt = -0.5 * x * Tp / (s * root)
    Txt = -0.5 * (Tx + x * Txx) / s
    u = 0.5 * k * Tx / T
    ux = 0.5 * k * (Txx / T - Tx * Tx / T**2)
    ut = 0.5 * k * (Txt / T - Tx * Tt / T**2)
    uxx = 0.5 * k * (Txxx / T - 3 * Tx * Txx / T**2 + 2 * Tx**3 / T**3)
    theta = T - 0.5 * eps2 * u * u
    P = theta / T
    Px = -eps2 * (u * ux / T - 0.5 * u * u * Tx / T**2)
    R1 = eps2 * k * Tt / (2 * T) - eps2 * u * u / (2 * T)
    R2 = eps2 * k * u * ux / T - eps2 * u**3 / (2 * T)
    R1x = eps2 * (ut - (u * ux / T - 0.5 * u * u * Tx / T**2))
    R2x = eps2 * (
        k * ((ux * ux + u * uxx) / T - u * ux * Tx / T**2)
        - 0.5 * (3 * u * u * ux / T - u**3 * Tx / T**2)
    )
    return ProfileTerms(T, Tx, Tt, Txx, Txt, Txxx, u, ux, ut, uxx, theta, P, Px, R1, R2, R1x, R2x)


def eval_bar(wave: WaveField, x, t):
    """Diffusion wave (v_bar, u_bar, theta_bar)."""
    T, Tx, *_ = spacetime_fields(wave.profile, x, t)
    return T, 0.5 * wave.kappa * Tx / T, T


def eval_tilde(wave: WaveField, x, t, check=True):
    """Corrected profile (v~, u~, theta~, P~, u~_x, u~_t)."""
    p = profile_terms(wave, x, t)
    if check and np.any(p.theta <= 0):
        raise NonPositiveTemperature(f"theta~ <= 0 for epsilon={wave.epsilon}")
    return p.T, p.u, p.theta, p.P, p.ux, p.ut


def corrected_primitives(wave: WaveField, x, t):
    """(v~, u~, theta~) only; the lean path used for boundary data."""
    prof = wave.profile
    pp = prof.params
    if prof.is_constant:
        x = np.asarray(x, dtype=float)
        return np.full_like(x, pp.theta_plus), np.zeros_like(x), np.full_like(x, pp.theta_plus)
    root = np.sqrt(1.0 + t)
    eta = np.asarray(x, dtype=float) / root
    e = np.clip(eta, -pp.eta_max, pp.eta_max)
    T = np.where(eta < -pp.eta_max, prof.T_values[0], np.where(eta > pp.eta_max, prof.T_values[-1], prof._T_spline(e)))
    Tp = np.where(np.abs(eta) > pp.eta_max, 0.0, prof._Tp_spline(e))
    u = 0.5 * pp.kappa * Tp / (root * T)
    return T, u, T - 0.5 * (wave.epsilon * u) ** 2


def residuals(wave: WaveField, x, t) -> ResidualSample:
    """Residual potentials R1, R2 whose x-derivatives close the approximate system."""
    p = profile_terms(wave, x, t)
    return ResidualSample(R1=p.R1, R2=p.R2)


# -- verification of the approximate system ----------------------------------


def _dx(f, h):
    """Central difference on interior points."""
    return (f[2:] - f[:-2]) / (2 * h)


def _conduction(theta, v, h, kappa):
    """kappa (theta_x / v)_x in conservative three-point form, interior points."""
    inv_v = 0.5 * (1.0 / v[1:] + 1.0 / v[:-1])
    flux = kappa * inv_v * (theta[1:] - theta[:-1]) / h
    return (flux[1:] - flux[:-1]) / h


def approximate_system_residuals(wave: WaveField, x, t):
    """Pointwise discrete residuals of the approximate system (interior points).

    Returns (eq1, eq2 - R1_x, eq3 - R2_x) with all x-derivatives by second-order
    central differences and the time derivatives analytic.
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    eps2 = wave.epsilon**2
    p = profile_terms(wave, x, t)
    v, u, theta, P = p.T, p.u, p.theta, p.P
    theta_t = p.Tt - eps2 * u * p.ut
    eq1 = p.Tt[1:-1] - _dx(u, h)
    eq2 = eps2 * p.ut[1:-1] + _dx(P, h) - _dx(p.R1, h)
    energy_t = theta_t + eps2 * u * p.ut
    eq3 = energy_t[1:-1] + _dx(P * u, h) - _conduction(theta, v, h, wave.kappa) - _dx(p.R2, h)
    return eq1, eq2, eq3


def verify_approximate_system(wave: WaveField, grid, t):
    """Max-norm of the three discrete residuals on a uniform grid."""
    return tuple(float(np.max(np.abs(r))) for r in approximate_system_residuals(wave, grid, t))


def verify_limit_identity(wave: WaveField, grid, t):
    """Max-norm of theta_t + u_x - kappa (theta_x / v)_x on the diffusion wave."""
    x = np.asarray(grid, dtype=float)
    h = x[1] - x[0]
    v, u, theta = eval_bar(wave, x, t)
    _, _, Tt, _ = spacetime_fields(wave.profile, x, t)
    r = Tt[1:-1] + _dx(u, h) - _conduction(theta, v, h, wave.kappa)
    return float(np.max(np.abs(r)))


def profile_gap_l2(wave: WaveField, t, n=20001):
    """L2_x norm of (v_bar - v~, u_bar - u~, theta_bar - theta~) at time t."""
    half = 12.0 * np.sqrt(1.0 + t)
    x = np.linspace(-half, half, n)
    _, _, theta_bar = eval_bar(wave, x, t)
    _, _, theta_tilde, *_ = eval_tilde(wave, x, t)
    return float(np.sqrt(np.trapezoid((theta_bar - theta_tilde) ** 2, x)))
