"""Parameter sweeps, decay-rate fits and the thermal-creep check."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateFit, SignViolation
from .hydro import FieldState, GridSpec, SolverConfig, conservation_report, init_state, run
from .perturbation import DIAGNOSTIC_COLUMNS, EnergyDiagnostics, compute_perturbation, norms_report
from .profile import ProfileParams, solve_profile
from .wave import WaveField, profile_terms

SUITE_VERSION = "1"
L2_KEYS = ("L2x_pert", "L2x_dpert", "L2x_zxx")
SUP_KEYS = ("Linf_pert", "Linf_u_err", "Linf_zx")
NORM_KEYS = L2_KEYS + SUP_KEYS
DEFAULT_SAMPLES = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
ZERO_NORM = 1e-14


@dataclass(frozen=True)
class SweepConfig:
    epsilons: tuple = (0.2, 0.1, 0.05)
    theta_pairs: tuple = ((0.9, 1.1),)
    kappa: float = 1.0
    t_end: float = 100.0
    t_samples: tuple = DEFAULT_SAMPLES
    n_cells: int = 8192
    grid_policy: str = "sqrt-time"
    eta0: float = 1.0
    fit_window: tuple = (10.0, 100.0)
    t_ref: float = 10.0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not self.epsilons or any(not (0 < e <= 0.5) for e in self.epsilons):
            raise ValueError("every epsilon must lie in (0, 0.5]")
        if any(t > self.t_end or t < 0 for t in self.t_samples):
            raise ValueError("sample times must lie in [0, t_end]")
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")
        if self.grid_policy != "sqrt-time":
            raise ValueError(f"unknown grid policy {self.grid_policy!r}")
        for pair in self.theta_pairs:
            if len(pair) != 2 or min(pair) <= 0:
                raise ValueError(f"invalid far-field pair {pair!r}")

    def cases(self):
        """(eps, theta_pair) in a fixed order: pairs outer, epsilons as listed."""
        return [(float(e), tuple(map(float, p))) for p in self.theta_pairs for e in self.epsilons]


@dataclass
class NormSeries:
    epsilon: float
    theta_pair: tuple
    kappa: float
    t: np.ndarray
    norms: dict
    diagnostics: list
    conservation: float
    positivity: bool = True
    creep: dict | None = None
    trajectory: list | None = field(default=None, repr=False)

    @property
    def case_id(self) -> str:
        a, b = self.theta_pair
        return f"eps={self.epsilon:g}_theta=({a:g},{b:g})_kappa={self.kappa:g}"

    @property
    def delta(self) -> float:
        return abs(self.theta_pair[1] - self.theta_pair[0])

    def value_at(self, key: str, t: float) -> float:
        idx = np.nonzero(np.isclose(self.t, t, rtol=0, atol=1e-9))[0]
        if idx.size == 0:
            raise KeyError(f"no sample at t={t}")
        return float(self.norms[key][idx[0]])


def _build(eps, theta_pair, kappa, t_end, n_cells):
    prof = solve_profile(ProfileParams(theta_pair[0], theta_pair[1], kappa))
    wave = WaveField(prof, eps, t_max=t_end)
    grid = GridSpec.for_run(eps, t_end, n_cells)
    return wave, grid


def run_case(
    eps, theta_pair, kappa, t_end, t_samples, n_cells=8192, config=None, eta0=None, keep_trajectory=False
) -> NormSeries:
    """Solve one case from the corrected profile and collect diagnostics at the sample times."""
    config = config or SolverConfig()
    wave, grid = _build(eps, theta_pair, kappa, t_end, n_cells)
    state = init_state(wave, grid)
    samples = sorted(set(float(t) for t in t_samples) | {0.0})
    try:
        traj = run(state, t_end / eps**2, config, wave, [t / eps**2 for t in samples])
    except Exception as exc:  # tag the failing case
        if hasattr(exc, "add_note"):
            exc.add_note(f"case eps={eps}, theta={theta_pair}, kappa={kappa}")
        raise
    diags = [norms_report(compute_perturbation(s, wave), s, wave) for s in traj]
    norms = {k: np.array([d.norms_x[k] for d in diags]) for k in NORM_KEYS}
    creep = None
    if eta0 is not None and theta_pair[1] > theta_pair[0]:
        try:
            creep = check_thermal_creep(traj, wave, eta0).as_dict()
        except SignViolation as exc:
            creep = {"ok": False, "error": str(exc)}
    return NormSeries(
        epsilon=float(eps),
        theta_pair=tuple(theta_pair),
        kappa=float(kappa),
        t=np.array([s.t for s in traj]),
        norms=norms,
        diagnostics=diags,
        conservation=conservation_report(traj).worst,
        creep=creep,
        trajectory=traj if keep_trajectory else None,
    )


# -- fits -----------------------------------------------------------------------


def _ols(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def fit_time_exponent(series: NormSeries, norm_key: str, window=(10.0, 100.0)):
    """Least-squares slope of log(value) against log(1 + t) inside ``window``.

    L2 entries are stored squared, so their slope is the exponent of the squared norm.
    Returns (alpha, rms residual of the log fit).
    """
    t = np.asarray(series.t)
    vals = np.asarray(series.norms[norm_key])
    sel = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if sel.sum() < 4:
        raise ValueError(f"need at least 4 samples in {window}, got {int(sel.sum())}")
    v = vals[sel]
    if np.all(v < ZERO_NORM):
        raise DegenerateFit(f"{norm_key} is numerically zero on {window}")
    if np.any(v <= 0):
        raise DegenerateFit(f"{norm_key} has non-positive samples on {window}")
    return _ols(np.log1p(t[sel]), np.log(v))


def fit_eps_exponent(results, norm_key: str, t_ref: float = 10.0):
    """Least-squares slope of log(value at t_ref) against log(eps) across cases."""
    eps = np.array([r.epsilon for r in results], dtype=float)
    if np.unique(eps).size < 3:
        raise ValueError("need at least 3 distinct epsilon values")
    vals = np.array([r.value_at(norm_key, t_ref) for r in results])
    if np.all(vals < ZERO_NORM):
        raise DegenerateFit(f"{norm_key} is numerically zero at t={t_ref}")
    if np.any(vals <= 0):
        raise DegenerateFit(f"{norm_key} has non-positive values at t={t_ref}")
    return _ols(np.log(eps), np.log(vals))


def weighted_sup(series: NormSeries, norm_key: str, power: float = 0.9) -> float:
    """sup over samples of (1 + t)^power times the stored value."""
    return float(np.max((1.0 + series.t) ** power * series.norms[norm_key]))


def monotone_in_eps(results, norm_key: str, t: float, slack: float = 0.05) -> bool:
    """Values at t do not increase as epsilon decreases (within a relative slack)."""
    ordered = sorted(results, key=lambda r: -r.epsilon)
    vals = [r.value_at(norm_key, t) for r in ordered]
    return all(b <= a * (1 + slack) for a, b in zip(vals, vals[1:]))


# -- thermal creep -----------------------------------------------------------------


@dataclass(frozen=True)
class CreepReport:
    eta0: float
    ratio_min: float
    ratio_max: float
    lower_bound: float
    upper_bound: float
    max_reference_deviation: float
    samples: int

    @property
    def within_bounds(self) -> bool:
        return self.lower_bound <= self.ratio_min and self.ratio_max <= self.upper_bound

    def as_dict(self) -> dict:
        return {
            "ok": self.within_bounds,
            "eta0": self.eta0,
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "max_reference_deviation": self.max_reference_deviation,
            "samples": self.samples,
        }


def check_thermal_creep(trajectory, wave: WaveField, eta0: float = 1.0) -> CreepReport:
    """u / theta_x inside |x| < eta0 sqrt(1 + t); both must stay positive there."""
    p = wave.profile.params
    if not p.theta_plus > p.theta_minus:
        raise ValueError("the creep check needs theta_plus > theta_minus")
    kappa = wave.kappa
    rmin, rmax, dev = np.inf, -np.inf, 0.0
    Tmin, Tmax = np.inf, -np.inf
    for s in trajectory:
        eps = s.epsilon
        x = eps * s.grid.centers
        win = np.abs(x) < eta0 * math.sqrt(1.0 + s.t)
        u = s.U / eps
        theta_x = np.gradient(s.theta, s.grid.h) / eps
        u, theta_x = u[win], theta_x[win]
        if np.any(u <= 0) or np.any(theta_x <= 0):
            raise SignViolation(f"u or theta_x not positive in the creep window at t={s.t:g}")
        T = profile_terms(wave, x[win], s.t).T
        ratio = u / theta_x
        rmin, rmax = min(rmin, float(ratio.min())), max(rmax, float(ratio.max()))
        dev = max(dev, float(np.max(np.abs(ratio / (kappa / (2 * T)) - 1.0))))
        Tmin, Tmax = min(Tmin, float(T.min())), max(Tmax, float(T.max()))
    return CreepReport(eta0, rmin, rmax, kappa / (4 * Tmax), kappa / Tmin, dev, len(trajectory))


# -- sweeps and reports -------------------------------------------------------------


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DIFFWAVE_THREADS", "1")))
    except ValueError:
        return 1


def _run_one(args):
    eps, pair, cfg, creep, keep = args
    return run_case(
        eps, pair, cfg.kappa, cfg.t_end, cfg.t_samples, cfg.n_cells, cfg.solver,
        eta0=cfg.eta0 if creep else None, keep_trajectory=keep,
    )


def run_sweep(cfg: SweepConfig, keep_trajectories: bool = False) -> list[NormSeries]:
    """All cases of the sweep; the creep check runs on the smallest epsilon of each pair."""
    smallest = min(cfg.epsilons)
    jobs = [(e, p, cfg, e == smallest, keep_trajectories) for e, p in cfg.cases()]
    workers = min(_threads(), len(jobs))
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def _fit_entry(fn, *args):
    try:
        slope, resid = fn(*args)
        return {"value": slope, "residual": resid}
    except (DegenerateFit, ValueError, KeyError) as exc:
        return {"value": None, "residual": None, "reason": str(exc)}


def case_fits(series: NormSeries, group, window=(10.0, 100.0), t_ref=10.0) -> dict:
    alpha = {k: _fit_entry(fit_time_exponent, series, k, window) for k in NORM_KEYS}
    beta = {k: _fit_entry(fit_eps_exponent, group, k, t_ref) for k in NORM_KEYS}
    return {
        "alpha": alpha,
        "beta": beta,
        "sup_weighted_L2x_pert": weighted_sup(series, "L2x_pert", 0.9),
    }


def _group(results, series):
    return [r for r in results if r.theta_pair == series.theta_pair and r.kappa == series.kappa]


def _case_flags(series: NormSeries) -> dict:
    zero = all(np.all(series.norms[k] <= 1e-10) for k in L2_KEYS)
    return {
        "all_zero_perturbation": bool(zero),
        "positivity": bool(series.positivity),
        "conservation_ok": bool(series.conservation <= 1e-8),
        "weight_fallback": bool(any(d.N_fallback for d in series.diagnostics)),
        "initial_norms_small": bool(all(series.norms[k][0] <= 1e-10 for k in L2_KEYS)),
    }


def _diag_dict(d: EnergyDiagnostics) -> dict:
    row = dict(zip(DIAGNOSTIC_COLUMNS, d.csv_row()))
    row["N"] = d.N
    row["apriori"] = d.apriori
    return row


def build_report(results, window=(10.0, 100.0), t_ref=10.0) -> dict:
    cases = []
    for r in results:
        group = _group(results, r)
        cases.append(
            {
                "id": r.case_id,
                "params": {
                    "epsilon": r.epsilon,
                    "theta_minus": r.theta_pair[0],
                    "theta_plus": r.theta_pair[1],
                    "kappa": r.kappa,
                },
                "norms": [_diag_dict(d) for d in r.diagnostics],
                "fits": case_fits(r, group, window, t_ref),
                "creep": r.creep,
                "conservation_worst": r.conservation,
                "flags": _case_flags(r),
            }
        )
    return {"cases": cases, "suite_version": SUITE_VERSION}


def _clean(obj):
    """Replace non-finite floats by None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_series_csv(series: NormSeries, directory) -> Path:
    path = Path(directory) / f"diagnostics_{series.case_id}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTIC_COLUMNS)
        for d in series.diagnostics:
            w.writerow([f"{v:.17g}" for v in d.csv_row()])
    return path


def write_case(series: NormSeries, directory) -> Path:
    """Diagnostics CSV plus a lossless ``case_<id>.json`` sidecar read back by ``load_case``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(series, out)
    doc = {
        "epsilon": series.epsilon,
        "theta_pair": list(series.theta_pair),
        "kappa": series.kappa,
        "conservation": series.conservation,
        "positivity": series.positivity,
        "creep": series.creep,
        "diagnostics": [
            {
                "tau": d.tau, "t": d.t, "E1": d.E1, "K1": d.K1, "E2": d.E2, "K2": d.K2,
                "N": d.N, "N_fallback": d.N_fallback, "apriori": d.apriori,
                "norms_y": d.norms_y, "norms_x": d.norms_x,
            }
            for d in series.diagnostics
        ],
    }
    path = out / f"case_{series.case_id}.json"
    path.write_text(json.dumps(_clean(doc), indent=2) + "\n")
    return path


def load_case(path) -> NormSeries:
    doc = json.loads(Path(path).read_text())
    nan = lambda v: float("nan") if v is None else v
    diags = [
        EnergyDiagnostics(
            tau=d["tau"], t=d["t"], E1=nan(d["E1"]), K1=nan(d["K1"]), E2=nan(d["E2"]), K2=nan(d["K2"]),
            N=d["N"], N_fallback=d["N_fallback"], norms_y=d["norms_y"], norms_x=d["norms_x"],
            apriori=nan(d["apriori"]),
        )
        for d in doc["diagnostics"]
    ]
    return NormSeries(
        epsilon=doc["epsilon"],
        theta_pair=tuple(doc["theta_pair"]),
        kappa=doc["kappa"],
        t=np.array([d.t for d in diags]),
        norms={k: np.array([nan(d.norms_x[k]) for d in diags]) for k in NORM_KEYS},
        diagnostics=diags,
        conservation=nan(doc["conservation"]),
        positivity=doc["positivity"],
        creep=doc["creep"],
    )


def emit_report(results, directory, window=(10.0, 100.0), t_ref=10.0, meta=None) -> dict:
    """Write report.json, per-case outputs and (optionally) meta.json; returns the report."""
    if not results:
        raise ValueError("no completed cases")
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for r in results:
        write_case(r, out)
    report = _clean(build_report(results, window, t_ref))
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    if meta is not None:
        (out / "meta.json").write_text(json.dumps(_clean(meta), indent=2, sort_keys=True) + "\n")
    return report


def aggregate(directory, window=(10.0, 100.0), t_ref=10.0) -> dict:
    """Rebuild report.json from the case sidecars already present in ``directory``."""
    out = Path(directory)
    paths = sorted(out.glob("case_*.json"))
    if not paths:
        raise ValueError(f"no case outputs in {out}")
    results = [load_case(p) for p in paths]
    results.sort(key=lambda r: (r.theta_pair, r.kappa, -r.epsilon))
    report = _clean(build_report(results, window, t_ref))
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report
