"""Command line: ``diffwave <command> --config <path> [key=value ...]``.

Exit status: 0 when every check passes, 1 when a check fails or a run breaks
down, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DiffwaveError, ParseError, ValidationError

log = logging.getLogger("diffwave")

COMMANDS = ("profile", "simulate", "sweep", "verify", "report")

DEFAULTS = {
    "profile": {"theta_minus": 0.9, "theta_plus": 1.1, "kappa": 1.0, "eta_max": 8.0, "n_nodes": 2048, "tol": 1e-10},
    "epsilon": 0.1,
    "solver": {"cfl": 0.5, "conduction": "implicit-trapezoidal", "bc": "profile-dirichlet", "limiter": "none", "n_cells": 8192},
    "run": {"t_end": 100.0, "t_samples": [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]},
    "sweep": {
        "epsilons": [0.2, 0.1, 0.05],
        "theta_pairs": [[0.9, 1.1]],
        "eta0": 1.0,
        "fit_window": [10.0, 100.0],
        "t_ref": 10.0,
    },
    "verify": {"n_cells": 1024},
    "output": "diffwave-out",
    "verbosity": 1,
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    data: dict

    @property
    def output(self) -> Path:
        return Path(self.data["output"])

    def section(self, name):
        return self.data[name]


# -- parsing ---------------------------------------------------------------------


def _leaves(tree, prefix=""):
    for k, v in tree.items():
        path = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _leaves(v, path + ".")
        else:
            yield path


def _resolve_key(key: str) -> list[str]:
    """Dotted path of a known setting; a bare leaf name is accepted when unambiguous."""
    leaves = list(_leaves(DEFAULTS))
    if key in leaves:
        return key.split(".")
    hits = [p for p in leaves if p.split(".")[-1] == key]
    if len(hits) == 1:
        return hits[0].split(".")
    raise ValidationError(f"unknown configuration key {key!r}")


def _merge(base: dict, update: dict, prefix=""):
    for k, v in update.items():
        path = f"{prefix}{k}"
        if k not in base:
            raise ValidationError(f"unknown configuration key {path!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ValidationError(f"{path!r} must be an object")
            _merge(base[k], v, path + ".")
        else:
            base[k] = v


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _number(cfg, path, lo=None, hi=None, lo_open=False, integer=False):
    node = cfg
    for part in path.split("."):
        node = node[part]
    kind = int if integer else (int, float)
    if isinstance(node, bool) or not isinstance(node, kind):
        raise ValidationError(f"{path} must be {'an integer' if integer else 'a number'}, got {node!r}")
    bad = (lo is not None and (node <= lo if lo_open else node < lo)) or (hi is not None and node > hi)
    if bad:
        left = "(" if lo_open else "["
        raise ValidationError(f"{path}={node!r} outside {left}{lo}, {hi}]")
    return node


def _choice(cfg, path, options):
    section, key = path.split(".")
    if cfg[section][key] not in options:
        raise ValidationError(f"{path}={cfg[section][key]!r} not one of {', '.join(options)}")


def validate(cfg: dict) -> None:
    _number(cfg, "profile.theta_minus", 0, None, lo_open=True)
    _number(cfg, "profile.theta_plus", 0, None, lo_open=True)
    _number(cfg, "profile.kappa", 0, None, lo_open=True)
    _number(cfg, "profile.eta_max", 0, None, lo_open=True)
    _number(cfg, "profile.n_nodes", 16, None, integer=True)
    _number(cfg, "profile.tol", 0, 1e-3, lo_open=True)
    _number(cfg, "epsilon", 0, 1.0, lo_open=True)
    _number(cfg, "solver.cfl", 0, 0.9, lo_open=True)
    _number(cfg, "solver.n_cells", 128, None, integer=True)
    _choice(cfg, "solver.conduction", ("implicit-trapezoidal", "explicit-substep"))
    _choice(cfg, "solver.bc", ("profile-dirichlet", "constant-farfield"))
    _choice(cfg, "solver.limiter", ("none", "minmod"))
    t_end = _number(cfg, "run.t_end", 0, None, lo_open=True)
    samples = cfg["run"]["t_samples"]
    if not isinstance(samples, list) or not all(isinstance(t, (int, float)) and 0 <= t <= t_end for t in samples):
        raise ValidationError(f"run.t_samples must be numbers in [0, {t_end}]")
    sw = cfg["sweep"]
    if not isinstance(sw["epsilons"], list) or not sw["epsilons"] or not all(
        isinstance(e, (int, float)) and 0 < e <= 0.5 for e in sw["epsilons"]
    ):
        raise ValidationError("sweep.epsilons must be a non-empty list of numbers in (0, 0.5]")
    if not isinstance(sw["theta_pairs"], list) or not all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(x, (int, float)) and x > 0 for x in p)
        for p in sw["theta_pairs"]
    ):
        raise ValidationError("sweep.theta_pairs must be a list of [theta_minus, theta_plus] with positive entries")
    _number(cfg, "sweep.eta0", 0, None, lo_open=True)
    fw = sw["fit_window"]
    if not (isinstance(fw, list) and len(fw) == 2 and 0 <= fw[0] < fw[1]):
        raise ValidationError("sweep.fit_window must be [t_lo, t_hi] with 0 <= t_lo < t_hi")
    _number(cfg, "sweep.t_ref", 0, None)
    _number(cfg, "verify.n_cells", 128, None, integer=True)
    if not isinstance(cfg["output"], str) or not cfg["output"]:
        raise ValidationError("output must be a non-empty path string")
    _number(cfg, "verbosity", 0, 2, integer=True)


def parse_config(command: str, path=None, overrides=()) -> RunConfig:
    """Defaults, then the JSON file, then ``key=value`` overrides; validated."""
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read {path}: {exc}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ParseError(f"{path}: top level must be a JSON object")
        _merge(cfg, doc)
    for item in overrides:
        if "=" not in item:
            raise ParseError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = _resolve_key(key.strip())
        node = cfg
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = _parse_value(raw)
    validate(cfg)
    return RunConfig(command, cfg)


# -- commands ----------------------------------------------------------------------


def _profile_params(cfg, pair=None):
    from .profile import ProfileParams

    p = dict(cfg["profile"])
    if pair is not None:
        p["theta_minus"], p["theta_plus"] = pair
    return ProfileParams(**p)


def _solver(cfg):
    from .hydro import SolverConfig

    s = cfg["solver"]
    return SolverConfig(cfl=s["cfl"], conduction=s["conduction"], bc=s["bc"], limiter=s["limiter"])


def _write_json(path: Path, doc) -> None:
    from .rates import _clean

    path.write_text(json.dumps(_clean(doc), indent=2) + "\n")


def cmd_profile(rc: RunConfig) -> int:
    from .errors import InsufficientTail
    from .profile import profile_eval, solve_profile, verify_slope_bounds, verify_tail

    out = rc.output
    prof = solve_profile(_profile_params(rc.data))
    (out / "profile.json").write_text(prof.to_json())
    T0, Tp0, _ = profile_eval(prof, np.array([0.0]))
    report = {"T0": float(T0[0]), "Tp0": float(Tp0[0]), "mismatch": prof.achieved_mismatch}
    ok = True
    if prof.is_constant:
        report["tail"] = None
    else:
        try:
            tail = verify_tail(prof)
            report["tail"] = {
                "slope_right": tail.slope_right, "theory_right": tail.theory_right,
                "slope_left": tail.slope_left, "theory_left": tail.theory_left,
                "rel_err_right": tail.rel_err_right, "rel_err_left": tail.rel_err_left,
            }
            ok = max(tail.rel_err_right, tail.rel_err_left) <= 0.1
        except InsufficientTail as exc:
            report["tail"] = {"error": str(exc)}
            ok = False
        sb = verify_slope_bounds(prof)
        report["slope_bounds"] = {"window": list(sb.window), "r_min": sb.r_min, "r_max": sb.r_max}
    _write_json(out / "profile_report.json", report)
    log.info("profile: T(0)=%.16g tail ok=%s", report["T0"], ok)
    return 0 if ok else 1


def cmd_simulate(rc: RunConfig) -> int:
    from .rates import run_case, write_case

    cfg = rc.data
    p = cfg["profile"]
    series = run_case(
        cfg["epsilon"], (p["theta_minus"], p["theta_plus"]), p["kappa"], cfg["run"]["t_end"],
        cfg["run"]["t_samples"], cfg["solver"]["n_cells"], _solver(cfg),
        eta0=cfg["sweep"]["eta0"], keep_trajectory=True,
    )
    snap_dir = rc.output / f"snapshots_{series.case_id}"
    snap_dir.mkdir(parents=True, exist_ok=True)
    for s in series.trajectory:
        s.to_csv(snap_dir)
    write_case(series, rc.output)
    ok = series.conservation <= 1e-8 and series.positivity
    log.info("simulate %s: conservation %.2e", series.case_id, series.conservation)
    return 0 if ok else 1


def _sweep_config(cfg):
    from .rates import SweepConfig

    sw = cfg["sweep"]
    return SweepConfig(
        epsilons=tuple(sw["epsilons"]),
        theta_pairs=tuple(tuple(p) for p in sw["theta_pairs"]),
        kappa=cfg["profile"]["kappa"],
        t_end=cfg["run"]["t_end"],
        t_samples=tuple(cfg["run"]["t_samples"]),
        n_cells=cfg["solver"]["n_cells"],
        eta0=sw["eta0"],
        fit_window=tuple(sw["fit_window"]),
        t_ref=sw["t_ref"],
        solver=_solver(cfg),
    )


def _emit_checks(path: Path, checks: dict) -> bool:
    from .checks import all_passed

    _write_json(path, {k: v.as_dict() for k, v in checks.items()})
    for name, c in checks.items():
        level = logging.INFO if c.passed or not c.gating else logging.WARNING
        verdict = ("PASS" if c.passed else "FAIL") + ("" if c.gating else " (info)")
        log.log(level, "%-32s %s  value=%s  threshold=%s", name, verdict, c.value, c.threshold)
    return all_passed(checks)


def cmd_sweep(rc: RunConfig) -> int:
    from .checks import assess_sweep
    from .rates import emit_report, run_sweep

    scfg = _sweep_config(rc.data)
    results = run_sweep(scfg)
    emit_report(results, rc.output, scfg.fit_window, scfg.t_ref)
    ok = True
    for pair in scfg.theta_pairs:
        group = [r for r in results if r.theta_pair == tuple(map(float, pair))]
        if abs(pair[1] - pair[0]) == 0:
            continue
        checks = assess_sweep(group, scfg.fit_window, scfg.t_ref)
        ok &= _emit_checks(rc.output / f"checks_theta=({pair[0]:g},{pair[1]:g}).json", checks)
    return 0 if ok else 1


def cmd_verify(rc: RunConfig) -> int:
    from .checks import verify_suite
    from .profile import solve_profile

    cfg = rc.data
    prof = solve_profile(_profile_params(cfg))
    checks = verify_suite(prof, epsilon=min(cfg["epsilon"], 0.5), n_cells=cfg["verify"]["n_cells"], config=_solver(cfg))
    return 0 if _emit_checks(rc.output / "verify.json", checks) else 1


def cmd_report(rc: RunConfig) -> int:
    from .checks import all_passed, assess_sweep
    from .rates import aggregate, load_case

    sw = rc.data["sweep"]
    aggregate(rc.output, tuple(sw["fit_window"]), sw["t_ref"])
    results = [load_case(p) for p in sorted(rc.output.glob("case_*.json"))]
    ok = True
    pairs = sorted({r.theta_pair for r in results})
    for pair in pairs:
        group = [r for r in results if r.theta_pair == pair]
        if pair[0] == pair[1] or len(group) < 3:
            continue
        checks = assess_sweep(group, tuple(sw["fit_window"]), sw["t_ref"])
        ok &= all_passed(checks)
    return 0 if ok else 1


HANDLERS = {
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "report": cmd_report,
}


def dispatch(rc: RunConfig) -> int:
    rc.output.mkdir(parents=True, exist_ok=True)
    start = time.time()
    try:
        status = HANDLERS[rc.command](rc)
    except DiffwaveError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        status = 1
    meta = {
        "command": rc.command,
        "config": rc.data,
        "status": status,
        "elapsed_seconds": round(time.time() - start, 3),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "threads": os.environ.get("DIFFWAVE_THREADS", "1"),
    }
    _write_json(rc.output / "meta.json", meta)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="diffwave", description=__doc__.splitlines()[0])
    ap.add_argument("command")
    ap.add_argument("--config", default=None, help="JSON configuration file")
    ap.add_argument("overrides", nargs="*", help="dotted key=value settings")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        rc = parse_config(args.command, args.config, args.overrides)
    except (ParseError, ValidationError) as exc:
        print(f"diffwave: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    level = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}[rc.data["verbosity"]]
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    return dispatch(rc)


if __name__ == "__main__":
    sys.exit(main())
