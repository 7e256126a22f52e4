"""Command-line experiment harness.

    waveguide spectrum    --p 3 --omega-min 0.1 --omega-max 1 --omega-steps 10
    waveguide threshold   --p 3
    waveguide groundstate --p 3 --omega 1
    waveguide omegastar   --p 3
    waveguide evolve      --p 3 --omega 1 --delta 1e-4 --t-final 8
    waveguide report      RUN_DIR

Settings come from (lowest to highest priority) built-in defaults, a
key=value file given by --config, and command-line flags.  Output goes to
--out, or to $WAVEGUIDE_OUT/<command> (default root: ./waveguide-runs).

Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .evolution import (EvolutionConfig, InitialData, perturbation_mode, run_experiment)
from .grid import GridSpec, default_grid, make_grid
from .groundstate import (ConvergenceError, find_omega_star, gap_threshold_bias, ground_state,
                          groundstate_grid, second_eigenvalue_Lg, to_physical)
from .soliton import m_line, omega_p
from .spectral1d import build_operator, growth_rate, lowest_eigenpairs, threshold_scan
from .storage import write_field, write_field_csv, write_json, write_manifest, write_table

log = logging.getLogger("waveguide")

COMMANDS = ("spectrum", "threshold", "groundstate", "omegastar", "evolve", "report")
OUT_ENV = "WAVEGUIDE_OUT"
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    p: float = 3.0
    omega: Optional[float] = None
    omega_min: Optional[float] = None
    omega_max: Optional[float] = None
    omega_steps: Optional[int] = None
    L: Optional[float] = None
    nx: Optional[int] = None
    ny: Optional[int] = None
    dt: float = 1e-3
    t_final: float = 10.0
    delta: float = 1e-3
    out: Optional[str] = None
    seed: int = 0
    workers: Optional[int] = None
    tol: Optional[float] = None
    gap_tol: float = 1e-8
    record_every: int = 100
    field_format: str = "binary"
    second_eigenvalue: bool = False
    scan_dir: Optional[str] = None

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command {self.command!r}")
        if not 1.0 < self.p < 5.0:
            raise ValidationError("p must lie in (1, 5)")
        for name in ("omega", "omega_min", "omega_max"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValidationError(f"{name.replace('_', '-')} must be positive"
                                      if name != "omega" else "omega must be positive")
        if self.omega_min is not None and self.omega_max is not None:
            if self.omega_min >= self.omega_max:
                raise ValidationError("omega range is empty (omega-min >= omega-max)")
        if self.omega_steps is not None and self.omega_steps < 1:
            raise ValidationError("omega-steps must be >= 1")
        if not self.dt > 0 or not self.t_final > 0:
            raise ValidationError("dt and t-final must be positive")
        if self.delta < 0:
            raise ValidationError("delta must be non-negative")
        if self.workers is not None and self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.tol is not None and not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.field_format not in ("binary", "csv"):
            raise ValidationError("field-format must be 'binary' or 'csv'")
        if self.command == "report" and not self.scan_dir:
            raise ValidationError("report needs a run directory")
        try:
            self.override_grid(default_grid(self.p, 1.0, ny=2))
        except ValueError as exc:
            raise ValidationError(str(exc)) from exc
        return self

    def omegas(self, default: list[float]) -> list[float]:
        if self.omega is not None:
            return [float(self.omega)]
        if self.omega_min is not None or self.omega_max is not None:
            lo = self.omega_min if self.omega_min is not None else min(default)
            hi = self.omega_max if self.omega_max is not None else max(default)
            steps = self.omega_steps or 10
            return [float(w) for w in np.linspace(lo, hi, steps)] if steps > 1 else [float(lo)]
        return default

    def override_grid(self, grid: GridSpec) -> GridSpec:
        return make_grid(self.L if self.L is not None else grid.x_halfwidth,
                         self.nx if self.nx is not None else grid.nx,
                         self.ny if self.ny is not None else grid.ny, self.p)

    def output_dir(self) -> Path:
        if self.out:
            return Path(self.out)
        root = Path(os.environ.get(OUT_ENV, "waveguide-runs"))
        return root / self.command


# --------------------------------------------------------------------------
# argument handling

_FLAG_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FLAG_TYPES[key]
    text = str(kind)
    if "bool" in text:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if "int" in text:
        return int(raw)
    if "float" in text:
        return float(raw)
    return raw


def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; dashes equal underscores."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            key, raw = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FLAG_TYPES or key == "command":
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _coerce(key, raw)
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: bad value for {key}: {raw!r}") from exc
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--p", type=float, help="nonlinearity exponent in (1, 5)")
    common.add_argument("--omega", type=float, help="single frequency")
    common.add_argument("--omega-min", type=float)
    common.add_argument("--omega-max", type=float)
    common.add_argument("--omega-steps", type=int)
    common.add_argument("--L", type=float, help="x half-width of the grid")
    common.add_argument("--nx", type=int)
    common.add_argument("--ny", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-final", type=float)
    common.add_argument("--delta", type=float, help="perturbation size for evolve")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="process pool size (default: cores)")
    common.add_argument("--tol", type=float, help="bisection tolerance override")
    common.add_argument("--gap-tol", type=float)
    common.add_argument("--record-every", type=int)
    common.add_argument("--field-format", choices=("binary", "csv"))
    common.add_argument("--second-eigenvalue", action="store_const", const=True, default=None,
                        help="groundstate: also compute the second eigenvalue test")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="waveguide", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "report":
            sp.add_argument("scan_dir", help="directory holding earlier runs")
    return parser


def config_from_args(argv: Optional[list[str]] = None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for key, val in vars(args).items():
        if key in ("config", "verbose") or val is None:
            continue
        values[key] = val
    return RunConfig(**values).validate(), bool(args.verbose)


# --------------------------------------------------------------------------
# pipelines (module-level so worker processes can import them)


def _spectrum_point(p: float, omega: float, grid: GridSpec) -> dict:
    rows = {"plus": [], "minus": [], "growth": []}
    for sign, k in (("plus", 3), ("minus", 2)):
        op = build_operator(p, omega, 0.0, sign, grid)
        for idx, (val, vec) in enumerate(lowest_eigenpairs(op, k)):
            v = np.asarray(vec.values)
            res = float(np.linalg.norm(op.apply(v) - val * v) / np.linalg.norm(v))
            rows[sign].append((p, omega, 0.0, idx, val, res))
    for a in (1.0, 2.0, 3.0, 4.0):
        spec = growth_rate(p, omega, a, grid)
        rows["growth"].append((p, omega, a, 0, spec.lambda0, spec.residual))
    return rows


def _groundstate_point(p: float, omega: float, grid: GridSpec, want_lambda2: bool,
                       seed: int) -> dict:
    res = to_physical(ground_state(p, omega, grid, rescaled=True))
    line = 2.0 * np.pi * m_line(p, omega)
    out = {"omega": omega, "result": res, "line": line,
           "gap": (line - res.m_omega) / res.m_omega, "lambda2": None}
    if want_lambda2 and res.converged:
        out["lambda2"] = second_eigenvalue_Lg(res.q, omega, seed=seed)
    return out


def _map(func, jobs: list[tuple], workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [func(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        futures = [pool.submit(func, *job) for job in jobs]
        return [f.result() for f in futures]


def _workers(cfg: RunConfig) -> int:
    return cfg.workers or os.cpu_count() or 1


def run_spectrum(cfg: RunConfig, out: Path) -> dict:
    wp = omega_p(cfg.p)
    omegas = cfg.omegas([float(w) for w in np.linspace(0.25 * wp, 3.0 * wp, 12)])
    jobs = [(cfg.p, w, cfg.override_grid(default_grid(cfg.p, w, ny=2))) for w in omegas]
    results = _map(_spectrum_point, jobs, _workers(cfg))
    header = ["p", "omega", "a", "eigenvalue_index", "eigenvalue", "residual"]
    for key, name in (("plus", "spectrum_plus.csv"), ("minus", "spectrum_minus.csv"),
                      ("growth", "growth.csv")):
        write_table(out / name, header, [row for r in results for row in r[key]])
    return {"points": len(omegas), "omega_p": wp}


def run_threshold(cfg: RunConfig, out: Path) -> dict:
    lo = cfg.omega_min if cfg.omega_min is not None else 1e-2
    hi = cfg.omega_max if cfg.omega_max is not None else 1e2
    grid = cfg.override_grid(default_grid(cfg.p, 1.0, ny=2)) \
        if any(v is not None for v in (cfg.L, cfg.nx)) else None
    tol = cfg.tol if cfg.tol is not None else 1e-6
    try:
        est = threshold_scan(cfg.p, grid, (lo, hi), tol=tol)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    wp = omega_p(cfg.p)
    write_table(out / "threshold.csv", ["p", "omega_threshold", "omega_p_formula", "tol"],
                [(cfg.p, est, wp, tol)])
    return {"omega_threshold": est, "omega_p": wp}


def run_groundstate(cfg: RunConfig, out: Path) -> dict:
    wp = omega_p(cfg.p)
    omegas = cfg.omegas([float(w) for w in np.linspace(0.1 * wp, 3.0 * wp, 10)])
    jobs = [(cfg.p, w, cfg.override_grid(groundstate_grid(cfg.p, w)), cfg.second_eigenvalue,
             cfg.seed) for w in omegas]
    results = _map(_groundstate_point, jobs, _workers(cfg))
    fields_dir = out / "fields"
    fields_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    failed = []
    for i, r in enumerate(results):
        res = r["result"]
        stem = f"q_{i:03d}"
        if cfg.field_format == "csv":
            write_field_csv(fields_dir / f"{stem}.csv", res.q)
        else:
            write_field(fields_dir / f"{stem}.wgf", res.q)
        write_json(fields_dir / f"{stem}.json", {
            "p": cfg.p, "omega": r["omega"], "m_omega": res.m_omega,
            "nehari_residual": res.nehari_residual, "el_residual": res.el_residual,
            "y_dependence": res.y_dependence, "iterations": res.iterations,
            "converged": res.converged, "start": res.start, "lambda2": r["lambda2"],
            "grid": {"L": res.q.grid.x_halfwidth, "nx": res.q.grid.nx,
                     "ny": res.q.grid.ny},
        })
        row = [r["omega"], res.m_omega, r["line"], r["gap"], res.y_dependence]
        if cfg.second_eigenvalue:
            row.append(r["lambda2"] if r["lambda2"] is not None else float("nan"))
        rows.append(row)
        if not res.converged:
            failed.append(r["omega"])
    header = ["omega", "m_omega", "2pi_m_line", "gap", "y_dependence"]
    if cfg.second_eigenvalue:
        header.append("lambda2")
    write_table(out / "groundstate.csv", header, rows)
    if failed:
        raise ConvergenceError(f"ground state did not converge at omega = {failed}")
    return {"points": len(rows)}


def run_omegastar(cfg: RunConfig, out: Path) -> dict:
    wp = omega_p(cfg.p)
    grid = cfg.override_grid(default_grid(cfg.p, 1.0, ny=32))
    tol = cfg.tol if cfg.tol is not None else 1e-5
    lo = cfg.omega_min if cfg.omega_min is not None else 0.1 * wp
    hi = cfg.omega_max if cfg.omega_max is not None else 2.0 * wp
    history: list = []
    est = find_omega_star(cfg.p, grid, tol=tol, omega_range=(lo, hi), gap_tol=cfg.gap_tol,
                          history=history)
    bias = gap_threshold_bias(cfg.p, cfg.gap_tol)
    write_json(out / "omegastar.json", {
        "p": cfg.p, "omega_star": est, "omega_p": wp, "tol": tol, "gap_tol": cfg.gap_tol,
        "predicate_bias": bias,
        "omega_star_le_omega_p": bool(est <= wp + tol + bias),
        "evaluations": [[w, g] for w, g in history],
    })
    return {"omega_star": est, "omega_p": wp}


def run_evolve(cfg: RunConfig, out: Path) -> dict:
    omega = cfg.omega if cfg.omega is not None else 1.0
    grid = cfg.override_grid(default_grid(cfg.p, omega, ny=16))
    initial = InitialData("soliton_plus_chi", cfg.delta) if cfg.delta > 0 else InitialData()
    try:
        ecfg = EvolutionConfig(grid, omega, cfg.dt, cfg.t_final, record_every=cfg.record_every,
                               initial=initial)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    _, lam = perturbation_mode(cfg.p, omega, grid)
    rec = run_experiment(ecfg)
    write_table(out / "trajectory.csv",
                ["t", "mass_drift", "energy_drift", "orbital_distance", "mode1_amplitude"],
                rec.rows())
    write_field(out / "final.wgf", rec.final) if cfg.field_format == "binary" \
        else write_field_csv(out / "final.csv", rec.final)
    summary = {
        "p": cfg.p, "omega": omega, "delta": cfg.delta, "dt": cfg.dt, "t_final": cfg.t_final,
        "omega_p": omega_p(cfg.p), "linear_growth_rate": lam,
        "fitted_growth_rate": rec.fitted_growth_rate, "exit_time": rec.exit_time,
        "exit_radius": 0.05, "status": rec.status,
        "max_mass_drift": max(rec.mass_drift), "max_energy_drift": max(rec.energy_drift),
        "max_orbital_distance": max(rec.orbital_distance),
    }
    write_json(out / "evolve.json", summary)
    if rec.status in ("nan", "blowup"):
        raise FloatingPointError(f"evolution stopped early: {rec.status}")
    return {"status": rec.status, "fitted_growth_rate": rec.fitted_growth_rate}


def run_report(cfg: RunConfig, out: Path) -> dict:
    from .report import ReportError, emit_report

    try:
        path = emit_report(Path(cfg.scan_dir), out)
    except ReportError as exc:
        raise ValidationError(str(exc)) from exc
    return {"summary": str(path)}


PIPELINES = {
    "spectrum": run_spectrum,
    "threshold": run_threshold,
    "groundstate": run_groundstate,
    "omegastar": run_omegastar,
    "evolve": run_evolve,
    "report": run_report,
}


def dispatch(cfg: RunConfig) -> int:
    """Run ``cfg.command``; write artifacts plus a hashed manifest; return an exit code."""
    out = cfg.output_dir()
    if cfg.command == "report" and not cfg.out:
        out = Path(cfg.scan_dir) / "report"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"waveguide: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not os.access(out, os.W_OK):
        print(f"waveguide: output directory {out} is not writable", file=sys.stderr)
        return EXIT_INVALID
    np.random.seed(cfg.seed)
    start = time.perf_counter()
    code, summary, error = EXIT_OK, {}, None
    try:
        summary = PIPELINES[cfg.command](cfg, out)
    except ValidationError as exc:
        code, error = EXIT_INVALID, str(exc)
    except (ConvergenceError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        code, error = EXIT_NUMERICAL, str(exc)
    if error:
        print(f"waveguide {cfg.command}: {error}", file=sys.stderr)
    extra = {
        "command": cfg.command, "exit_code": code, "error": error, "summary": summary,
        "versions": {"waveguide": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    # reports promise byte-identical reruns, so they carry no timing
    if cfg.command != "report":
        extra["wall_time_seconds"] = round(time.perf_counter() - start, 3)
    write_manifest(out, asdict(cfg), extra)
    return code


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cfg, verbose = config_from_args(argv)
    except ValidationError as exc:
        print(f"waveguide: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"waveguide: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
