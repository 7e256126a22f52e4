"""Aggregate earlier runs into plot-ready tables, a summary and figures.

Inputs are discovered recursively under the run directory by file name:
``groundstate.csv``, ``growth.csv``, ``threshold.csv``, ``omegastar.json``
and ``trajectory.csv``.  Outputs are deterministic: rerunning on the same
inputs rewrites identical bytes, figures included.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .storage import read_table, write_json, write_table  # noqa: E402

__all__ = ["emit_report", "ReportError"]

_PNG_META = {"Software": None}


class ReportError(ValueError):
    pass


def _columns(path: Path, needed: list[str]) -> dict[str, np.ndarray]:
    try:
        header, rows = read_table(path)
        idx = [header.index(c) for c in needed]
        data = np.array([[float(r[i]) for i in idx] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ReportError(f"{path}: corrupt or incomplete table ({exc})") from exc
    data = data.reshape(-1, len(needed))
    return {c: data[:, k] for k, c in enumerate(needed)}


def _find(scan_dir: Path, name: str, skip: Path) -> list[Path]:
    found = []
    for p in sorted(scan_dir.rglob(name)):
        try:
            p.relative_to(skip)
            continue
        except ValueError:
            found.append(p)
    return found


def _label(path: Path, scan_dir: Path) -> str:
    rel = path.parent.relative_to(scan_dir)
    return "_".join(rel.parts) or "run"


def _figure(path: Path, draw) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.5), dpi=100)
    draw(ax)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_META)
    plt.close(fig)


def emit_report(scan_dir: Path, out_dir: Path) -> Path:
    """Write tables, ``summary.json`` and PNG figures into ``out_dir``; return the summary path."""
    scan_dir = Path(scan_dir)
    out_dir = Path(out_dir)
    if not scan_dir.is_dir():
        raise ReportError(f"{scan_dir} is not a directory")
    out_dir.mkdir(parents=True, exist_ok=True)

    gs_files = _find(scan_dir, "groundstate.csv", out_dir)
    growth_files = _find(scan_dir, "growth.csv", out_dir)
    thr_files = _find(scan_dir, "threshold.csv", out_dir)
    star_files = _find(scan_dir, "omegastar.json", out_dir)
    traj_files = _find(scan_dir, "trajectory.csv", out_dir)
    if not (gs_files or growth_files or thr_files or star_files or traj_files):
        raise ReportError(f"no run outputs found under {scan_dir}")

    summary: dict = {"inputs": sorted(str(p.relative_to(scan_dir)) for p in
                                      gs_files + growth_files + thr_files + star_files
                                      + traj_files)}

    if gs_files:
        cols = ["omega", "m_omega", "2pi_m_line", "gap"]
        parts = [_columns(p, cols) for p in gs_files]
        table = np.column_stack([np.concatenate([d[c] for d in parts]) for c in cols])
        table = table[np.lexsort((table[:, 1], table[:, 0]))]
        write_table(out_dir / "gap_table.csv", cols, table.tolist())

        def draw(ax):
            ax.plot(table[:, 0], table[:, 1], "o-", label="ground state action")
            ax.plot(table[:, 0], table[:, 2], "--", label="line soliton action")
            ax.set_xlabel("omega")
            ax.set_ylabel("action")
            ax.legend()
        _figure(out_dir / "actions.png", draw)

    if growth_files:
        parts = [_columns(p, ["omega", "a", "eigenvalue"]) for p in growth_files]
        om = np.concatenate([d["omega"] for d in parts])
        a = np.concatenate([d["a"] for d in parts])
        lam = np.concatenate([d["eigenvalue"] for d in parts])
        sel = a == 1.0
        table = np.column_stack([om[sel], lam[sel]])
        table = table[np.argsort(table[:, 0], kind="stable")]
        write_table(out_dir / "growth_table.csv", ["omega", "lambda0"], table.tolist())

        def draw(ax):
            ax.plot(table[:, 0], table[:, 1], "o-")
            ax.set_xlabel("omega")
            ax.set_ylabel("growth rate of mode 1")
        _figure(out_dir / "growth.png", draw)

    if thr_files:
        ests = []
        for p in thr_files:
            d = _columns(p, ["p", "omega_threshold", "omega_p_formula"])
            ests.extend({"p": float(pp), "omega_threshold": float(w), "omega_p_formula": float(f)}
                        for pp, w, f in zip(d["p"], d["omega_threshold"], d["omega_p_formula"]))
        summary["threshold_estimates"] = ests

    if star_files:
        stars = []
        for p in star_files:
            try:
                data = json.loads(p.read_text())
                rec = {k: data[k] for k in ("p", "omega_star", "omega_p", "tol")}
                rec["predicate_bias"] = float(data.get("predicate_bias", 0.0))
                stars.append(rec)
            except (ValueError, KeyError) as exc:
                raise ReportError(f"{p}: corrupt omega_star record ({exc})") from exc
        summary["omega_star_estimates"] = stars
        thresholds = {e["p"]: e["omega_threshold"] for e in summary.get("threshold_estimates", [])}
        for s in stars:
            bound = thresholds.get(s["p"], s["omega_p"])
            s["omega_p_used"] = bound
            s["omega_star_le_omega_p"] = bool(s["omega_star"] <= bound + s["tol"] + s["predicate_bias"])
        summary["omega_star_le_omega_p"] = all(s["omega_star_le_omega_p"] for s in stars)

    if traj_files:
        curves = []
        for p in traj_files:
            d = _columns(p, ["t", "orbital_distance"])
            name = f"distance_{_label(p, scan_dir)}.csv"
            write_table(out_dir / name, ["t", "orbital_distance"],
                        np.column_stack([d["t"], d["orbital_distance"]]).tolist())
            curves.append((_label(p, scan_dir), d))
        summary["trajectories"] = [c[0] for c in curves]

        def draw(ax):
            for label, d in curves:
                ax.semilogy(d["t"], np.maximum(d["orbital_distance"], 1e-300), label=label)
            ax.set_xlabel("t")
            ax.set_ylabel("orbital distance")
            ax.legend(fontsize="small")
        _figure(out_dir / "distance.png", draw)

    return write_json(out_dir / "summary.json", summary)
