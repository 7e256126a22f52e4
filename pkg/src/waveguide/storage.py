"""On-disk formats: fields (binary and CSV), result tables, JSON, manifests.

Binary field layout (little-endian):

    offset 0   4 bytes   magic b"WGF1"
    offset 4   float64   L  (x half-width)
    offset 12  int64     nx
    offset 20  int64     ny
    offset 28  float64   p
    offset 36  nx*ny complex128 values, row-major (x index slow, y index fast)

CSV field layout: a header row ``L,nx,ny,p``, one row with those values,
a header row ``re,im`` and then nx*ny rows in the same row-major order.
Floats are written with 17 significant digits so files round-trip exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .grid import Field2D, GridSpec

__all__ = [
    "MAGIC",
    "write_field",
    "read_field",
    "write_field_csv",
    "read_field_csv",
    "write_table",
    "read_table",
    "write_json",
    "sha256_file",
    "write_manifest",
]

MAGIC = b"WGF1"
_HEADER = struct.Struct("<4sdqqd")
PathLike = Union[str, Path]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_field(path: PathLike, field: Field2D) -> Path:
    g = field.grid
    path = Path(path)
    vals = np.ascontiguousarray(np.asarray(field.values, dtype="<c16"))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, g.x_halfwidth, g.nx, g.ny, g.p))
        fh.write(vals.tobytes(order="C"))
    return path


def read_field(path: PathLike) -> Field2D:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, L, nx, ny, p = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a field file (magic {magic!r})")
    grid = GridSpec(L, int(nx), int(ny), p)
    body = data[_HEADER.size:]
    if len(body) != 16 * nx * ny:
        raise ValueError(f"{path}: expected {16 * nx * ny} data bytes, found {len(body)}")
    vals = np.frombuffer(body, dtype="<c16").reshape(nx, ny)
    return Field2D(grid, vals)


def write_field_csv(path: PathLike, field: Field2D) -> Path:
    g = field.grid
    path = Path(path)
    vals = np.asarray(field.values, dtype=complex).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "nx", "ny", "p"])
        w.writerow([_fmt(g.x_halfwidth), g.nx, g.ny, _fmt(g.p)])
        w.writerow(["re", "im"])
        w.writerows([_fmt(z.real), _fmt(z.imag)] for z in vals)
    return path


def read_field_csv(path: PathLike) -> Field2D:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3 or rows[0] != ["L", "nx", "ny", "p"] or rows[2] != ["re", "im"]:
        raise ValueError(f"{path}: malformed field CSV header")
    L, nx, ny, p = float(rows[1][0]), int(rows[1][1]), int(rows[1][2]), float(rows[1][3])
    grid = GridSpec(L, nx, ny, p)
    body = np.array(rows[3:], dtype=float)
    if body.shape != (nx * ny, 2):
        raise ValueError(f"{path}: expected {nx * ny} value rows")
    return Field2D(grid, (body[:, 0] + 1j * body[:, 1]).reshape(nx, ny))


def write_table(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([_fmt(x) for x in row] for row in rows)
    return path


def read_table(path: PathLike) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty table")
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path: PathLike, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def sha256_file(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: PathLike, config: dict, extra: dict,
                   name: str = "manifest.json") -> Path:
    """List every file under ``out_dir`` (except the manifest) with its hash."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != name)
    entries = [{"path": str(p.relative_to(out_dir)), "sha256": sha256_file(p),
                "bytes": p.stat().st_size} for p in files]
    return write_json(out_dir / name, {"config": config, "files": entries, **extra})
