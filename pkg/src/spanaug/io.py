"""CSV tables, companion files and run manifests."""

from __future__ import annotations

import csv
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .graph import read_table as read_matrix  # noqa: F401  (re-exported)
from .kernels import BACKEND


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows) -> None:
    """Header row, '.' decimals, floats at 17 significant digits (exact round trip)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_matrix(path, mat, header_prefix: str = "c", integer: bool = False) -> None:
    mat = np.asarray(mat)
    if mat.ndim == 1:
        mat = mat[:, None]
    header = [f"{header_prefix}{i}" for i in range(mat.shape[1])]
    write_csv(path, header, [[int(x) if integer else float(x) for x in row] for row in mat])


def companions(edge_path) -> dict[str, Path]:
    """``foo.edges`` pairs with ``foo.features.csv``, ``foo.labels.csv``, ``foo.positions.csv``."""
    p = Path(edge_path)
    stem = p.with_suffix("") if p.suffix == ".edges" else p
    return {k: Path(f"{stem}.{k}.csv") for k in ("features", "labels", "positions")}


def write_manifest(out_dir, command: str, flags: dict, argv: list[str], seed) -> Path:
    path = Path(out_dir) / f"manifest_{command}.json"
    payload = {
        "command": command,
        "flags": {k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items() if k != "func"},
        "argv": argv,
        "seed": seed,
        "version": __version__,
        "backend": BACKEND,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
    }
    path.write_text(json.dumps(payload, indent=1, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path
