"""CSV and legacy-VTK writers."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(rows, path, columns=CSV_COLUMNS):
    """Write dict rows (or a DiagnosticsSeries) with the given column order.

    Floats are printed with 17 significant digits so they round-trip.
    """
    records = getattr(rows, "records", rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in records:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_csv(path):
    """Read a CSV written by ``write_csv`` into a dict of float arrays."""
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = [[float(x) for x in row] for row in rd]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: arr[:, j] for j, name in enumerate(header)}


def write_vtk(mesh, m, path, title="magnetization"):
    """Legacy ASCII unstructured grid with tetrahedra and point vectors ``m``."""
    m = np.asarray(m, dtype=float)
    if m.shape != (mesh.n_nodes, 3):
        raise ValueError(f"m has shape {m.shape}, expected ({mesh.n_nodes}, 3)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, ne = mesh.n_nodes, mesh.n_elements
    with path.open("w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        np.savetxt(fh, mesh.vertices, fmt="%.17g")
        fh.write(f"CELLS {ne} {5 * ne}\n")
        np.savetxt(fh, np.column_stack([np.full(ne, 4), mesh.tets]), fmt="%d")
        fh.write(f"CELL_TYPES {ne}\n")
        np.savetxt(fh, np.full(ne, 10), fmt="%d")
        fh.write(f"POINT_DATA {n}\nVECTORS m double\n")
        np.savetxt(fh, m, fmt="%.17g")
    return path


def read_vtk_vectors(path):
    """Parse points, tets and the ``m`` vectors back from ``write_vtk`` output."""
    tokens = Path(path).read_text().split()
    i = tokens.index("POINTS")
    n = int(tokens[i + 1])
    pts = np.array(tokens[i + 3:i + 3 + 3 * n], dtype=float).reshape(n, 3)
    i = tokens.index("CELLS")
    ne = int(tokens[i + 1])
    cells = np.array(tokens[i + 3:i + 3 + 5 * ne], dtype=np.int64).reshape(ne, 5)
    i = tokens.index("VECTORS")
    m = np.array(tokens[i + 3:i + 3 + 3 * n], dtype=float).reshape(n, 3)
    return pts, cells[:, 1:], m


def write_summary(values, path):
    path = Path(path)
    with path.open("w") as fh:
        for key, val in values.items():
            fh.write(f"{key} = {val}\n")
    return path
