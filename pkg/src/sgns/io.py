"""Output files: legacy-ASCII VTK fields, CSV tables and JSON manifests.

All writers format floats with repr-faithful precision and carry no
timestamps, so seeded reruns produce byte-identical artifacts.
"""

import csv
import json
import sys
from pathlib import Path

import numpy as np

__all__ = [
    "write_vtk_velocity_fields",
    "write_vtk_pressure_fields",
    "write_field_csv",
    "write_rows_csv",
    "write_json",
    "write_manifest",
]

_FMT = "%.17g"


def _fmt(x):
    return _FMT % float(x)


def _vtk_header(f, title, coords, cells):
    f.write("# vtk DataFile Version 3.0\n")
    f.write(title + "\n")
    f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    f.write(f"POINTS {coords.shape[0]} double\n")
    for x, y in coords:
        f.write(f"{_fmt(x)} {_fmt(y)} 0\n")
    f.write(f"CELLS {cells.shape[0]} {cells.shape[0] * 5}\n")
    for c in cells:
        f.write("4 " + " ".join(str(int(i)) for i in c) + "\n")
    f.write(f"CELL_TYPES {cells.shape[0]}\n")
    f.write("9\n" * cells.shape[0])


def _vtk_point_data(f, n, fields):
    f.write(f"POINT_DATA {n}\n")
    for name, values in fields.items():
        f.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in np.asarray(values):
            f.write(_fmt(v) + "\n")


def _q2_subquads(mesh):
    # Each biquadratic element rendered as four bilinear quads on its 9 nodes.
    sub = np.array([[0, 1, 4, 3], [1, 2, 5, 4], [3, 4, 7, 6], [4, 5, 8, 7]])
    return mesh.cells_q2[:, sub].reshape(-1, 4)


def write_vtk_velocity_fields(mesh, path, fields):
    """Scalar fields on velocity nodes (one value per Q2 node)."""
    path = Path(path)
    with path.open("w") as f:
        _vtk_header(f, "velocity-node fields", mesh.vel_coords, _q2_subquads(mesh))
        _vtk_point_data(f, mesh.n_vnodes, fields)
    return path


def write_vtk_pressure_fields(mesh, path, fields):
    """Scalar fields on pressure nodes (one value per Q1 node)."""
    path = Path(path)
    with path.open("w") as f:
        _vtk_header(f, "pressure-node fields", mesh.pre_coords, mesh.cells_q1)
        _vtk_point_data(f, mesh.n_pnodes, fields)
    return path


def write_field_csv(path, coords, columns):
    """Node table: x, y followed by one column per named field."""
    path = Path(path)
    names = list(columns)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y"] + names)
        cols = [np.asarray(columns[n]) for n in names]
        for i, (x, y) in enumerate(coords):
            w.writerow([_fmt(x), _fmt(y)] + [_fmt(c[i]) for c in cols])
    return path


def write_rows_csv(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in row])
    return path


def write_json(path, obj):
    path = Path(path)
    with path.open("w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def write_manifest(outdir, config_dict, seed):
    """Everything needed to reproduce a run: resolved config, seed, versions."""
    import scipy

    from . import __version__

    manifest = {
        "config": config_dict,
        "seed": seed,
        "versions": {
            "sgns": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    return write_json(Path(outdir) / "manifest.json", manifest)
