"""Moments, probe statistics and cross-method comparison.

Probe densities are kernel estimates with a Gaussian kernel and Silverman's
bandwidth, computed either from the chaos surrogate (sampled at the probe) or
from per-sample ensemble values.
"""

from dataclasses import dataclass

import numpy as np

from .gpc import evaluate_basis
from .mesh import interpolate_pressure, interpolate_velocity

__all__ = [
    "ProbeSpec",
    "PdfCurve",
    "FieldMoments",
    "moments",
    "probe_coefficients",
    "probe_samples",
    "silverman_bandwidth",
    "kde_curve",
    "probe_pdf",
    "l1_distance",
    "quantile_range",
    "integrated_velocity_variance",
    "compare_methods",
]

_FIELDS = ("u_x", "u_y", "p")


@dataclass
class ProbeSpec:
    x: float
    y: float
    fieldname: str = "u_x"
    n_samples: int = 100_000

    def __post_init__(self):
        if self.fieldname not in _FIELDS:
            raise ValueError(f"field must be one of {_FIELDS}")

    @property
    def point(self):
        return (self.x, self.y)


@dataclass
class FieldMoments:
    mean: dict       # field name -> nodal array
    variance: dict   # field name -> nodal array


def _split_fields(row, mesh):
    nv = mesh.n_vnodes
    return {"u_x": row[:nv], "u_y": row[nv:2 * nv], "p": row[2 * nv:]}


def moments(v, mesh, n_modes):
    """Mean and variance fields of an interleaved coefficient vector: the mean
    is mode 0 and the variance the sum of squared higher-mode coefficients
    (orthonormal basis)."""
    n_det = mesh.n_u + mesh.n_p
    X = np.asarray(v).reshape(n_modes, n_det)
    mean = _split_fields(X[0], mesh)
    var_row = (X[1:] ** 2).sum(axis=0) if n_modes > 1 else np.zeros(n_det)
    return FieldMoments(mean=mean, variance=_split_fields(var_row, mesh))


def ensemble_moments(ens, mesh):
    """Mean and variance fields of a Monte Carlo ensemble."""
    return FieldMoments(mean=_split_fields(ens.mean, mesh),
                        variance=_split_fields(ens.variance, mesh))


def integrated_velocity_variance(fm, ws):
    """Velocity variance integrated over the domain with lumped mass weights."""
    w = ws.lumped_velocity_mass()
    return float(w @ fm.variance["u_x"] + w @ fm.variance["u_y"])


def _probe_value(row, mesh, probe):
    if probe.fieldname == "p":
        return interpolate_pressure(mesh, row[mesh.n_u:], [probe.point])[0]
    comp = 0 if probe.fieldname == "u_x" else 1
    return interpolate_velocity(mesh, row[:mesh.n_u], [probe.point])[0, comp]


def probe_coefficients(v, mesh, n_modes, probe):
    """Per-mode coefficient of the probed field at the probe point."""
    n_det = mesh.n_u + mesh.n_p
    X = np.asarray(v).reshape(n_modes, n_det)
    return np.array([_probe_value(X[k], mesh, probe) for k in range(n_modes)])


def probe_samples(source, mesh, probe, basis=None, seed=0):
    """Sampled values of the probed quantity.

    For a coefficient vector the chaos surrogate is evaluated at
    `probe.n_samples` seeded Gaussian draws; for a Monte Carlo ensemble the
    stored per-sample solutions are probed directly.
    """
    if hasattr(source, "solutions"):  # ensemble
        sols = source.solutions[source.converged]
        return np.array([_probe_value(s, mesh, probe) for s in sols])
    if basis is None:
        raise ValueError("chaos basis required to sample a coefficient vector")
    coeff = probe_coefficients(source, mesh, basis.size, probe)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((probe.n_samples, basis.dim))
    vals = np.empty(probe.n_samples)
    chunk = 20_000
    for start in range(0, probe.n_samples, chunk):
        block = xi[start:start + chunk]
        vals[start:start + chunk] = evaluate_basis(basis, block) @ coeff
    return vals


def silverman_bandwidth(samples):
    """0.9 min(std, IQR/1.34) n^(-1/5), floored for degenerate samples."""
    x = np.asarray(samples)
    std = x.std()
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(std, (q75 - q25) / 1.34)
    bw = 0.9 * spread * x.size ** (-0.2)
    if bw <= 0 or not np.isfinite(bw):
        bw = 1e-9 * max(1.0, abs(float(x.mean())))
    return bw


def kde_curve(samples, n_grid=512, bandwidth=None, pad=4.0):
    """Gaussian-kernel density estimate on a regular grid."""
    x = np.asarray(samples, dtype=float)
    bw = silverman_bandwidth(x) if bandwidth is None else bandwidth
    lo, hi = x.min() - pad * bw, x.max() + pad * bw
    grid = np.linspace(lo, hi, n_grid)
    dens = np.zeros(n_grid)
    chunk = 50_000
    inv = 1.0 / (np.sqrt(2.0 * np.pi) * bw * x.size)
    for start in range(0, x.size, chunk):
        block = x[start:start + chunk]
        z = (grid[:, None] - block[None, :]) / bw
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    return grid, dens * inv, bw


@dataclass
class PdfCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n_samples: int

    def mass(self):
        return float(np.trapz(self.density, self.grid))


def probe_pdf(source, mesh, probe, basis=None, seed=0, n_grid=512):
    """Kernel density estimate of the probed quantity; integrates to one
    within discretization error of the grid."""
    vals = probe_samples(source, mesh, probe, basis=basis, seed=seed)
    grid, dens, bw = kde_curve(vals, n_grid=n_grid)
    return PdfCurve(grid=grid, density=dens, bandwidth=bw, n_samples=vals.size)


def l1_distance(a, b):
    """L1 distance between two density curves on the union of their ranges."""
    lo = min(a.grid[0], b.grid[0])
    hi = max(a.grid[-1], b.grid[-1])
    grid = np.linspace(lo, hi, max(a.grid.size, b.grid.size) * 2)
    fa = np.interp(grid, a.grid, a.density, left=0.0, right=0.0)
    fb = np.interp(grid, b.grid, b.density, left=0.0, right=0.0)
    return float(np.trapz(np.abs(fa - fb), grid))


def quantile_range(samples, lo=0.05, hi=0.95):
    qlo, qhi = np.quantile(np.asarray(samples), [lo, hi])
    return float(qhi - qlo)


def relative_field_distance(fa, fb):
    """Relative discrete 2-norm difference per field name."""
    out = {}
    for name in _FIELDS:
        ref = np.linalg.norm(fa[name])
        diff = np.linalg.norm(fa[name] - fb[name])
        out[name] = float(diff / ref) if ref > 0 else float(diff)
    return out


def compare_methods(results, mesh, basis, probes, seed=0):
    """Cross-method comparison report.

    `results` maps a method name to either an interleaved coefficient vector
    (Galerkin, collocation) or a Monte Carlo ensemble.  Emits pairwise probe
    pdf L1 distances, probe means/standard errors, and moment-field
    differences between coefficient-based methods.
    """
    report = {"probes": [], "moment_distances": {}}
    curves = {}
    probe_stats = {}
    for probe in probes:
        key = f"{probe.fieldname}@({probe.x},{probe.y})"
        entry = {"probe": key, "l1": {}, "stats": {}}
        for name, res in results.items():
            vals = probe_samples(res, mesh, probe, basis=basis, seed=seed)
            curves[(key, name)] = kde_curve(vals)
            n = vals.size
            entry["stats"][name] = {
                "mean": float(vals.mean()),
                "std": float(vals.std(ddof=1)),
                "stderr": float(vals.std(ddof=1) / np.sqrt(n)),
                "n": int(n),
            }
        names = list(results)
        for i, na in enumerate(names):
            for nb in names[i + 1:]:
                ga, da, _ = curves[(key, na)]
                gb, db, _ = curves[(key, nb)]
                a = PdfCurve(ga, da, 0.0, 0)
                b = PdfCurve(gb, db, 0.0, 0)
                entry["l1"][f"{na}|{nb}"] = l1_distance(a, b)
        report["probes"].append(entry)
        probe_stats[key] = entry["stats"]

    coeff_methods = {n: r for n, r in results.items() if not hasattr(r, "solutions")}
    names = list(coeff_methods)
    for i, na in enumerate(names):
        for nb in names[i + 1:]:
            ma = moments(coeff_methods[na], mesh, basis.size)
            mb = moments(coeff_methods[nb], mesh, basis.size)
            report["moment_distances"][f"{na}|{nb}"] = {
                "mean": relative_field_distance(ma.mean, mb.mean),
                "variance": relative_field_distance(ma.variance, mb.variance),
            }
    return report
