"""Experiment configuration: JSON-backed, validated on load.

The mean viscosity follows from the mean Reynolds number and the geometry's
characteristic length (channel height 2, cavity side 1), and the coefficient
expansion degree is locked to twice the solution degree unless overridden
consistently.
"""

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .krylov import FgmresConfig, PreconditionerSpec
from .nonlinear import LinearSolverSpec, NonlinearConfig
from .postproc import ProbeSpec

__all__ = ["ExperimentConfig", "ConfigError", "load_config"]

_GEOMETRIES = ("cavity", "channel", "channel-obstacle")
_METHODS = ("galerkin", "mc", "collocation")

# Probe points in the regions of largest solution variance.
_DEFAULT_PROBES = [
    {"x": 4.01, "y": -0.4339, "field": "u_x"},
    {"x": 4.01, "y": 0.4339, "field": "u_x"},
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    geometry: str = "channel-obstacle"
    nx: int = 48
    ny: int = 8
    obstacle: list = None               # (xa, xb, ya, yb); None keeps the default
    reynolds: float = 100.0
    cov: float = 0.1
    dim: int = 2                        # stochastic dimension
    degree: int = 3                     # solution chaos degree
    coeff_degree: int = None            # viscosity chaos degree, default 2*degree
    length_x: float = 3.0
    length_y: float = 0.5
    method: str = "galerkin"
    precond: dict = field(default_factory=dict)
    nonlinear: dict = field(default_factory=dict)
    fgmres: dict = field(default_factory=dict)
    mc_samples: int = 1000
    smolyak_level: int = 4
    probes: list = None
    seed: int = 0

    def __post_init__(self):
        if self.geometry not in _GEOMETRIES:
            raise ConfigError(f"geometry must be one of {_GEOMETRIES}")
        if self.method not in _METHODS:
            raise ConfigError(f"method must be one of {_METHODS}")
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("nx and ny must be at least 2")
        if not 0.0 <= self.cov < 1.0:
            raise ConfigError("cov must lie in [0, 1)")
        if self.reynolds <= 0:
            raise ConfigError("reynolds must be positive")
        if self.dim < 1 or self.degree < 0:
            raise ConfigError("dim must be >= 1 and degree >= 0")
        if self.coeff_degree is None:
            self.coeff_degree = 2 * self.degree
        if self.coeff_degree < self.degree:
            raise ConfigError("coefficient degree must be at least the solution "
                              "degree (default is twice the solution degree)")
        if self.mc_samples < 2:
            raise ConfigError("mc_samples must be at least 2")
        if self.smolyak_level < 1:
            raise ConfigError("smolyak_level must be at least 1")
        if self.probes is None:
            self.probes = ([] if self.geometry == "cavity"
                           else [dict(p) for p in _DEFAULT_PROBES])
        try:
            self.precond_spec()
            self.nonlinear_config()
            self.fgmres_config()
            self.probe_specs()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived objects ----------------------------------------------------

    @property
    def mean_viscosity(self):
        length = 1.0 if self.geometry == "cavity" else 2.0
        return length / self.reynolds

    def precond_spec(self):
        return PreconditionerSpec(**self.precond)

    def nonlinear_config(self):
        return NonlinearConfig(**self.nonlinear)

    def fgmres_config(self):
        return FgmresConfig(**self.fgmres) if self.fgmres else FgmresConfig(
            tol=1e-8, maxit=600)

    def linear_solver_spec(self):
        return LinearSolverSpec(method="fgmres", precond=self.precond_spec(),
                                fgmres=self.fgmres_config())

    def probe_specs(self):
        out = []
        for p in self.probes:
            q = dict(p)
            fieldname = q.pop("field", q.pop("fieldname", "u_x"))
            out.append(ProbeSpec(x=q.pop("x"), y=q.pop("y"), fieldname=fieldname,
                                 **q))
        return out

    def to_dict(self):
        return asdict(self)


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
