"""Run configuration: YAML sections, defaults and validation."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Any

import yaml

from .evolution import BoundaryProgram
from .geometry import SIDES, DomainSpec, Lattice, build_lattice
from .model import MaterialParams
from .solver import SolverConfig


class ConfigError(ValueError):
    """Invalid run configuration."""


class SchemaError(ConfigError):
    """Unknown section or key, or a value of the wrong shape."""


class RangeError(ConfigError):
    """A value violates a documented invariant."""


DEFAULTS: dict[str, dict[str, Any]] = {
    "domain": {"omega": [0.0, 1.0, -0.25, 1.25], "u": [0.0, 1.0, 0.0, 1.0], "sides": ["bottom", "top"]},
    "material": {"mu": 1.0, "kappa": 1.0, "rbar": math.sqrt(2.0)},
    "scales": {"eps": 1.0 / 32.0, "rn_exponent": 0.125, "rn": None},
    "time": {"T": 1.0, "delta": 0.05},
    "boundary": {"kind": "clamped-affine", "a": [0.0, 3.0], "b": 0.0, "ramp": None},
    "solver": {"grad_tol": 1e-8, "max_iter": 5000, "restarts": 4, "perturbation": None,
               "trial_cracks": 8, "seed": 0},
    "output": {"dir": "out", "dumps": False, "crack_sets": "final", "fields": False},
    "sweep": {"eps": [1.0 / 16, 1.0 / 32, 1.0 / 64], "delta": None, "workers": None, "ratio_threshold": 0.05},
    "densities": {"gradients": [[1.0, 0.0], [0.0, 1.0], [1.0, 2.0], [-3.0, 0.5]],
                  "normals": [[0.0, 1.0], [1.0, 0.0]], "length": 1.0, "jump_factor": 10.0},
}

BOUNDARY_KINDS = ("affine", "clamped-affine", "zero")
CRACK_OUTPUT = ("final", "all")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``raw`` is the complete dictionary with defaults filled in."""

    domain: DomainSpec
    material: MaterialParams
    eps: float
    rn_exponent: float
    rn: float | None
    T: float
    delta: float
    boundary_kind: str
    a: tuple[float, float]
    b: float
    ramp: tuple[tuple[float, float], ...] | None
    solver: SolverConfig
    out_dir: str
    dumps: bool
    crack_sets: str
    fields: bool
    sweep_eps: tuple[float, ...]
    sweep_delta: tuple[float, ...]
    sweep_workers: int | None
    ratio_threshold: float
    density_gradients: tuple[tuple[float, float], ...]
    density_normals: tuple[tuple[float, float], ...]
    density_length: float
    jump_factor: float
    raw: dict = field(compare=False, repr=False, default_factory=dict)

    @property
    def R_n(self) -> float:
        return self.rn if self.rn is not None else self.eps ** (-self.rn_exponent)

    def with_scales(self, eps: float, delta: float | None = None) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw["scales"]["eps"] = eps
        if delta is not None:
            raw["time"]["delta"] = delta
        return replace(self, eps=eps, delta=delta if delta is not None else self.delta, raw=raw)

    def lattice(self) -> Lattice:
        return build_lattice(self.domain, self.eps)

    def program(self) -> BoundaryProgram:
        a, b = self.a, self.b
        if self.boundary_kind == "zero":
            a, b = (0.0, 0.0), 0.0
        return BoundaryProgram(self.T, self.delta, a=a, b=b, ramp=self.ramp,
                               clamp=self.boundary_kind == "clamped-affine")


def _merge(data: dict) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SchemaError("configuration must be a mapping of sections")
    merged = copy.deepcopy(DEFAULTS)
    for section, values in data.items():
        if section not in DEFAULTS:
            raise SchemaError(f"unknown section {section!r}; valid sections: {sorted(DEFAULTS)}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise SchemaError(f"section {section!r} must be a mapping")
        for key, v in values.items():
            if key not in DEFAULTS[section]:
                raise SchemaError(f"unknown key {section}.{key}; valid keys: {sorted(DEFAULTS[section])}")
            merged[section][key] = v
    return merged


def _floats(value, n: int | None, name: str) -> tuple[float, ...]:
    try:
        out = tuple(float(x) for x in value)
    except (TypeError, ValueError):
        raise SchemaError(f"{name} must be a list of numbers") from None
    if n is not None and len(out) != n:
        raise SchemaError(f"{name} must have {n} entries, got {len(out)}")
    return out


def _number(value, name: str) -> float:
    if isinstance(value, bool):
        raise SchemaError(f"{name} must be a number")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{name} must be a number") from None


def from_dict(data: dict | None) -> RunConfig:
    """Validate a configuration mapping and fill in defaults."""
    raw = _merge(data)
    d, m, s, t, bd = raw["domain"], raw["material"], raw["scales"], raw["time"], raw["boundary"]

    sides = d["sides"]
    if isinstance(sides, str) or not all(isinstance(x, str) for x in sides):
        raise SchemaError("domain.sides must be a list of side names")
    bad = [x for x in sides if x not in SIDES]
    if bad:
        raise RangeError(f"domain.sides: unknown side(s) {bad}; valid sides: {list(SIDES)}")
    try:
        domain = DomainSpec(_floats(d["omega"], 4, "domain.omega"), _floats(d["u"], 4, "domain.u"), tuple(sides))
    except SchemaError:
        raise
    except ValueError as exc:
        raise RangeError(f"domain: {exc}") from None

    mu, kappa, rbar = (_number(m[k], f"material.{k}") for k in ("mu", "kappa", "rbar"))
    if not mu > 0:
        raise RangeError(f"material.mu = {mu} violates mu > 0")
    if not kappa > 0:
        raise RangeError(f"material.kappa = {kappa} violates kappa > 0")
    if not rbar > 1:
        raise RangeError(f"material.rbar = {rbar} violates R-bar > 1")
    material = MaterialParams(mu, kappa, rbar)

    eps = _number(s["eps"], "scales.eps")
    if not eps > 0:
        raise RangeError(f"scales.eps = {eps} violates eps > 0")
    rn_exp = _number(s["rn_exponent"], "scales.rn_exponent")
    if not rn_exp > 0:
        raise RangeError(f"scales.rn_exponent = {rn_exp} violates exponent > 0")
    rn = None if s["rn"] is None else _number(s["rn"], "scales.rn")
    R_n = rn if rn is not None else eps ** (-rn_exp)
    if not R_n > material.R:
        raise RangeError(f"R_n = {R_n} violates R_n > R = {material.R}")

    T, delta = _number(t["T"], "time.T"), _number(t["delta"], "time.delta")
    if not (T > 0 and delta > 0):
        raise RangeError("time: T > 0 and delta > 0 required")
    n = round(T / delta)
    if n < 1 or abs(n * delta - T) > 1e-9 * T:
        raise RangeError(f"time: T/delta must be a positive integer, got {T}/{delta}")

    kind = bd["kind"]
    if kind not in BOUNDARY_KINDS:
        raise RangeError(f"boundary.kind = {kind!r}; valid kinds: {list(BOUNDARY_KINDS)}")
    a = _floats(bd["a"], 2, "boundary.a")
    b = _number(bd["b"], "boundary.b")
    ramp = None
    if bd["ramp"] is not None:
        try:
            ramp = tuple((float(p[0]), float(p[1])) for p in bd["ramp"])
        except (TypeError, ValueError, IndexError):
            raise SchemaError("boundary.ramp must be a list of [t, s] pairs") from None
        if len(ramp) < 2 or any(q[0] <= p[0] for p, q in zip(ramp, ramp[1:])):
            raise RangeError("boundary.ramp needs at least two points with increasing times")

    sv = raw["solver"]
    try:
        solver = SolverConfig(
            grad_tol=_number(sv["grad_tol"], "solver.grad_tol"),
            max_iter=int(sv["max_iter"]),
            restarts=int(sv["restarts"]),
            perturbation=None if sv["perturbation"] is None else _number(sv["perturbation"], "solver.perturbation"),
            trial_cracks=int(sv["trial_cracks"]),
            seed=int(sv["seed"]),
        )
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise RangeError(f"solver: {exc}") from None

    out = raw["output"]
    if out["crack_sets"] not in CRACK_OUTPUT:
        raise RangeError(f"output.crack_sets = {out['crack_sets']!r}; valid: {list(CRACK_OUTPUT)}")

    sw = raw["sweep"]
    sweep_eps = _floats(sw["eps"], None, "sweep.eps")
    sweep_delta = (delta,) if sw["delta"] is None else _floats(sw["delta"], None, "sweep.delta")
    if not sweep_eps or not sweep_delta or min(sweep_eps) <= 0 or min(sweep_delta) <= 0:
        raise RangeError("sweep: eps and delta lists must be nonempty and positive")
    workers = None if sw["workers"] is None else int(sw["workers"])
    ratio = _number(sw["ratio_threshold"], "sweep.ratio_threshold")

    den = raw["densities"]
    grads = tuple(_floats(z, 2, "densities.gradients entry") for z in den["gradients"])
    normals = tuple(_floats(z, 2, "densities.normals entry") for z in den["normals"])
    for nu in normals:
        if abs(math.hypot(*nu) - 1.0) > 1e-12:
            raise RangeError(f"densities.normals entry {list(nu)} violates |nu| = 1")

    return RunConfig(
        domain=domain, material=material, eps=eps, rn_exponent=rn_exp, rn=rn, T=T, delta=delta,
        boundary_kind=kind, a=a, b=b, ramp=ramp, solver=solver,
        out_dir=str(out["dir"]), dumps=bool(out["dumps"]), crack_sets=out["crack_sets"], fields=bool(out["fields"]),
        sweep_eps=sweep_eps, sweep_delta=sweep_delta, sweep_workers=workers, ratio_threshold=ratio,
        density_gradients=grads, density_normals=normals,
        density_length=_number(den["length"], "densities.length"),
        jump_factor=_number(den["jump_factor"], "densities.jump_factor"),
        raw=raw,
    )


def parse_config(path) -> RunConfig:
    """Read a YAML file and validate it."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise SchemaError(f"configuration {path} is not valid YAML: {exc}") from None
    return from_dict(data)
