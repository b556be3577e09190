"""Measurements of the continuum quantities and ε-sweeps of the evolution."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import (
    LARGE2,
    LARGE3,
    Classification,
    MemoryState,
    classify_from_trial,
    energy_breakdown,
    update_memory,
)
from .evolution import audit_energy_bound, run_evolution
from .geometry import SQRT3, DIRECTIONS, DomainSpec, Lattice, build_lattice, crack_measure
from .interpolation import variant_crack_sets
from .model import MaterialParams, cell_density, elastic_density_Phi, phi_alpha, psi, surface_density_phi

WORKERS_ENV = "LATTICECRACK_WORKERS"


class BreakageRegimeError(ValueError):
    """The affine displacement would stretch some spring beyond ``R``."""


class LineOutsideDomainError(ValueError):
    """The prescribed crack line does not cross the domain."""


@dataclass(frozen=True)
class IdentityCheck:
    """Crack-energy identity residuals for one classification."""

    geometric: float      # (kappa / sqrt 3) * sum_i int_{K_i} phi_i
    counting: float       # kappa * eps/2 * (2 #large2 + 3 #large3)
    cra: float
    residual1: float
    residual2: float
    bound2: float         # 3 |kappa - psi(R_n)| eps #large

    @property
    def ok(self) -> bool:
        return self.residual1 <= 1e-12 and self.residual2 <= self.bound2 * (1 + 1e-12) + 1e-15


def check_crack_identity(lattice: Lattice, cls: Classification, params: MaterialParams,
                         variants: dict | None = None) -> IdentityCheck:
    """Compare the weighted length of the variant crack sets with the triangle count."""
    if variants is None:
        variants = variant_crack_sets(lattice, cls)
    kappa, eps = params.kappa, lattice.eps
    geo = kappa / SQRT3 * math.fsum(
        crack_measure(variants[f"K{i + 1}"], lambda nu, i=i: phi_alpha(nu, i)) for i in range(3))
    n2, n3 = cls.count(LARGE2), cls.count(LARGE3)
    counting = kappa * eps / 2.0 * (2 * n2 + 3 * n3)
    part = cls.large[:, None] & (cls.trial > cls.R_n)
    cra = eps / 2.0 * math.fsum(psi(cls.trial[part], params).tolist())
    bound2 = 3.0 * abs(kappa - psi(cls.R_n, params)) * eps * (n2 + n3)
    return IdentityCheck(geo, counting, cra, abs(geo - counting), abs(cra - geo), bound2)


def random_classification(lattice: Lattice, params: MaterialParams, R_n: float,
                          rng: np.random.Generator, history: int = 2) -> Classification:
    """Classification of a random displacement after a random displacement history.

    Displacement amplitudes are drawn log-uniformly so that the patterns mix
    intact, small, large-2 and large-3 triangles.
    """
    state = MemoryState.fresh(lattice)
    rs = math.sqrt(lattice.eps)

    def sample():
        amp = rs * math.exp(rng.uniform(math.log(0.2 * params.R), math.log(4.0 * R_n)))
        return amp * rng.standard_normal(lattice.n_nodes)

    for _ in range(int(rng.integers(0, history + 1))):
        state = update_memory(lattice, state, sample())
    u = sample()
    trial = np.maximum(state.values, lattice.stretches(u))[lattice.tri_springs]
    return classify_from_trial(trial, lattice.eps, params.R, R_n)


def identity_suite(n_cases: int, seed: int, params: MaterialParams | None = None,
                   eps: float = 0.125, R_n: float | None = None) -> list[IdentityCheck]:
    """Run :func:`check_crack_identity` on ``n_cases`` random classifications."""
    params = params or MaterialParams()
    R_n = R_n if R_n is not None else max(eps ** (-0.125), 1.5 * params.R)
    lattice = build_lattice(DomainSpec((0.0, 1.0, 0.0, 1.0), (0.0, 1.0, 0.0, 1.0), ()), eps)
    rng = np.random.default_rng(seed)
    return [check_crack_identity(lattice, random_classification(lattice, params, R_n, rng), params)
            for _ in range(n_cases)]


@dataclass(frozen=True)
class SurfaceMeasurement:
    normal: tuple[float, float]
    value: float          # (cra + rem) / crack length
    target: float         # phi(normal)
    crack_length: float
    cra: float
    rem: float
    bdy: float

    @property
    def relative_error(self) -> float:
        return abs(self.value - self.target) / self.target


def _clip_line(point: np.ndarray, normal: np.ndarray, box: tuple[float, float, float, float]) -> float:
    """Length of the line through ``point`` with normal ``normal`` inside ``box``."""
    tangent = np.array([-normal[1], normal[0]])
    x0, x1, y0, y1 = box
    lo, hi = -math.inf, math.inf
    for c, t, a, b in ((point[0], tangent[0], x0, x1), (point[1], tangent[1], y0, y1)):
        if abs(t) < 1e-15:
            if not a <= c <= b:
                return 0.0
            continue
        s0, s1 = (a - c) / t, (b - c) / t
        lo, hi = max(lo, min(s0, s1)), min(hi, max(s0, s1))
    return max(0.0, hi - lo)


def measure_surface_constant(normal, eps: float, params: MaterialParams | None = None,
                             R_n: float | None = None, length: float = 1.0, jump_factor: float = 10.0,
                             center=(0.0, 0.0), offset: float = 0.0) -> SurfaceMeasurement:
    """Crack energy per unit length of a prescribed straight crack.

    The domain is the square of side ``length`` around ``center``; the line
    has normal ``normal`` and passes at signed distance ``offset`` from the
    center.  Nodes on the positive side of the line are displaced by
    ``jump_factor * R_n * sqrt(eps)``, the memory is updated once and the
    large-crack plus remainder energy is divided by the line's length.
    """
    params = params or MaterialParams()
    R_n = R_n if R_n is not None else eps ** (-0.125)
    nu = np.asarray(normal, dtype=float)
    if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
        raise ValueError("normal must be a unit vector")
    cx, cy = center
    h = length / 2.0
    box = (cx - h, cx + h, cy - h, cy + h)
    lattice = build_lattice(DomainSpec(box, box, ()), eps)
    # shift off the lattice rows and columns so no node sits on the line
    point = np.array([cx + eps / 4.0, cy + SQRT3 * eps / 4.0]) + offset * nu
    crack_length = _clip_line(point, nu, box)
    if crack_length <= 0.0:
        raise LineOutsideDomainError("crack line does not cross the domain")
    jump = jump_factor * R_n * math.sqrt(eps)
    u = np.where((lattice.points - point) @ nu > 0, jump, 0.0)
    state = update_memory(lattice, MemoryState.fresh(lattice), u)
    bd = energy_breakdown(lattice, u, state, params, R_n)
    return SurfaceMeasurement(tuple(map(float, nu)), (bd.cra + bd.rem) / crack_length, surface_density_phi(nu, params),
                              crack_length, bd.cra, bd.rem, bd.bdy)


@dataclass(frozen=True)
class ElasticMeasurement:
    gradient: tuple[float, float]
    value: float          # elastic energy per unit area of the triangulated domain
    cell: float           # cell density of the gradient
    target: float         # quadratic limit density

    @property
    def gap(self) -> float:
        return abs(self.value - self.target) / self.target if self.target else abs(self.value)


def measure_elastic_constant(a, eps: float, params: MaterialParams | None = None,
                             domain: DomainSpec | None = None) -> ElasticMeasurement:
    """Energy per unit area of the affine displacement ``x -> a . x``."""
    params = params or MaterialParams()
    a = np.asarray(a, dtype=float)
    if np.any(math.sqrt(eps) * np.abs(DIRECTIONS @ a) > params.R):
        raise BreakageRegimeError("affine gradient stretches springs beyond R")
    domain = domain or DomainSpec((0.0, 1.0, 0.0, 1.0), (0.0, 1.0, 0.0, 1.0), ())
    lattice = build_lattice(domain, eps)
    u = lattice.points @ a
    bd = energy_breakdown(lattice, u, MemoryState.fresh(lattice), params, max(eps ** -0.125, 2 * params.R))
    return ElasticMeasurement(tuple(map(float, a)), bd.ela / lattice.area, cell_density(a, eps, params),
                              elastic_density_Phi(a, params))


@dataclass
class SweepCell:
    eps: float
    delta: float
    rows: list[dict] = field(default_factory=list)
    max_energy: float = float("nan")
    max_eps_broken: float = float("nan")
    error: str | None = None

    @property
    def final(self) -> dict | None:
        return self.rows[-1] if self.rows else None


@dataclass
class SweepReport:
    cells: list[SweepCell]
    checks: dict[str, bool]
    cauchy: dict[float, list[float]]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def table(self) -> list[dict]:
        out = []
        for c in self.cells:
            for r in c.rows:
                out.append({"eps": c.eps, "delta": c.delta, **r})
        return out


def _run_cell(cfg, eps: float, delta: float) -> SweepCell:
    cell = SweepCell(eps, delta)
    try:
        c = cfg.with_scales(eps, delta)
        trace = run_evolution(c.lattice(), c.material, c.R_n, c.program(), c.solver)
        cell.rows = trace.energy_rows()
        b = audit_energy_bound(trace)
        cell.max_energy, cell.max_eps_broken = b.max_energy, b.max_eps_broken
    except Exception as exc:  # a failed cell is reported, the sweep goes on
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def _ratio(row: dict, key: str) -> float:
    return row[key] / row["total"] if row["total"] > 0 else 0.0


def convergence_sweep(cfg, eps_list=None, delta_list=None, workers: int | None = None,
                      ratio_threshold: float | None = None) -> SweepReport:
    """Run the evolution for every (eps, delta) pair and check the trends at ``t = T``.

    Checks, per delta: remainder and boundary ratios non-increasing as eps
    decreases (up to 1e-12), both below ``ratio_threshold`` at the finest eps,
    and successive differences of the final total energy non-increasing in
    modulus.  The eps list is processed from coarse to fine.
    """
    eps_list = sorted(eps_list or cfg.sweep_eps, reverse=True)
    delta_list = list(delta_list or cfg.sweep_delta)
    thr = cfg.ratio_threshold if ratio_threshold is None else ratio_threshold
    if workers is None:
        workers = cfg.sweep_workers or int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(e, d) for d in delta_list for e in eps_list]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            cells = list(ex.map(_run_cell, [cfg] * len(jobs), *zip(*jobs)))
    else:
        cells = [_run_cell(cfg, e, d) for e, d in jobs]

    checks: dict[str, bool] = {}
    cauchy: dict[float, list[float]] = {}
    for d in delta_list:
        row = [c for c in cells if c.delta == d]
        tag = f"delta={d!r}"
        if any(c.error for c in row):
            checks[f"{tag}: all cells ran"] = False
            continue
        finals = [c.final for c in row]
        for key in ("rem", "bdy"):
            r = [_ratio(f, key) for f in finals]
            checks[f"{tag}: {key}/total non-increasing"] = all(b <= a + 1e-12 for a, b in zip(r, r[1:]))
            checks[f"{tag}: {key}/total < {thr} at finest eps"] = bool(r[-1] < thr)
        totals = [f["total"] for f in finals]
        diffs = [abs(b - a) for a, b in zip(totals, totals[1:])]
        cauchy[d] = diffs
        checks[f"{tag}: Cauchy differences non-increasing"] = all(b <= a for a, b in zip(diffs, diffs[1:]))
        maxima = [c.max_energy for c in row]
        if len(row) > 1 and min(maxima) > 0:
            slope = np.polyfit(np.log([c.eps for c in row]), np.log(maxima), 1)[0]
            checks[f"{tag}: max energy flat in eps (|slope| <= 0.1)"] = bool(abs(slope) <= 0.1)
    return SweepReport(cells, checks, cauchy)
