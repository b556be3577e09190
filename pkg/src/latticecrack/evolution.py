"""Time-incremental evolution and the audits run on its trace.

Step ``k`` minimises the energy with the memory of steps ``j < k`` frozen and
then folds ``u_k`` into the memory.  The audits check nesting of the crack
sets, stability against the shifted previous state, the one-sided energy
estimate against the work of the boundary data, and the uniform energy bound.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energy import (
    LARGE2,
    LARGE3,
    Classification,
    EnergyBreakdown,
    MemoryState,
    classify_triangles,
    energy_breakdown,
    total_energy,
    update_memory,
)
from .geometry import CrackSet, Lattice
from .interpolation import extract_crack_set, jump_interpolation, variant_crack_sets
from .model import MaterialParams, cell_density_grad, psi
from .solver import SolverConfig, StepResult, minimize_step


@dataclass(frozen=True)
class BoundaryProgram:
    """Prescribed displacement ``g(t, x)`` on a uniform time grid.

    The scaled family is ``s(t) * (a . P(x) + b)`` where ``s`` interpolates
    ``ramp`` (pairs ``(t, s)``) linearly and ``P`` is the identity, or the
    projection onto the inner rectangle when ``clamp`` is set (constant data
    across each Dirichlet layer).  Passing ``table`` (one row of nodal values
    per step) overrides the scaled family.
    """

    T: float
    delta: float
    a: tuple[float, float] = (0.0, 0.0)
    b: float = 0.0
    ramp: tuple[tuple[float, float], ...] | None = None
    clamp: bool = False
    table: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not (self.T > 0 and self.delta > 0):
            raise ValueError("T and delta must be positive")
        n = round(self.T / self.delta)
        if n < 1 or abs(n * self.delta - self.T) > 1e-9 * self.T:
            raise ValueError(f"T/delta must be an integer, got {self.T}/{self.delta}")
        if self.ramp is None:
            object.__setattr__(self, "ramp", ((0.0, 0.0), (float(self.T), 1.0)))
        ts = [p[0] for p in self.ramp]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            raise ValueError("ramp times must be strictly increasing")
        if self.table is not None and len(self.table) != n + 1:
            raise ValueError(f"table needs {n + 1} rows, got {len(self.table)}")

    @property
    def n_steps(self) -> int:
        return round(self.T / self.delta)

    def time(self, k: int) -> float:
        return k * self.delta

    def scale(self, t: float) -> float:
        ts, ss = zip(*self.ramp)
        return float(np.interp(t, ts, ss))

    def profile(self, lattice: Lattice) -> np.ndarray:
        x = lattice.points
        if self.clamp:
            ux0, ux1, uy0, uy1 = lattice.domain.inner
            x = np.column_stack([np.clip(x[:, 0], ux0, ux1), np.clip(x[:, 1], uy0, uy1)])
        return x @ np.asarray(self.a, dtype=float) + self.b

    def values(self, k: int, lattice: Lattice) -> np.ndarray:
        """Nodal values of ``g`` at step ``k``."""
        if self.table is not None:
            return np.asarray(self.table[k], dtype=float)
        return self.scale(self.time(k)) * self.profile(lattice)

    def rate_sup_integral(self, k: int, lattice: Lattice) -> float:
        """``int_{t_k}^{t_{k+1}} max_triangles |grad d/dt g(tau)| dtau``."""
        if self.table is not None:
            dg = lattice.gradients(self.table[k + 1] - self.table[k])
            return float(np.max(np.linalg.norm(dg, axis=1), initial=0.0))
        t0, t1 = self.time(k), self.time(k + 1)
        ts, ss = zip(*self.ramp)
        knots = sorted({t0, t1, *[t for t in ts if t0 < t < t1]})
        var = sum(abs(self.scale(b) - self.scale(a)) for a, b in zip(knots, knots[1:]))
        gp = lattice.gradients(self.profile(lattice))
        return var * float(np.max(np.linalg.norm(gp, axis=1), initial=0.0))


@dataclass
class StepRecord:
    k: int
    t: float
    u: np.ndarray
    memory: np.ndarray  # stored memory used at this step (steps j < k)
    breakdown: EnergyBreakdown
    n_broken: int
    n_large2: int
    n_large3: int
    cracks: CrackSet
    energy: float
    shifted_energy: float | None
    solver: StepResult


@dataclass
class EvolutionTrace:
    lattice: Lattice
    params: MaterialParams
    R_n: float
    program: BoundaryProgram
    steps: list[StepRecord] = field(default_factory=list)

    def classification(self, k: int) -> Classification:
        s = self.steps[k]
        return classify_triangles(self.lattice, MemoryState(s.memory), s.u, self.params, self.R_n)

    def energy_rows(self) -> list[dict]:
        rows = []
        for s in self.steps:
            b = s.breakdown
            rows.append({"step": s.k, "t": s.t, "ela": b.ela, "cra": b.cra, "rem": b.rem, "bdy": b.bdy,
                         "total": b.total, "n_broken": s.n_broken, "n_large2": s.n_large2,
                         "n_large3": s.n_large3})
        return rows


def run_evolution(lattice: Lattice, params: MaterialParams, R_n: float, program: BoundaryProgram,
                  solver_cfg: SolverConfig | None = None) -> EvolutionTrace:
    """Run the incremental scheme for ``k = 0 .. T/delta``."""
    solver_cfg = solver_cfg or SolverConfig()
    trace = EvolutionTrace(lattice, params, R_n, program)
    state = MemoryState.fresh(lattice)
    u_prev = g_prev = None
    for k in range(program.n_steps + 1):
        g_k = program.values(k, lattice)
        res = minimize_step(lattice, params, R_n, u_prev, state, g_k, g_prev, solver_cfg, stream=k)
        u = res.u
        energy = total_energy(lattice, u, state, params)
        if not math.isfinite(energy):
            raise FloatingPointError(f"non-finite energy at step {k}")
        shifted = None
        if u_prev is not None:
            shifted = total_energy(lattice, shifted_previous(lattice, u_prev, g_k, g_prev), state, params)
        cls = classify_triangles(lattice, state, u, params, R_n)
        bd = energy_breakdown(lattice, u, state, params, R_n, cls)
        new_state = update_memory(lattice, state, u)
        cracks = extract_crack_set(lattice, new_state, params.R)
        trace.steps.append(StepRecord(
            k=k, t=program.time(k), u=u, memory=state.values, breakdown=bd,
            n_broken=cls.n_broken, n_large2=cls.count(LARGE2), n_large3=cls.count(LARGE3),
            cracks=cracks, energy=energy, shifted_energy=shifted, solver=res))
        state, u_prev, g_prev = new_state, u, g_k
    return trace


def shifted_previous(lattice: Lattice, u_prev: np.ndarray, g_k: np.ndarray, g_prev: np.ndarray) -> np.ndarray:
    """``u_prev + g_k - g_prev``, with Dirichlet entries set to ``g_k`` exactly."""
    xi = u_prev + g_k - g_prev
    xi[lattice.dirichlet] = g_k[lattice.dirichlet]
    return xi


@dataclass
class BalanceReport:
    lhs: np.ndarray          # E^k(u_k) - E^0(u_0)
    work: np.ndarray         # work of the boundary data up to t_k
    slack: np.ndarray        # work - lhs
    allowance: np.ndarray
    work_scale: np.ndarray

    @property
    def flagged(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.slack < -self.allowance)]

    @property
    def ok(self) -> bool:
        return not self.flagged


def audit_energy_balance(trace: EvolutionTrace, tol_abs: float = 1e-8, factor: float = 10.0) -> BalanceReport:
    """Compare the energy increase with the work of the boundary data.

    The work up to ``t_k`` is ``sum_{l<k} int DPsi_cell(grad u_hat_l) . grad(g_{l+1} - g_l)``
    with the jump interpolation ``u_hat_l`` frozen on each step.  A step is
    flagged when ``work - (E^k - E^0) < -(tol_abs + factor * sqrt(eps) * work_scale)``
    where ``work_scale = (1 + eps * #broken) * (1 + mu * area * G) * int |grad d/dt g|_inf``,
    ``#broken`` counts triangles broken by the stored memory and ``G`` is the
    largest data gradient so far.
    """
    lat, params, prog = trace.lattice, trace.params, trace.program
    eps = lat.eps
    n = len(trace.steps)
    E0 = trace.steps[0].energy
    lhs = np.array([s.energy - E0 for s in trace.steps])
    work = np.zeros(n)
    rate = np.zeros(n)
    G = np.zeros(n)
    piece_area = lat.triangle_area / 4.0
    g_prev = prog.values(0, lat)
    G_run = float(np.max(np.linalg.norm(lat.gradients(g_prev), axis=1), initial=0.0))
    G[0] = G_run
    for k in range(1, n):
        g_k = prog.values(k, lat)
        dG = lat.gradients(g_k - g_prev)
        field_prev = jump_interpolation(lat, trace.steps[k - 1].u, trace.classification(k - 1))
        dens = cell_density_grad(field_prev.grads, eps, params)
        work[k] = work[k - 1] + piece_area * float(np.einsum("tpi,ti->", dens, dG))
        rate[k] = rate[k - 1] + prog.rate_sup_integral(k - 1, lat)
        G_run = max(G_run, float(np.max(np.linalg.norm(lat.gradients(g_k), axis=1), initial=0.0)))
        G[k] = G_run
        g_prev = g_k
    n_stored = np.array([
        int(np.count_nonzero((s.memory[lat.tri_springs] > params.R).any(axis=1))) for s in trace.steps
    ])
    scale = (1.0 + eps * n_stored) * (1.0 + params.mu * lat.area * G) * rate
    allowance = tol_abs + factor * math.sqrt(eps) * scale
    return BalanceReport(lhs, work, work - lhs, allowance, scale)


def audit_irreversibility(trace: EvolutionTrace) -> tuple[bool, int | None]:
    """Check that every crack set contains the previous one; return the first violating step."""
    prev: set[int] = set()
    for s in trace.steps:
        cur = s.cracks.key_set()
        if not prev <= cur:
            return False, s.k
        prev = cur
    return True, None


def audit_stability(trace: EvolutionTrace) -> tuple[bool, list[int]]:
    """Check ``E(u_k) <= E(u_{k-1} + g_k - g_{k-1})`` for every step ``k >= 1``."""
    bad = [s.k for s in trace.steps if s.shifted_energy is not None and not s.energy <= s.shifted_energy]
    return not bad, bad


def audit_crack_inclusion(trace: EvolutionTrace) -> tuple[bool, list[int]]:
    """Large-crack segments of each minimiser belong to the crack set after its memory update."""
    bad = []
    for k, s in enumerate(trace.steps):
        KL = variant_crack_sets(trace.lattice, trace.classification(k))["KL"]
        if not KL.key_set() <= s.cracks.key_set():
            bad.append(s.k)
    return not bad, bad


@dataclass
class EnergyBoundReport:
    max_energy: float
    max_eps_broken: float
    count_bound_ok: bool


def audit_energy_bound(trace: EvolutionTrace) -> EnergyBoundReport:
    """Largest energy and largest ``eps * #broken``; checks ``eps * #broken <= 2 E / psi(R)`` per step."""
    eps = trace.lattice.eps
    psiR = psi(trace.params.R, trace.params)
    max_e = max((s.breakdown.total for s in trace.steps), default=0.0)
    counts = [eps * s.n_broken for s in trace.steps]
    ok = all(c <= 2.0 / psiR * s.breakdown.total * (1 + 1e-12) for c, s in zip(counts, trace.steps))
    return EnergyBoundReport(max_e, max(counts, default=0.0), ok)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path, header: Sequence[str], rows: Sequence[dict]) -> None:
    """CSV with a header row; floats use the shortest round-trip representation."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) for h in header])


ENERGY_COLUMNS = ("step", "t", "ela", "cra", "rem", "bdy", "total", "n_broken", "n_large2", "n_large3")


def write_trace(trace: EvolutionTrace, outdir, crack_sets: str = "final", dumps: bool = False) -> list[str]:
    """Persist energies, solver diagnostics, audits, crack sets and optional displacements."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    p = os.path.join(outdir, "energies.csv")
    write_rows(p, ENERGY_COLUMNS, trace.energy_rows())
    written.append(p)

    p = os.path.join(outdir, "diagnostics.csv")
    diag = [{"step": s.k, "iterations": s.solver.iterations, "restarts": s.solver.restarts,
             "grad_norm": s.solver.grad_norm, "winner": s.solver.winner,
             "winner_label": s.solver.winner_label, "converged": int(s.solver.converged)}
            for s in trace.steps]
    write_rows(p, ("step", "iterations", "restarts", "grad_norm", "winner", "winner_label", "converged"), diag)
    written.append(p)

    bal = audit_energy_balance(trace)
    p = os.path.join(outdir, "audits.csv")
    rows = [{"step": s.k, "energy": s.energy,
             "shifted_energy": "" if s.shifted_energy is None else s.shifted_energy,
             "lhs": bal.lhs[i], "work": bal.work[i], "slack": bal.slack[i], "allowance": bal.allowance[i]}
            for i, s in enumerate(trace.steps)]
    write_rows(p, ("step", "energy", "shifted_energy", "lhs", "work", "slack", "allowance"), rows)
    written.append(p)

    if crack_sets == "all":
        for s in trace.steps:
            p = os.path.join(outdir, f"cracks_step{s.k:04d}.csv")
            s.cracks.write_csv(p)
            written.append(p)
    elif trace.steps:
        p = os.path.join(outdir, "cracks_final.csv")
        trace.steps[-1].cracks.write_csv(p)
        written.append(p)

    if dumps:
        p = os.path.join(outdir, "displacements.csv")
        pts = trace.lattice.points
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "x", "y", "u"])
            for s in trace.steps:
                for (x, y), val in zip(pts, s.u):
                    w.writerow([s.k, repr(float(x)), repr(float(y)), repr(float(val))])
        written.append(p)
    return written
