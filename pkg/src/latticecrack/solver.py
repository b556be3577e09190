"""Multi-start minimisation of the history-dependent energy for one time step.

Global minimisation of the nonconvex energy is out of reach, so each step
descends from a deterministic set of starting displacements and keeps the best
result.  Because the set always contains the previous minimiser shifted by the
boundary increment, the returned displacement never has more energy than that
competitor.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.sparse.linalg import splu

from .energy import MemoryState, energy_and_gradient, trial_memories
from .geometry import NORMALS, SQRT3, Lattice
from .model import MaterialParams, psi_increment

log = logging.getLogger(__name__)

#: Weight given to springs that are removed from the elastic extension problem.
CUT_WEIGHT = 1e-9

#: Extra L-BFGS-B runs from the last iterate when a descent stops unconverged.
WARM_RESTARTS = 3


class SolverWarning(RuntimeWarning):
    """The winning descent stopped before reaching the gradient tolerance."""


@dataclass(frozen=True)
class SolverConfig:
    """Settings of the multi-start descent.

    ``grad_tol`` is relative: a descent is converged once the projected
    gradient's max-norm drops below ``grad_tol * max(1, |grad at start|)``.
    ``perturbation`` defaults to ``0.1 * R * sqrt(eps)`` when left as None.
    """

    grad_tol: float = 1e-8
    max_iter: int = 5000
    restarts: int = 4
    perturbation: float | None = None
    trial_cracks: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.restarts < 0 or self.trial_cracks < 0:
            raise ValueError("restarts and trial_cracks must be >= 0")
        if self.perturbation is not None and not self.perturbation > 0:
            raise ValueError("perturbation must be > 0")


@dataclass
class Candidate:
    label: str
    u: np.ndarray


@dataclass
class StepResult:
    """Outcome of :func:`minimize_step`."""

    u: np.ndarray
    energy: float
    winner: int
    winner_label: str
    iterations: int
    grad_norm: float
    converged: bool
    n_candidates: int
    restarts: int
    candidate_energies: list[float] = field(default_factory=list)


class StepProblem:
    """Energy restricted to the free nodes with Dirichlet values ``g`` and box bounds."""

    def __init__(self, lattice: Lattice, params: MaterialParams, state: MemoryState, g: np.ndarray):
        self.lattice = lattice
        self.params = params
        self.memory = state.values
        self.g = np.asarray(g, dtype=float)
        self.free = np.flatnonzero(~lattice.dirichlet)
        gd = self.g[lattice.dirichlet]
        if len(gd):
            self.lo, self.hi = float(gd.min()), float(gd.max())
        else:
            self.lo, self.hi = -math.inf, math.inf
        self.n_evals = 0

    def admissible(self, u: np.ndarray) -> np.ndarray:
        """Copy of ``u`` with Dirichlet values set and free values clipped to the box."""
        v = np.array(u, dtype=float, copy=True)
        d = self.lattice.dirichlet
        v[d] = self.g[d]
        v[~d] = np.clip(v[~d], self.lo, self.hi)
        return v

    def full(self, x: np.ndarray) -> np.ndarray:
        u = self.g.copy()
        u[self.free] = x
        return u

    def energy(self, u: np.ndarray) -> float:
        return energy_and_gradient(self.lattice, u, self.memory, self.params)[0]

    def fun(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        self.n_evals += 1
        e, g = energy_and_gradient(self.lattice, self.full(x), self.memory, self.params)
        return e, g[self.free]

    def set_reference(self, x: np.ndarray) -> None:
        """Base point for :meth:`fun_increment`."""
        self.x_ref = np.array(x, dtype=float, copy=True)
        self.d_ref = self.lattice.edge_differences(self.full(self.x_ref))

    def fun_increment(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Energy minus the energy at the reference point, and the gradient.

        The difference is assembled spring by spring from the displacement
        increment, so it stays accurate long after the total energy has run
        out of significant digits.
        """
        self.n_evals += 1
        lat, M, R = self.lattice, self.memory, self.params.R
        rs = math.sqrt(lat.eps)
        inc = np.zeros(lat.n_nodes)
        inc[self.free] = x - self.x_ref
        dd = lat.edge_differences(inc)
        d = self.d_ref + dd
        s, r = np.abs(d) / rs, np.abs(self.d_ref) / rs
        same = np.sign(d) == np.sign(self.d_ref)
        ds = np.where(same, np.sign(d) * dd / rs, s - r)
        mem = M > R
        cs, cr = np.where(mem, np.maximum(M, s), s), np.where(mem, np.maximum(M, r), r)
        both_free = ~mem | ((s > M) & (r > M))
        dc = np.where(both_free, ds, cs - cr)
        energy = lat.eps * float(np.sum(psi_increment(cs, cr, dc, self.params)))
        _, g = energy_and_gradient(lat, self.full(x), M, self.params)
        return energy, g[self.free]

    def projected_grad_norm(self, x: np.ndarray) -> float:
        _, g = self.fun(x)
        g = g.copy()
        g[(x <= self.lo) & (g > 0)] = 0.0
        g[(x >= self.hi) & (g < 0)] = 0.0
        return float(np.max(np.abs(g), initial=0.0))


def descend(problem: StepProblem, u0: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, float, int, float, bool]:
    """Bound-constrained quasi-Newton descent from ``u0``.

    Returns ``(u, energy, iterations, projected gradient norm, converged)``.
    The result never has more energy than the (admissible) start.
    """
    u0 = problem.admissible(u0)
    x0 = u0[problem.free]
    e0 = problem.energy(u0)
    if len(x0) == 0:
        return u0, e0, 0, 0.0, True
    g0 = problem.projected_grad_norm(x0)
    tol = cfg.grad_tol * max(1.0, g0)
    if g0 <= tol:
        return u0, e0, 0, g0, True
    bounds = None
    if math.isfinite(problem.lo):
        bounds = [(problem.lo, problem.hi)] * len(x0)
    x, gn, nit = x0, g0, 0
    # The objective is the energy increment from the run's start point, which
    # resolves decreases far below the rounding level of the total energy.
    # A stalled line search is retried from the last iterate with fresh
    # curvature pairs.
    for _ in range(WARM_RESTARTS + 1):
        problem.set_reference(x)
        res = minimize(problem.fun_increment, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max(1, cfg.max_iter - nit), "gtol": tol, "ftol": 0.0,
                                "maxcor": 20})
        nit += int(res.nit)
        xn = np.clip(res.x, problem.lo, problem.hi)
        if not problem.fun_increment(xn)[0] <= 0.0:
            break
        x = xn
        gn = problem.projected_grad_norm(x)
        if gn <= tol or nit >= cfg.max_iter or res.nit == 0:
            break
    u = problem.full(x)
    e = problem.energy(u)
    if x is x0 or not e <= e0:
        # nothing gained that the total energy can resolve
        return u0, e0, nit, g0 if x is x0 else gn, (gn <= tol) and x is not x0
    return u, e, nit, gn, gn <= tol


def elastic_extension(lattice: Lattice, g: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Minimiser of ``sum_springs w * (u_i - u_j)^2`` with ``u = g`` on Dirichlet nodes."""
    free = ~lattice.dirichlet
    u = np.array(g, dtype=float, copy=True)
    nf = int(free.sum())
    if nf == 0:
        return u
    i, j = lattice.springs[:, 0], lattice.springs[:, 1]
    n = lattice.n_nodes
    A = sp.coo_matrix((np.concatenate([-weights, -weights]),
                       (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)).tocsr()
    deg = np.bincount(i, weights=weights, minlength=n) + np.bincount(j, weights=weights, minlength=n)
    A = A + sp.diags(deg)
    fi = np.flatnonzero(free)
    di = np.flatnonzero(~free)
    Aff = A[fi][:, fi].tocsc()
    rhs = -A[fi][:, di] @ u[di]
    u[fi] = splu(Aff).solve(rhs)
    return u


def _crack_lines(lattice: Lattice, ref: np.ndarray, state: MemoryState, count: int) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Up to ``count`` distinct crystallographic lines through the most stretched triangles.

    Each line goes through a triangle centroid and runs parallel to that
    triangle's least stretched edge.  Returns ``(alpha, point, normal)``.
    """
    if count == 0:
        return []
    trial = trial_memories(lattice, state, ref)
    stretch = lattice.stretches(ref)[lattice.tri_springs]
    inside = ~lattice.dirichlet[lattice.tri_nodes].any(axis=1)
    score = np.where(inside, trial.max(axis=1), -np.inf)
    order = np.argsort(-score, kind="stable")
    cents = lattice.centroids()
    spacing = lattice.eps * SQRT3 / 6.0
    seen: set[tuple[int, int]] = set()
    lines = []
    for t in order:
        if not np.isfinite(score[t]):
            break
        alpha = int(np.argmin(stretch[t]))
        nrm = NORMALS[alpha]
        key = (alpha, int(round(float(cents[t] @ nrm) / spacing)))
        if key in seen:
            continue
        seen.add(key)
        lines.append((alpha, cents[t], nrm))
        if len(lines) == count:
            break
    return lines


def candidate_starts(lattice: Lattice, params: MaterialParams, R_n: float, u_prev: np.ndarray | None,
                     state: MemoryState, g_k: np.ndarray, g_prev: np.ndarray | None,
                     cfg: SolverConfig, stream: int = 0) -> list[Candidate]:
    """Deterministic list of starting displacements for one step.

    In order: the previous state shifted by the boundary increment (the zero
    extension of ``g_k`` on the first step), the elastic extension of ``g_k``
    with broken springs removed, ``g_k`` itself, one cut extension per trial
    crack line, and seeded random perturbations of the first candidate.
    """
    g_k = np.asarray(g_k, dtype=float)
    free = ~lattice.dirichlet
    if u_prev is None:
        first = np.where(free, 0.0, g_k)
        label = "zero-extension"
    else:
        base_prev = g_prev if g_prev is not None else g_k
        first = np.asarray(u_prev, dtype=float) + g_k - base_prev
        label = "shifted-previous"
    cands = [Candidate(label, first)]

    broken = state.values > params.R
    w = np.where(broken, CUT_WEIGHT, 1.0)
    elastic = elastic_extension(lattice, g_k, w)
    cands.append(Candidate("elastic-extension", elastic))
    cands.append(Candidate("boundary-datum", g_k.copy()))

    jump = 4.0 * R_n * math.sqrt(lattice.eps)
    pts = lattice.points
    for alpha, c, nrm in _crack_lines(lattice, elastic, state, cfg.trial_cracks):
        side = (pts - c) @ nrm > 0
        i, j = lattice.springs[:, 0], lattice.springs[:, 1]
        cut = side[i] != side[j]
        u = elastic_extension(lattice, g_k, np.where(cut | broken, CUT_WEIGHT, 1.0))
        for s in (side, ~side):
            if not (lattice.dirichlet & s).any():
                u[s & free] += jump if s is side else -jump
        cands.append(Candidate(f"crack-h{alpha + 1}", u))

    amp = cfg.perturbation if cfg.perturbation is not None else 0.1 * params.R * math.sqrt(lattice.eps)
    rng = np.random.default_rng([cfg.seed, stream])
    for r in range(cfg.restarts):
        noise = rng.standard_normal(lattice.n_nodes)
        cands.append(Candidate(f"perturbed-{r}", first + amp * np.where(free, noise, 0.0)))
    return cands


def minimize_step(lattice: Lattice, params: MaterialParams, R_n: float, u_prev: np.ndarray | None,
                  state: MemoryState, g_k: np.ndarray, g_prev: np.ndarray | None = None,
                  cfg: SolverConfig | None = None, stream: int = 0) -> StepResult:
    """Approximate minimiser of the energy with frozen memory ``state`` and datum ``g_k``."""
    cfg = cfg or SolverConfig()
    problem = StepProblem(lattice, params, state, g_k)
    cands = candidate_starts(lattice, params, R_n, u_prev, state, g_k, g_prev, cfg, stream)
    results = []
    for c in cands:
        results.append(descend(problem, c.u, cfg))
    energies = [r[1] for r in results]
    best_e = min(energies)
    ref = u_prev if u_prev is not None else np.zeros(lattice.n_nodes)
    cap = best_e + 1e-12 * max(1.0, abs(best_e))
    if u_prev is not None:
        # a tied winner must not lose to the shifted previous state
        cap = min(cap, energies[0])

    def rank(k: int):
        e = energies[k]
        near = e <= cap
        return (0 if near else 1, e if not near else 0.0, float(np.linalg.norm(results[k][0] - ref)), k)

    winner = min(range(len(cands)), key=rank)
    u, e, nit, gn, conv = results[winner]
    if not conv:
        warnings.warn(f"descent from {cands[winner].label} stopped with projected gradient {gn:.3e}",
                      SolverWarning, stacklevel=2)
    bound = max(abs(problem.lo), abs(problem.hi)) if math.isfinite(problem.lo) else math.inf
    if np.max(np.abs(u), initial=0.0) > bound * (1 + 1e-12) + 1e-300:
        raise AssertionError("minimiser violates the maximum-principle bound")
    log.debug("step %d: winner %s energy %.12g", stream, cands[winner].label, e)
    return StepResult(u=u, energy=e, winner=winner, winner_label=cands[winner].label, iterations=nit,
                      grad_norm=gn, converged=conv, n_candidates=len(cands), restarts=cfg.restarts,
                      candidate_energies=energies)
