"""Spring memory, broken-triangle classification and the history-dependent energy.

A spring whose stored memory ``M`` exceeds ``R`` is charged
``max(psi(M), psi(s))`` for the current stretch ``s``; otherwise it is charged
``psi(s)``.  Each unordered spring enters the total with weight ``eps``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Lattice
from .model import MaterialParams, psi, psi_prime

INTACT = 0
BROKEN_SMALL = 1
LARGE2 = 2
LARGE3 = 3
#: Some memory exceeds 2 R_n but only one direction exceeds R_n.  This cannot
#: come from a genuine displacement history, only from hand-made memory states.
LARGE_DEGENERATE = 4

STATUS_NAMES = {
    INTACT: "intact",
    BROKEN_SMALL: "broken-small",
    LARGE2: "broken-large-2",
    LARGE3: "broken-large-3",
    LARGE_DEGENERATE: "broken-large-degenerate",
}


@dataclass(frozen=True)
class MemoryState:
    """Running maximum of the rescaled stretch, one entry per spring."""

    values: np.ndarray

    @classmethod
    def fresh(cls, lattice: Lattice) -> "MemoryState":
        return cls(np.zeros(lattice.n_springs))

    def broken_springs(self, params: MaterialParams) -> np.ndarray:
        return np.flatnonzero(self.values > params.R)


def update_memory(lattice: Lattice, state: MemoryState, u: np.ndarray) -> MemoryState:
    """Fold the stretches of ``u`` into the running maximum."""
    return MemoryState(np.maximum(state.values, lattice.stretches(u)))


def trial_memories(lattice: Lattice, state: MemoryState, u: np.ndarray) -> np.ndarray:
    """Per (triangle, direction) maximum of stored memory and current stretch, (n_tri, 3)."""
    trial = np.maximum(state.values, lattice.stretches(u))
    return trial[lattice.tri_springs]


def trial_memory(lattice: Lattice, state: MemoryState, u: np.ndarray, tri: int, direction: int) -> float:
    s = lattice.spring_of(tri, direction)
    i, j = lattice.springs[s]
    return max(float(state.values[s]), abs(u[j] - u[i]) / math.sqrt(lattice.eps))


@dataclass(frozen=True)
class Classification:
    """Broken status of every triangle for one (memory, displacement) pair.

    ``trial`` holds the trial memories (n_tri, 3); ``status`` one of the
    module-level status codes per triangle.
    """

    eps: float
    R: float
    R_n: float
    trial: np.ndarray
    status: np.ndarray

    @property
    def above_R(self) -> np.ndarray:
        return self.trial > self.R

    @property
    def above_Rn(self) -> np.ndarray:
        return self.trial > self.R_n

    @property
    def above_2Rn(self) -> np.ndarray:
        return self.trial > 2.0 * self.R_n

    @property
    def broken(self) -> np.ndarray:
        return self.status != INTACT

    @property
    def large(self) -> np.ndarray:
        return self.status >= LARGE2

    def count(self, code: int) -> int:
        return int(np.count_nonzero(self.status == code))

    @property
    def n_broken(self) -> int:
        return int(np.count_nonzero(self.broken))


def classify_from_trial(trial: np.ndarray, eps: float, R: float, R_n: float) -> Classification:
    """Classification from given trial memories (n_tri, 3)."""
    trial = np.asarray(trial, dtype=float)
    broken = (trial > R).any(axis=1)
    large = broken & (trial > 2.0 * R_n).any(axis=1)
    n_big = (trial > R_n).sum(axis=1)
    status = np.full(len(trial), INTACT, dtype=np.int8)
    status[broken] = BROKEN_SMALL
    status[large & (n_big == 2)] = LARGE2
    status[large & (n_big == 3)] = LARGE3
    status[large & (n_big < 2)] = LARGE_DEGENERATE
    return Classification(eps, R, R_n, trial, status)


def classify_triangles(lattice: Lattice, state: MemoryState, u: np.ndarray,
                       params: MaterialParams, R_n: float) -> Classification:
    """Broken, large-2 and large-3 triangles for the trial memories of ``u``."""
    return classify_from_trial(trial_memories(lattice, state, u), lattice.eps, params.R, R_n)


def spring_energies(stretch: np.ndarray, memory: np.ndarray, params: MaterialParams) -> np.ndarray:
    """Per-spring energy ``E`` (without the ``eps`` weight)."""
    charged = np.where(memory > params.R, np.maximum(memory, stretch), stretch)
    return psi(charged, params)


def total_energy(lattice: Lattice, u: np.ndarray, state: MemoryState, params: MaterialParams) -> float:
    """``eps * sum_springs E`` for the stored memory ``state``."""
    E = spring_energies(lattice.stretches(u), state.values, params)
    return lattice.eps * float(np.sum(E))


def energy_and_gradient(lattice: Lattice, u: np.ndarray, memory: np.ndarray,
                        params: MaterialParams) -> tuple[float, np.ndarray]:
    """Total energy and its gradient with respect to all nodal values.

    On the memory branch (``M > R`` and stretch ``<= M``) a spring contributes
    nothing to the gradient; at the tie the flat branch is taken.
    """
    eps = lattice.eps
    rs = math.sqrt(eps)
    i, j = lattice.springs[:, 0], lattice.springs[:, 1]
    diff = u[j] - u[i]
    s = np.abs(diff) / rs
    mem_branch = memory > params.R
    charged = np.where(mem_branch, np.maximum(memory, s), s)
    energy = eps * float(np.sum(psi(charged, params)))
    flat = mem_branch & (s <= memory)
    force = np.where(flat, 0.0, rs * psi_prime(diff / rs, params))
    n = lattice.n_nodes
    grad = np.bincount(j, weights=force, minlength=n) - np.bincount(i, weights=force, minlength=n)
    return energy, grad


def energy_gradient(lattice: Lattice, u: np.ndarray, state: MemoryState, params: MaterialParams) -> np.ndarray:
    return energy_and_gradient(lattice, u, state.values, params)[1]


@dataclass(frozen=True)
class EnergyBreakdown:
    """Elastic, crack, remainder and boundary parts of the total energy."""

    ela: float
    cra: float
    rem: float
    bdy: float

    @property
    def total(self) -> float:
        return self.ela + self.cra + self.rem + self.bdy

    def as_dict(self) -> dict[str, float]:
        return {"ela": self.ela, "cra": self.cra, "rem": self.rem, "bdy": self.bdy, "total": self.total}


def energy_breakdown(lattice: Lattice, u: np.ndarray, state: MemoryState, params: MaterialParams,
                     R_n: float, cls: Classification | None = None) -> EnergyBreakdown:
    """Split the energy into triangle sums (weight ``eps/2``) plus a boundary top-up.

    Triangle contributions per direction are ``psi(trial)`` when the trial
    memory exceeds ``R`` and ``psi(stretch)`` otherwise, which equals the
    spring energy.  They are routed to
    ``ela`` (intact triangles), ``cra`` (large triangles, trial > R_n) or
    ``rem`` (everything else on broken triangles).  ``bdy`` adds ``eps/2 * E``
    for springs with a single incident triangle, so the four parts add up to
    :func:`total_energy`.
    """
    if cls is None:
        cls = classify_triangles(lattice, state, u, params, R_n)
    stretch = lattice.stretches(u)
    E_spring = spring_energies(stretch, state.values, params)
    E = E_spring[lattice.tri_springs]
    half = 0.5 * lattice.eps
    broken = cls.broken
    intact = ~broken
    large = cls.large
    crack_part = large[:, None] & (cls.trial > R_n)
    rem_part = broken[:, None] & ~crack_part
    ela = half * float(np.sum(E[intact]))
    cra = half * float(np.sum(E[crack_part]))
    rem = half * float(np.sum(E[rem_part]))
    bdy = half * float(np.sum(E_spring[lattice.boundary_springs]))
    return EnergyBreakdown(ela, cra, rem, bdy)
