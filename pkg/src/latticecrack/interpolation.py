"""Piecewise-affine fields on the lattice triangles and the associated crack sets.

Every triangle is split into four sub-triangles by its medial segments: the
corner piece ``alpha`` sits at the vertex opposite to the edge in direction
``alpha`` and has the medial segment ``h^alpha`` as one side; piece 3 is the
middle triangle.  A field stores one affine function per piece, so intact
triangles simply repeat the same function four times.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .energy import (
    BROKEN_SMALL,
    INTACT,
    LARGE2,
    LARGE3,
    LARGE_DEGENERATE,
    STATUS_NAMES,
    Classification,
    MemoryState,
)
from .geometry import DIRECTIONS, CrackSet, Lattice, other_directions

MID = 3


class ClassificationError(ValueError):
    """A large triangle without a unique direction at or below ``R_n``."""


@dataclass(frozen=True)
class PiecewiseField:
    """Affine data per (triangle, piece).

    ``values[t, p]`` is the value at the reference point of piece ``p``
    (the corner vertex for ``p < 3``, the centroid for the middle piece) and
    ``grads[t, p]`` the constant gradient.  ``split[t]`` tells whether the
    triangle carries a non-affine definition.
    """

    lattice: Lattice
    values: np.ndarray
    grads: np.ndarray
    split: np.ndarray

    def reference_points(self) -> np.ndarray:
        lat = self.lattice
        ref = np.empty((lat.n_triangles, 4, 2))
        ref[:, :3] = lat.points[lat.tri_nodes]
        ref[:, MID] = ref[:, :3].mean(axis=1)
        return ref

    def piece_value_at(self, tris: np.ndarray, pieces: np.ndarray, pts: np.ndarray) -> np.ndarray:
        ref = self.reference_points()[tris, pieces]
        return self.values[tris, pieces] + np.einsum("ij,ij->i", self.grads[tris, pieces], pts - ref)

    def gradient_norms(self) -> np.ndarray:
        """|grad| per (triangle, piece)."""
        return np.linalg.norm(self.grads, axis=-1)

    def integrate(self, density) -> float:
        """``sum over pieces of area * density(grad)``; ``density`` maps (..., 2) to (...)."""
        piece_area = self.lattice.triangle_area / 4.0
        vals = np.asarray(density(self.grads.reshape(-1, 2)), dtype=float)
        return piece_area * float(np.sum(vals))

    def internal_jumps(self) -> np.ndarray:
        """Largest jump across each medial segment ``h^alpha``, (n_tri, 3)."""
        lat = self.lattice
        mids = lat.spring_midpoints()
        n = lat.n_triangles
        out = np.zeros((n, 3))
        tris = np.arange(n)
        for alpha in range(3):
            b, c = other_directions(alpha)
            worst = np.zeros(n)
            for d in (b, c):
                p = mids[lat.tri_springs[:, d]]
                corner = self.piece_value_at(tris, np.full(n, alpha), p)
                middle = self.piece_value_at(tris, np.full(n, MID), p)
                worst = np.maximum(worst, np.abs(corner - middle))
            out[:, alpha] = worst
        return out

    def edge_jumps(self) -> np.ndarray:
        """Largest jump across each half of each spring, (n_springs, 2); 0 on the boundary."""
        lat = self.lattice
        out = np.zeros((lat.n_springs, 2))
        both = np.flatnonzero(lat.spring_tris[:, 1] >= 0)
        if len(both) == 0:
            return out
        t1, t2 = lat.spring_tris[both, 0], lat.spring_tris[both, 1]
        i, j = lat.springs[both, 0], lat.springs[both, 1]
        a, b = lat.points[i], lat.points[j]
        m = 0.5 * (a + b)
        for half, (node, end) in enumerate(((i, a), (j, b))):
            c1 = _corner_of(lat, t1, node)
            c2 = _corner_of(lat, t2, node)
            worst = np.zeros(len(both))
            for p in (end, m):
                f1 = self.piece_value_at(t1, c1, p)
                f2 = self.piece_value_at(t2, c2, p)
                worst = np.maximum(worst, np.abs(f1 - f2))
            out[both, half] = worst
        return out

    def jump_flags(self, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Boolean jump flags (internal (n_tri, 3), edges (n_springs, 2)).

        ``tol`` is relative to the largest absolute piece value.
        """
        scale = tol * max(1.0, float(np.max(np.abs(self.values), initial=0.0)))
        return self.internal_jumps() > scale, self.edge_jumps() > scale

    def write_csv(self, path, cls: Classification | None = None) -> None:
        """One row per triangle with piece data and jump flags."""
        internal, _ = self.jump_flags()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["triangle_id", "status", "split"]
            for p in ("c1", "c2", "c3", "mid"):
                header += [f"{p}_value", f"{p}_gx", f"{p}_gy"]
            header += ["jump_h1", "jump_h2", "jump_h3"]
            w.writerow(header)
            for t in range(self.lattice.n_triangles):
                status = STATUS_NAMES[int(cls.status[t])] if cls is not None else ""
                row = [t, status, int(self.split[t])]
                for p in range(4):
                    row += [repr(float(self.values[t, p])), repr(float(self.grads[t, p, 0])),
                            repr(float(self.grads[t, p, 1]))]
                row += [int(x) for x in internal[t]]
                w.writerow(row)


def _corner_of(lat: Lattice, tris: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Position of ``nodes[k]`` among the vertices of ``tris[k]``."""
    return np.argmax(lat.tri_nodes[tris] == nodes[:, None], axis=1)


def affine_interpolation(lattice: Lattice, u: np.ndarray) -> PiecewiseField:
    """The continuous piecewise-affine interpolation of nodal values."""
    u = np.asarray(u, dtype=float)
    grads = lattice.gradients(u)
    vert = u[lattice.tri_nodes]
    values = np.empty((lattice.n_triangles, 4))
    values[:, :3] = vert
    values[:, MID] = vert.mean(axis=1)
    return PiecewiseField(lattice, values, np.repeat(grads[:, None, :], 4, axis=1),
                          np.zeros(lattice.n_triangles, dtype=bool))


def _unique_low_direction(cls: Classification, tris: np.ndarray) -> np.ndarray:
    low = cls.trial[tris] <= cls.R_n
    if np.any(low.sum(axis=1) != 1):
        raise ClassificationError("large triangle without a unique direction at or below R_n")
    return np.argmax(low, axis=1)


def _check_consistent(cls: Classification) -> None:
    if np.any(cls.status == LARGE_DEGENERATE):
        bad = int(np.flatnonzero(cls.status == LARGE_DEGENERATE)[0])
        raise ClassificationError(
            f"triangle {bad}: trial memory above 2 R_n but fewer than two directions above R_n")


def jump_interpolation(lattice: Lattice, u: np.ndarray, cls: Classification) -> PiecewiseField:
    """Interpolation that is affine on intact triangles and jumps inside broken ones.

    Large-3 triangles keep the nodal value on each corner piece and the mean
    of the three vertex values on the middle piece.  Large-2 triangles are
    constant on both sides of ``h^m`` (``m`` the direction with trial memory
    at most ``R_n``): the corner takes its vertex value, the rest takes the
    value at the lower-index endpoint of the edge in direction ``m``.  Small
    broken triangles are constant, equal to the value at their lowest-index
    vertex.
    """
    _check_consistent(cls)
    u = np.asarray(u, dtype=float)
    f = affine_interpolation(lattice, u)
    values, grads, split = f.values.copy(), f.grads.copy(), f.split.copy()
    tn = lattice.tri_nodes

    t3 = np.flatnonzero(cls.status == LARGE3)
    values[t3, :3] = u[tn[t3]]
    values[t3, MID] = u[tn[t3]].mean(axis=1)

    t2 = np.flatnonzero(cls.status == LARGE2)
    if len(t2):
        m = _unique_low_direction(cls, t2)
        ends = np.stack([tn[t2, (m + 1) % 3], tn[t2, (m + 2) % 3]], axis=1)
        rest = u[ends.min(axis=1)]
        values[t2, :] = rest[:, None]
        values[t2, m] = u[tn[t2, m]]

    ts = np.flatnonzero(cls.status == BROKEN_SMALL)
    values[ts, :] = u[tn[ts].min(axis=1)][:, None]

    broken = cls.status != INTACT
    grads[broken] = 0.0
    split[broken] = True
    return PiecewiseField(lattice, values, grads, split)


def bar_interpolation(lattice: Lattice, u: np.ndarray, cls: Classification) -> PiecewiseField:
    """Interpolation with capped directional derivatives on large triangles.

    Outside large triangles this is the affine interpolation.  On each corner
    piece of a large triangle the derivatives along the two adjacent edges are
    kept when at most ``2 R_n / sqrt(eps)`` in modulus and set to zero
    otherwise.  The middle piece is constant (mean of the vertex values) on
    large-3 triangles and, on large-2 triangles, the affine function matching
    the two corner pieces that touch it along ``h^beta`` and ``h^gamma``.
    """
    _check_consistent(cls)
    u = np.asarray(u, dtype=float)
    f = affine_interpolation(lattice, u)
    values, grads, split = f.values.copy(), f.grads.copy(), f.split.copy()
    large = np.flatnonzero((cls.status == LARGE2) | (cls.status == LARGE3))
    if len(large) == 0:
        return f
    cap = 2.0 * cls.R_n / math.sqrt(lattice.eps)
    z = grads[large, 0]
    proj = z @ DIRECTIONS.T
    capped = np.where(np.abs(proj) <= cap, proj, 0.0)
    for alpha in range(3):
        b, c = other_directions(alpha)
        A = DIRECTIONS[[b, c]]
        rhs = capped[:, [b, c]]
        grads[large, alpha] = np.linalg.solve(A, rhs.T).T
    split[large] = True

    is3 = cls.status[large] == LARGE3
    t3 = large[is3]
    values[t3, MID] = u[lattice.tri_nodes[t3]].mean(axis=1)
    grads[t3, MID] = 0.0

    t2 = large[~is3]
    if len(t2):
        m = _unique_low_direction(cls, t2)
        ref = f.reference_points()
        mids = lattice.spring_midpoints()[lattice.tri_springs[t2]]  # (k, 3, 2)
        k = np.arange(len(t2))
        beta, gamma = (m + 1) % 3, (m + 2) % 3
        # corner beta covers h^beta = [P_m, P_gamma]; corner gamma covers h^gamma = [P_m, P_beta]
        def corner_val(piece, pts):
            return values[t2, piece] + np.einsum("ij,ij->i", grads[t2, piece], pts - ref[t2, piece])
        Pm, Pb, Pg = mids[k, m], mids[k, beta], mids[k, gamma]
        vm = corner_val(beta, Pm)
        vg = corner_val(beta, Pg)
        vb = corner_val(gamma, Pb)
        # affine through (Pm, vm), (Pb, vb), (Pg, vg)
        E = np.stack([Pb - Pm, Pg - Pm], axis=1)
        rhs = np.stack([vb - vm, vg - vm], axis=1)
        g = np.linalg.solve(E, rhs[..., None])[..., 0]
        centroid = ref[t2, MID]
        grads[t2, MID] = g
        values[t2, MID] = vm + np.einsum("ij,ij->i", g, centroid - Pm)
    return PiecewiseField(lattice, values, grads, split)


def extract_crack_set(lattice: Lattice, state: MemoryState, R: float) -> CrackSet:
    """Medial segments ``h^alpha`` whose two neighbouring edges have memory above ``R``."""
    M = state.values[lattice.tri_springs]
    tris, alphas = [], []
    over = M > R
    for alpha in range(3):
        b, c = other_directions(alpha)
        t = np.flatnonzero(over[:, b] & over[:, c])
        tris.append(t)
        alphas.append(np.full(len(t), alpha))
    tris_a = np.concatenate(tris)
    alphas_a = np.concatenate(alphas)
    order = np.lexsort((alphas_a, tris_a))
    tris_a, alphas_a = tris_a[order], alphas_a[order]
    return lattice.medial_segments(tris_a, alphas_a, [f"h{a + 1}" for a in alphas_a])


def variant_crack_sets(lattice: Lattice, cls: Classification) -> dict[str, CrackSet]:
    """The sets ``K1, K2, K3`` (one per direction), their union ``KL`` and ``KS``.

    ``Ki`` collects, on large-3 triangles, the two medial segments not parallel
    to ``v_i`` and, on large-2 triangles, the single segment ``h^m``.  ``KS``
    is the union of the boundaries of all broken triangles, stored as
    half-edges.
    """
    _check_consistent(cls)
    t3 = np.flatnonzero(cls.status == LARGE3)
    t2 = np.flatnonzero(cls.status == LARGE2)
    m = _unique_low_direction(cls, t2) if len(t2) else np.zeros(0, dtype=np.int64)
    out: dict[str, CrackSet] = {}
    for i in range(3):
        b, c = other_directions(i)
        tr = np.concatenate([t3, t3, t2])
        al = np.concatenate([np.full(len(t3), b), np.full(len(t3), c), m])
        labels = [f"V{i + 1}"] * (2 * len(t3)) + [f"h{a + 1}" for a in m]
        order = np.lexsort((al, tr))
        out[f"K{i + 1}"] = lattice.medial_segments(tr[order], al[order], [labels[k] for k in order])
    KL = out["K1"].union(out["K2"]).union(out["K3"])
    out["KL"] = KL
    out["KS"] = lattice.half_edges(np.flatnonzero(cls.broken))
    return out
