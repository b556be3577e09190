"""Triangular lattice on a rectangle, its triangles and springs, and crack segments.

Nodes are the points ``eps * (l1 * v1 + l2 * v2)`` with integer lattice
coordinates ``(l1, l2)`` lying in the outer rectangle.  Directions are indexed
0, 1, 2 for ``v1 = (1, 0)``, ``v2 = (1/2, sqrt(3)/2)`` and ``v3 = v2 - v1``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

SQRT3 = math.sqrt(3.0)

#: Unit lattice directions v1, v2, v3 (rows).
DIRECTIONS = np.array([[1.0, 0.0], [0.5, SQRT3 / 2.0], [-0.5, SQRT3 / 2.0]])

#: Integer lattice-coordinate offsets of the three directions.
OFFSETS = np.array([[1, 0], [0, 1], [-1, 1]])

#: Unit normals of segments parallel to each direction (second component >= 0).
NORMALS = np.array([[0.0, 1.0], [-SQRT3 / 2.0, 0.5], [SQRT3 / 2.0, 0.5]])

SIDES = ("left", "right", "bottom", "top")


class LatticeError(ValueError):
    """Raised when a domain cannot carry a usable lattice."""


class EmptyInteriorError(LatticeError):
    """No triangle of the lattice lies inside the inner rectangle."""


class LayerTooThinError(LatticeError):
    """Constrained sides are present but no node carries a prescribed value."""


def other_directions(alpha: int) -> tuple[int, int]:
    """Return the two direction indices different from ``alpha``, ascending."""
    return tuple(d for d in range(3) if d != alpha)  # type: ignore[return-value]


@dataclass(frozen=True)
class DomainSpec:
    """Outer rectangle ``omega`` and inner rectangle ``inner`` as (x0, x1, y0, y1).

    Nodes outside ``inner`` carry prescribed values.  On a constrained side the
    outer rectangle must extend strictly beyond the inner one; on the remaining
    sides the two rectangles share their edge.
    """

    omega: tuple[float, float, float, float]
    inner: tuple[float, float, float, float]
    constrained: tuple[str, ...] = SIDES

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", tuple(float(c) for c in self.omega))
        object.__setattr__(self, "inner", tuple(float(c) for c in self.inner))
        object.__setattr__(self, "constrained", tuple(self.constrained))
        ox0, ox1, oy0, oy1 = self.omega
        ux0, ux1, uy0, uy1 = self.inner
        if not (ox1 > ox0 and oy1 > oy0):
            raise ValueError(f"outer rectangle must have positive area, got {self.omega}")
        if not (ux1 > ux0 and uy1 > uy0):
            raise ValueError(f"inner rectangle must have positive area, got {self.inner}")
        for side in self.constrained:
            if side not in SIDES:
                raise ValueError(f"unknown side {side!r}; valid sides are {SIDES}")
        if not (ox0 <= ux0 and ux1 <= ox1 and oy0 <= uy0 and uy1 <= oy1):
            raise ValueError("inner rectangle must lie inside the outer rectangle")
        gaps = {"left": ux0 - ox0, "right": ox1 - ux1, "bottom": uy0 - oy0, "top": oy1 - uy1}
        for side, gap in gaps.items():
            if side in self.constrained and gap <= 0.0:
                raise ValueError(f"constrained side {side!r} needs a layer of positive width")

    @classmethod
    def square_with_layer(cls, width: float = 1.0, layer: float = 0.25,
                          constrained: Sequence[str] = SIDES) -> "DomainSpec":
        """``[0, width]^2`` as inner set, padded by ``layer`` on the constrained sides."""
        pad = {s: (layer if s in constrained else 0.0) for s in SIDES}
        omega = (-pad["left"], width + pad["right"], -pad["bottom"], width + pad["top"])
        return cls(omega, (0.0, width, 0.0, width), tuple(constrained))

    def layer_width(self) -> float:
        """Smallest layer width over the constrained sides (inf if none)."""
        ox0, ox1, oy0, oy1 = self.omega
        ux0, ux1, uy0, uy1 = self.inner
        gaps = {"left": ux0 - ox0, "right": ox1 - ux1, "bottom": uy0 - oy0, "top": oy1 - uy1}
        return min((gaps[s] for s in self.constrained), default=math.inf)


@dataclass(frozen=True)
class Segment:
    """A straight segment with a unit normal."""

    p1: tuple[float, float]
    p2: tuple[float, float]
    normal: tuple[float, float]

    @property
    def length(self) -> float:
        return math.hypot(self.p2[0] - self.p1[0], self.p2[1] - self.p1[1])


@dataclass(frozen=True)
class CrackSet:
    """A finite union of segments of length ``eps/2``.

    Each segment carries the triangle it lies in, a variant label and an
    integer key.  Keys identify segments across crack sets of the same lattice:
    medial segments use ``3 * triangle + alpha`` and half-edges use
    ``-(2 * spring + half) - 1``.
    """

    p1: np.ndarray
    p2: np.ndarray
    normals: np.ndarray
    triangles: np.ndarray
    keys: np.ndarray
    variants: tuple[str, ...]

    @classmethod
    def empty(cls) -> "CrackSet":
        z2 = np.zeros((0, 2))
        zi = np.zeros(0, dtype=np.int64)
        return cls(z2, z2.copy(), z2.copy(), zi, zi.copy(), ())

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def lengths(self) -> np.ndarray:
        return np.hypot(*(self.p2 - self.p1).T)

    def total_length(self) -> float:
        return math.fsum(self.lengths)

    def key_set(self) -> set[int]:
        return set(self.keys.tolist())

    def segments(self) -> Iterator[Segment]:
        for a, b, n in zip(self.p1, self.p2, self.normals):
            yield Segment(tuple(a), tuple(b), tuple(n))

    def union(self, other: "CrackSet") -> "CrackSet":
        """Union with duplicate keys removed (first occurrence wins)."""
        keys = np.concatenate([self.keys, other.keys])
        _, first = np.unique(keys, return_index=True)
        first.sort()
        variants = self.variants + other.variants
        return CrackSet(
            np.concatenate([self.p1, other.p1])[first],
            np.concatenate([self.p2, other.p2])[first],
            np.concatenate([self.normals, other.normals])[first],
            np.concatenate([self.triangles, other.triangles])[first],
            keys[first],
            tuple(variants[i] for i in first),
        )

    def write_csv(self, path) -> None:
        """One row per segment: x1,y1,x2,y2,nx,ny,triangle_id,variant."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "y1", "x2", "y2", "nx", "ny", "triangle_id", "variant"])
            for a, b, n, t, v in zip(self.p1, self.p2, self.normals, self.triangles, self.variants):
                w.writerow([repr(float(a[0])), repr(float(a[1])), repr(float(b[0])), repr(float(b[1])),
                            repr(float(n[0])), repr(float(n[1])), int(t), v])


@dataclass(frozen=True, eq=False)
class Lattice:
    """Nodes, springs and triangles of ``eps * L`` inside the outer rectangle.

    Attributes
    ----------
    eps : float
        Lattice spacing.
    coords : (n_nodes, 2) int array
        Lattice coordinates ``(l1, l2)`` of the nodes.
    points : (n_nodes, 2) float array
        Physical positions.
    dirichlet : (n_nodes,) bool array
        True for nodes outside the inner rectangle.
    springs : (n_springs, 2) int array
        Node pairs ``(i, j)`` with ``x_j - x_i = eps * v_d``.
    spring_dir : (n_springs,) int array
        Direction index ``d`` of each spring.
    spring_tris : (n_springs, 2) int array
        Incident triangles, -1 padded; the first column is always filled.
    tri_nodes : (n_tri, 3) int array
        Column ``d`` holds the vertex opposite to the edge in direction ``d``.
    tri_springs : (n_tri, 3) int array
        Column ``d`` holds the edge in direction ``d``.
    tri_up : (n_tri,) bool array
        Orientation flag.
    """

    eps: float
    domain: DomainSpec
    coords: np.ndarray
    points: np.ndarray
    dirichlet: np.ndarray
    springs: np.ndarray
    spring_dir: np.ndarray
    spring_tris: np.ndarray
    tri_nodes: np.ndarray
    tri_springs: np.ndarray
    tri_up: np.ndarray
    _node_grid: np.ndarray = field(repr=False)
    _grid_origin: tuple[int, int] = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.points)

    @property
    def n_springs(self) -> int:
        return len(self.springs)

    @property
    def n_triangles(self) -> int:
        return len(self.tri_nodes)

    @property
    def triangle_area(self) -> float:
        return SQRT3 / 4.0 * self.eps ** 2

    @property
    def area(self) -> float:
        """Area of the union of all triangles."""
        return self.n_triangles * self.triangle_area

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet

    @property
    def spring_n_tris(self) -> np.ndarray:
        return 1 + (self.spring_tris[:, 1] >= 0)

    @property
    def boundary_springs(self) -> np.ndarray:
        """Indices of springs with exactly one incident triangle."""
        return np.flatnonzero(self.spring_tris[:, 1] < 0)

    def node_at(self, l1: int, l2: int) -> int:
        """Node index at lattice coordinates, or -1."""
        a, b = l1 - self._grid_origin[0], l2 - self._grid_origin[1]
        if 0 <= a < self._node_grid.shape[0] and 0 <= b < self._node_grid.shape[1]:
            return int(self._node_grid[a, b])
        return -1

    def spring_of(self, tri: int, direction: int) -> int:
        """The edge of triangle ``tri`` parallel to ``v_direction``."""
        return int(self.tri_springs[tri, direction])

    def spring_triangles(self, spring: int) -> list[int]:
        return [int(t) for t in self.spring_tris[spring] if t >= 0]

    def triangle_vertices(self, tri: int) -> np.ndarray:
        """Vertex positions (3, 2), column order of ``tri_nodes``."""
        return self.points[self.tri_nodes[tri]]

    def centroids(self) -> np.ndarray:
        return self.points[self.tri_nodes].mean(axis=1)

    def spring_midpoints(self) -> np.ndarray:
        return 0.5 * (self.points[self.springs[:, 0]] + self.points[self.springs[:, 1]])

    def edge_differences(self, u: np.ndarray) -> np.ndarray:
        """``u[j] - u[i]`` for every spring, oriented along its direction."""
        return u[self.springs[:, 1]] - u[self.springs[:, 0]]

    def stretches(self, u: np.ndarray) -> np.ndarray:
        """Rescaled stretch ``eps^{-1/2} |u(x) - u(x')|`` per spring."""
        return np.abs(self.edge_differences(u)) / math.sqrt(self.eps)

    def gradients(self, u: np.ndarray) -> np.ndarray:
        """Gradient of the affine interpolation of ``u`` on every triangle, (n_tri, 2)."""
        diff = self.edge_differences(u)
        d0 = diff[self.tri_springs[:, 0]] / self.eps
        d1 = diff[self.tri_springs[:, 1]] / self.eps
        gx = d0
        gy = (d1 - 0.5 * d0) * (2.0 / SQRT3)
        return np.column_stack([gx, gy])

    def crack_segment(self, tri: int, alpha: int) -> Segment:
        """Segment joining the midpoints of the two edges not parallel to ``v_alpha``."""
        mids = self.spring_midpoints_of(tri)
        b, c = other_directions(alpha)
        return Segment(tuple(mids[b]), tuple(mids[c]), tuple(NORMALS[alpha]))

    def spring_midpoints_of(self, tri: int) -> np.ndarray:
        s = self.tri_springs[tri]
        return 0.5 * (self.points[self.springs[s, 0]] + self.points[self.springs[s, 1]])

    def medial_segments(self, tris: np.ndarray, alphas: np.ndarray, variant: str | Sequence[str]) -> CrackSet:
        """Vectorised :meth:`crack_segment` for pairs ``(tris[k], alphas[k])``."""
        tris = np.asarray(tris, dtype=np.int64)
        alphas = np.asarray(alphas, dtype=np.int64)
        if len(tris) == 0:
            return CrackSet.empty()
        others = np.array([other_directions(a) for a in range(3)])
        mids = self.spring_midpoints()
        sb = self.tri_springs[tris, others[alphas, 0]]
        sc = self.tri_springs[tris, others[alphas, 1]]
        if isinstance(variant, str):
            labels = (variant,) * len(tris)
        else:
            labels = tuple(variant)
        return CrackSet(mids[sb], mids[sc], NORMALS[alphas], tris, 3 * tris + alphas, labels)

    def half_edges(self, tris: np.ndarray, variant: str = "S") -> CrackSet:
        """The six half-edges of the boundaries of ``tris``, without duplicates."""
        tris = np.asarray(tris, dtype=np.int64)
        if len(tris) == 0:
            return CrackSet.empty()
        s = self.tri_springs[tris].ravel()
        owner = np.repeat(tris, 3)
        s = np.repeat(s, 2)
        owner = np.repeat(owner, 2)
        half = np.tile([0, 1], len(s) // 2)
        keys = -(2 * s + half) - 1
        _, first = np.unique(keys, return_index=True)
        first.sort()
        s, owner, half, keys = s[first], owner[first], half[first], keys[first]
        a = self.points[self.springs[s, 0]]
        b = self.points[self.springs[s, 1]]
        m = 0.5 * (a + b)
        p1 = np.where(half[:, None] == 0, a, m)
        p2 = np.where(half[:, None] == 0, m, b)
        d = DIRECTIONS[self.spring_dir[s]]
        normals = np.column_stack([-d[:, 1], d[:, 0]])
        return CrackSet(p1, p2, normals, owner, keys, (variant,) * len(s))


def crack_measure(K: CrackSet, weight: Callable[[np.ndarray], np.ndarray]) -> float:
    """Sum of ``length * weight(normal)`` over the segments of ``K``.

    ``weight`` receives the (n, 2) array of normals and returns n values.
    """
    if len(K) == 0:
        return 0.0
    w = np.asarray(weight(K.normals), dtype=float).reshape(-1)
    return math.fsum(K.lengths * w)


def _lattice_range(lo: float, hi: float, step: float) -> tuple[int, int]:
    return math.floor(lo / step) - 1, math.ceil(hi / step) + 1


def build_lattice(spec: DomainSpec, eps: float) -> Lattice:
    """Enumerate nodes, springs and triangles of ``eps * L`` inside ``spec.omega``.

    Raises
    ------
    EmptyInteriorError
        If no triangle fits in the domain or no node lies inside the inner
        rectangle.
    LayerTooThinError
        If there are constrained sides but no node outside the inner rectangle.
    LatticeError
        If a spring has no incident triangle (domain only one row thick).
    """
    if not eps > 0:
        raise ValueError(f"lattice spacing must be positive, got {eps}")
    eps = float(eps)
    tol = 1e-12 * eps
    h = eps * SQRT3 / 2.0
    ox0, ox1, oy0, oy1 = spec.omega
    l2_lo, l2_hi = _lattice_range(oy0, oy1, h)
    l1_lo = math.floor(ox0 / eps - l2_hi / 2.0) - 1
    l1_hi = math.ceil(ox1 / eps - l2_lo / 2.0) + 1
    # one extra column/row of padding so neighbour lookups never go out of range
    L1, L2 = np.meshgrid(np.arange(l1_lo, l1_hi + 2), np.arange(l2_lo, l2_hi + 2), indexing="ij")
    X = eps * (L1 + 0.5 * L2)
    Y = h * L2
    inside = (X >= ox0 - tol) & (X <= ox1 + tol) & (Y >= oy0 - tol) & (Y <= oy1 + tol)
    inside[-1, :] = False
    inside[:, -1] = False
    inside[0, :] = False
    inside[:, 0] = False

    # row-major ordering: by l2, then l1
    idx_t = np.argwhere(inside.T)  # rows (b, a)
    a_idx, b_idx = idx_t[:, 1], idx_t[:, 0]
    n_nodes = len(a_idx)
    grid = np.full(inside.shape, -1, dtype=np.int64)
    grid[a_idx, b_idx] = np.arange(n_nodes)
    coords = np.column_stack([L1[a_idx, b_idx], L2[a_idx, b_idx]])
    points = np.column_stack([X[a_idx, b_idx], Y[a_idx, b_idx]])

    # springs, one block per direction
    spring_grids = []
    ends, dirs = [], []
    count = 0
    na, nb = grid.shape
    src = grid[1:-1, 1:-1]
    for d, (da, db) in enumerate(OFFSETS):
        # the padding ring holds no node, so interior cells have in-range neighbours
        dst = grid[1 + da:na - 1 + da, 1 + db:nb - 1 + db]
        ok = (src >= 0) & (dst >= 0)
        src_nodes, dst_nodes = src[ok], dst[ok]
        order = np.argsort(src_nodes, kind="stable")
        ids = np.empty(len(src_nodes), dtype=np.int64)
        ids[order] = count + np.arange(len(src_nodes))
        sg = np.full_like(grid, -1)
        inner = sg[1:-1, 1:-1]
        inner[ok] = ids
        ends.append(np.column_stack([src_nodes[order], dst_nodes[order]]))
        dirs.append(np.full(len(src_nodes), d, dtype=np.int64))
        spring_grids.append(sg)
        count += len(src_nodes)
    springs = np.concatenate(ends)
    spring_dir = np.concatenate(dirs)

    # triangles per grid cell (a, b): up = (a,b),(a+1,b),(a,b+1); down = (a+1,b),(a+1,b+1),(a,b+1)
    g00 = grid[:-1, :-1]
    g10 = grid[1:, :-1]
    g01 = grid[:-1, 1:]
    g11 = grid[1:, 1:]
    up_ok = (g00 >= 0) & (g10 >= 0) & (g01 >= 0)
    dn_ok = (g10 >= 0) & (g11 >= 0) & (g01 >= 0)
    s0, s1, s2 = spring_grids
    up_springs = np.stack([s0[:-1, :-1], s1[:-1, :-1], s2[1:, :-1]], axis=-1)
    dn_springs = np.stack([s0[:-1, 1:], s1[1:, :-1], s2[1:, :-1]], axis=-1)
    up_nodes = np.stack([g01, g10, g00], axis=-1)
    dn_nodes = np.stack([g10, g01, g11], axis=-1)
    # row-major in (l2, l1), up before down
    ok_all = np.stack([up_ok, dn_ok], axis=-1).transpose(1, 0, 2)  # (b, a, o)
    nodes_all = np.stack([up_nodes, dn_nodes], axis=-2).transpose(1, 0, 2, 3)
    springs_all = np.stack([up_springs, dn_springs], axis=-2).transpose(1, 0, 2, 3)
    flat_ok = ok_all.reshape(-1)
    tri_nodes = nodes_all.reshape(-1, 3)[flat_ok]
    tri_springs = springs_all.reshape(-1, 3)[flat_ok]
    tri_up = np.tile([True, False], ok_all.size // 2)[flat_ok]
    if len(tri_nodes) == 0 or np.any(tri_springs < 0):
        if len(tri_nodes) == 0:
            raise EmptyInteriorError(f"no triangle of spacing {eps} fits in the domain")
        raise LatticeError("triangle edge missing from spring table")

    n_springs = len(springs)
    spring_tris = np.full((n_springs, 2), -1, dtype=np.int64)
    n_inc = np.zeros(n_springs, dtype=np.int64)
    tri_ids = np.arange(len(tri_nodes))
    for d in range(3):
        s = tri_springs[:, d]
        # each spring is an edge of at most one up and one down triangle
        for mask in (tri_up, ~tri_up):
            ss = s[mask]
            spring_tris[ss, n_inc[ss]] = tri_ids[mask]
            n_inc[ss] += 1
    # keep incident triangles sorted by id
    swap = (spring_tris[:, 1] >= 0) & (spring_tris[:, 1] < spring_tris[:, 0])
    spring_tris[swap] = spring_tris[swap][:, ::-1]
    if np.any(n_inc == 0):
        raise LatticeError("domain too thin: some springs belong to no triangle")

    dirichlet = ~_in_inner(points, spec, tol)
    if dirichlet.all():
        raise EmptyInteriorError("no node lies inside the inner rectangle")
    if spec.constrained and not dirichlet.any():
        raise LayerTooThinError(f"no Dirichlet node on the constrained sides at spacing {eps}")

    return Lattice(
        eps=eps,
        domain=spec,
        coords=coords,
        points=points,
        dirichlet=dirichlet,
        springs=springs,
        spring_dir=spring_dir,
        spring_tris=spring_tris,
        tri_nodes=tri_nodes,
        tri_springs=tri_springs,
        tri_up=tri_up,
        _node_grid=grid,
        _grid_origin=(int(l1_lo), int(l2_lo)),
    )


def _in_inner(points: np.ndarray, spec: DomainSpec, tol: float) -> np.ndarray:
    """Inner rectangle, open on constrained sides and closed on the others."""
    ux0, ux1, uy0, uy1 = spec.inner
    x, y = points[:, 0], points[:, 1]
    c = spec.constrained
    ok = (x > ux0 + tol) if "left" in c else (x >= ux0 - tol)
    ok &= (x < ux1 - tol) if "right" in c else (x <= ux1 + tol)
    ok &= (y > uy0 + tol) if "bottom" in c else (y >= uy0 - tol)
    ok &= (y < uy1 - tol) if "top" in c else (y <= uy1 + tol)
    return ok
