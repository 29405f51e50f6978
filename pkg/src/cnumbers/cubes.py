"""
Intrinsic dyadic cubes on the support of a discrete measure, and the
standard dyadic grid of R^d.

The intrinsic construction is net based.  A greedy farthest-point ordering
of the support gives every point an insertion radius rho_i (the distance to
the points inserted before it).  The level-j net is

    N_j = {i : rho_i >= r_j - h},   r_j = scale_unit * 2^-j

with h the resolution of the measure, so nets are nested and every point is
within r_j of N_j.  Cells are built top-down: the coarsest cells are the
Voronoi cells of N_jmin, and each level-j cell is split among the points of
N_{j+1} it contains by nearest center (ties to the lowest index).  Nesting
and the partition property hold by construction; the diameter constant C0 is
measured and reported rather than guaranteed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from cnumbers.measures import DiscreteMeasure, MeasureError, diameter


@dataclass
class Cube:
    id: int
    level: int
    center_index: int
    center: np.ndarray
    members: np.ndarray
    mass: float
    diam: float
    side: float
    parent: Optional[int] = None
    children: list = field(default_factory=list)
    singleton: bool = False
    members_set: frozenset = field(default=frozenset(), repr=False)

    @property
    def size(self) -> int:
        return int(self.members.size)

    @property
    def ball_radius(self) -> float:
        """Radius of B_Q = B(z_Q, 3 diam(Q)), floored at the side for singletons."""
        return 3.0 * self.diam if self.diam > 0 else self.side


@dataclass
class CubeTree:
    mu: DiscreteMeasure = field(repr=False)
    cubes: list
    levels: dict
    j_min: int
    j_max: int
    scale_unit: float
    c0: float
    meta: dict = field(default_factory=dict)

    def level(self, j: int) -> list:
        return [self.cubes[i] for i in self.levels[j]]

    def __getitem__(self, cid: int) -> Cube:
        return self.cubes[cid]

    @property
    def roots(self) -> list:
        return self.level(self.j_min)

    def descendants(self, R: Cube, include_self: bool = True) -> list:
        """All cubes Q contained in R (R first, then breadth first)."""
        out = [R] if include_self else []
        frontier = [R]
        while frontier:
            nxt = []
            for q in frontier:
                nxt.extend(self.cubes[c] for c in q.children)
            out.extend(nxt)
            frontier = nxt
        return out

    def cube_of(self, index: int, level: int) -> Cube:
        """The level-j cube containing point `index`."""
        cid = self.meta["cube_at"][level].get(int(index))
        if cid is None:
            raise KeyError(index)
        return self.cubes[cid]

    def to_dict(self) -> dict:
        def node(c: Cube) -> dict:
            return {"level": c.level, "center": c.center.tolist(), "side": c.side,
                    "mass": c.mass, "children": [node(self.cubes[k]) for k in c.children]}
        return {"scale_unit": self.scale_unit, "j_min": self.j_min, "j_max": self.j_max,
                "c0": self.c0, "roots": [node(c) for c in self.roots]}


def farthest_point_order(points: np.ndarray, start: int = 0):
    """Greedy farthest-point ordering; returns (order, insertion radii)."""
    m = points.shape[0]
    order = np.empty(m, dtype=np.intp)
    rho = np.empty(m)
    dist = np.full(m, np.inf)
    cur = start
    rho_cur = np.inf
    for k in range(m):
        order[k] = cur
        rho[k] = rho_cur
        diff = points - points[cur]
        np.minimum(dist, np.sqrt(np.einsum("ij,ij->i", diff, diff)), out=dist)
        dist[cur] = -1.0
        # argmax returns the lowest index among ties
        cur = int(np.argmax(dist))
        rho_cur = float(dist[cur])
    return order, rho


def _nearest(tree_pts: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Index into tree_pts of the nearest point, ties to the lowest index."""
    tree = cKDTree(tree_pts)
    k = min(8, tree_pts.shape[0])
    dist, idx = tree.query(query, k=k)
    dist = np.atleast_2d(dist.reshape(query.shape[0], -1))
    idx = np.atleast_2d(idx.reshape(query.shape[0], -1))
    best = dist[:, :1]
    # among neighbours tied with the minimum, take the lowest index
    tie = np.abs(dist - best) <= 1e-12 * np.maximum(1.0, best)
    return np.where(tie, idx, np.iinfo(np.intp).max).min(axis=1)


def build_christ_cubes(mu: DiscreteMeasure, j_min: int = 0, j_max: int = 8,
                       scale_unit: Optional[float] = None) -> CubeTree:
    if j_min > j_max:
        raise ValueError("j_min must not exceed j_max")
    mu.require_nonnegative("build_christ_cubes")
    spt = mu.support
    if spt.size == 0:
        raise MeasureError("empty measure")
    pts = mu.points[spt]
    diam = diameter(pts)
    if scale_unit is None:
        scale_unit = diam if diam > 0 else 1.0
    h = mu.resolution
    order, rho = farthest_point_order(pts, 0)

    radii = {j: scale_unit * 2.0 ** (-j) for j in range(j_min, j_max + 1)}
    nets = {}
    for j in range(j_min, j_max + 1):
        keep = order[rho >= radii[j] - h]
        if j == j_min and radii[j] >= diam:
            keep = order[:1]
        nets[j] = np.sort(keep)

    # nets must be nested; the forced root keeps that true
    for j in range(j_min, j_max):
        if not np.all(np.isin(nets[j], nets[j + 1])):
            nets[j + 1] = np.union1d(nets[j + 1], nets[j])

    # coarsest level: Voronoi cells of the coarsest net; each finer level
    # splits every parent cell among the finer net points it contains
    cell_of = {j_min: nets[j_min][_nearest(pts[nets[j_min]], pts)]}
    for j in range(j_min + 1, j_max + 1):
        parent_lab = cell_of[j - 1]
        lab = np.empty(spt.size, dtype=np.intp)
        in_net = np.zeros(spt.size, dtype=bool)
        in_net[nets[j]] = True
        srt = np.argsort(parent_lab, kind="stable")
        _, starts = np.unique(parent_lab[srt], return_index=True)
        for block in np.split(srt, starts[1:]):
            block = np.sort(block)
            centers = block[in_net[block]]
            lab[block] = centers[_nearest(pts[centers], pts[block])]
        cell_of[j] = lab

    cubes: list = []
    levels: dict = {}
    cube_at: dict = {}
    c0_hi, c0_lo = 0.0, math.inf
    for j in range(j_min, j_max + 1):
        side = scale_unit * 2.0 ** (-j)
        levels[j] = []
        at = np.empty(spt.size, dtype=np.intp)
        lab = cell_of[j]
        srt = np.argsort(lab, kind="stable")
        uniq, starts = np.unique(lab[srt], return_index=True)
        bounds = list(starts) + [lab.size]
        for k, c in enumerate(uniq.tolist()):
            local = srt[bounds[k]:bounds[k + 1]]
            members = np.sort(spt[local])
            dq = diameter(mu.points[members])
            cube = Cube(id=len(cubes), level=j, center_index=int(spt[c]),
                        center=mu.points[spt[c]].copy(), members=members,
                        mass=float(mu.weights[members].sum()), diam=dq, side=side,
                        singleton=members.size == 1,
                        members_set=frozenset(members.tolist()))
            at[local] = cube.id
            if j > j_min:
                # parent is the coarser cube holding this center
                cube.parent = int(cube_at[j - 1][c])
                cubes[cube.parent].children.append(cube.id)
            cubes.append(cube)
            levels[j].append(cube.id)
            if not cube.singleton:
                c0_hi = max(c0_hi, dq / side)
                if dq > 0:
                    c0_lo = min(c0_lo, dq / side)
        cube_at[j] = at
    c0 = max(c0_hi, 1.0 / c0_lo if c0_lo < math.inf else 1.0, 1.0)
    return CubeTree(mu=mu, cubes=cubes, levels=levels, j_min=j_min, j_max=j_max,
                    scale_unit=float(scale_unit), c0=float(c0),
                    meta={"resolution": h, "diam": diam,
                          "cube_at": {j: dict(zip(spt.tolist(), cube_at[j].tolist()))
                                      for j in cube_at},
                          "net_sizes": {j: int(nets[j].size) for j in nets}})


def neighbors(tree: CubeTree, Q: Cube) -> tuple[list, np.ndarray]:
    """Same-level cubes P with dist(P, Q) <= side(Q), Q included; plus N(Q)."""
    pts = tree.mu.points
    tq = cKDTree(pts[Q.members])
    reach = Q.side * (1 + 1e-12)
    out = []
    for cid in tree.levels[Q.level]:
        P = tree.cubes[cid]
        if P.id == Q.id:
            out.append(P)
            continue
        gap = np.linalg.norm(P.center - Q.center) - P.diam - Q.diam
        if gap > reach:
            continue
        d, _ = tq.query(pts[P.members], k=1)
        if float(d.min()) <= reach:
            out.append(P)
    union = np.sort(np.concatenate([P.members for P in out]))
    return out, union


def small_boundary_ratio(tree: CubeTree, Q: Cube, tau: float) -> float:
    """mu{x in Q : dist(x, spt(mu) minus Q) <= tau side(Q)} / mu(Q)."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    mu = tree.mu
    outside = np.setdiff1d(mu.support, Q.members, assume_unique=True)
    if outside.size == 0 or Q.mass == 0:
        return 0.0
    d, _ = cKDTree(mu.points[outside]).query(mu.points[Q.members], k=1)
    close = d <= tau * Q.side
    return float(mu.weights[Q.members][close].sum() / Q.mass)


# ---------------------------------------------------------------------------
# standard dyadic grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridCube:
    """Half-open cube prod [k_i 2^-level, (k_i + 1) 2^-level)."""

    level: int
    index: tuple

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def corner(self) -> np.ndarray:
        return np.asarray(self.index, dtype=float) * self.side

    @property
    def center(self) -> np.ndarray:
        return self.corner + 0.5 * self.side

    def box(self, factor: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Half-open box of the factor-dilate about the center."""
        half = 0.5 * factor * self.side
        c = self.center
        return c - half, c + half

    def contains(self, points, factor: float = 1.0) -> np.ndarray:
        lo, hi = self.box(factor)
        p = np.atleast_2d(points)
        return np.all((p >= lo) & (p < hi), axis=1)

    def children(self) -> list:
        d = len(self.index)
        base = np.asarray(self.index) * 2
        out = []
        for bits in np.ndindex(*([2] * d)):
            out.append(GridCube(self.level + 1, tuple(int(v) for v in base + np.asarray(bits))))
        return out

    def parent(self) -> "GridCube":
        return GridCube(self.level - 1, tuple(int(v) // 2 for v in self.index))

    def to_dict(self) -> dict:
        return {"level": self.level, "corner": [int(v) for v in self.index]}


def grid_index(points, level: int) -> np.ndarray:
    return np.floor(np.atleast_2d(np.asarray(points, dtype=float)) * 2.0 ** level).astype(np.int64)


def grid_cubes_touching(points, level: int) -> list:
    """Distinct dyadic cubes of side 2^-level containing at least one point."""
    idx = grid_index(points, level)
    if idx.size == 0:
        return []
    uniq = np.unique(idx, axis=0)
    return [GridCube(int(level), tuple(int(v) for v in row)) for row in uniq]


@dataclass(frozen=True)
class CenteredCube:
    """Half-open cube [c - side/2, c + side/2) about an arbitrary center."""

    center_point: tuple
    side: float

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.center_point, dtype=float)

    @property
    def corner(self) -> np.ndarray:
        return self.center - 0.5 * self.side

    def box(self, factor: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        half = 0.5 * factor * self.side
        c = self.center
        return c - half, c + half

    def contains(self, points, factor: float = 1.0) -> np.ndarray:
        # offsets from the center, so membership agrees bit for bit with
        # thresholds computed from p - c
        delta = np.atleast_2d(points) - self.center
        half = 0.5 * factor * self.side
        return np.all((-delta <= half) & (delta < half), axis=1)

    def to_dict(self) -> dict:
        return {"center": [float(v) for v in self.center_point],
                "corner": [float(v) for v in self.corner], "side": float(self.side)}

    def dilate(self, factor: float) -> "CenteredCube":
        return CenteredCube(self.center_point, factor * self.side)
