"""
Discrete stand-ins for Radon measures.

A measure is a weighted point cloud in R^d tagged with an intrinsic
dimension n.  Every integral over a ball is read as a finite sum:

    int_{B(x,t)} F dmu  ==  sum_{i : |p_i - x| < t} w_i F(p_i)

Balls are open (strict inequality), so a point sitting on a sphere is
excluded.  "On the sphere" means within SPHERE_RTOL * t of it: lattice
coordinates carry rounding error, and without the band one atom of a
mirror-symmetric pair at distance t could be counted while its twin is not.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

SPHERE_RTOL = 1e-12


def inner_radius(radius):
    """Distances strictly below this are inside the open ball of the given radius."""
    return radius * (1.0 - SPHERE_RTOL)


class MeasureError(ValueError):
    """Invalid input to a measure constructor or operation."""


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise MeasureError(f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted point cloud.  Immutable once built; build with `build_measure`."""

    points: np.ndarray
    weights: np.ndarray
    n: int
    tree: cKDTree = field(repr=False)
    total_mass: float
    resolution: float
    signed: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def dim_ambient(self) -> int:
        return self.points.shape[1]

    @property
    def dim_intrinsic(self) -> int:
        return self.n

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    @property
    def support(self) -> np.ndarray:
        """Indices of points carrying nonzero mass."""
        return np.flatnonzero(self.weights != 0)

    def ball_indices(self, center, radius: float) -> np.ndarray:
        """Indices i with |p_i - center| < radius, sorted ascending."""
        return _ball_indices(self, np.asarray(center, dtype=float), float(radius))

    def require_nonnegative(self, what: str = "this operation"):
        if self.signed:
            raise MeasureError(f"{what} requires a nonnegative measure")


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _resolution(tree: cKDTree, points: np.ndarray) -> float:
    if points.shape[0] < 2:
        return 0.0
    dist, _ = tree.query(points, k=2)
    return float(np.median(dist[:, 1]))


def build_measure(points, weights, n: int, *, signed: bool = False,
                  meta: Optional[dict] = None) -> DiscreteMeasure:
    """Validate inputs and build the index.  Input order is preserved."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if pts.size else pts.reshape(0, 1)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise MeasureError("empty point list")
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != pts.shape[0]:
        raise MeasureError(
            f"dimension mismatch: {pts.shape[0]} points but {w.shape[0]} weights")
    if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
        raise MeasureError("points and weights must be finite")
    if not signed and np.any(w < 0):
        raise MeasureError("negative weight in a nonnegative measure")
    d = pts.shape[1]
    if not 1 <= int(n) <= d:
        raise MeasureError(f"intrinsic dimension n={n} must satisfy 1 <= n <= d={d}")
    pts = _freeze(pts)
    w = _freeze(w)
    tree = cKDTree(pts)
    return DiscreteMeasure(
        points=pts,
        weights=w,
        n=int(n),
        tree=tree,
        total_mass=float(math.fsum(w)),
        resolution=_resolution(tree, pts),
        signed=bool(signed and np.any(w < 0)),
        meta=dict(meta or {}),
    )


def _ball_indices(mu: DiscreteMeasure, center: np.ndarray, radius: float) -> np.ndarray:
    # the tree is queried with a slightly inflated radius; the strict test is
    # redone with the same arithmetic as the linear scan
    cand = mu.tree.query_ball_point(center, radius * (1 + 1e-9) + 1e-300)
    if not cand:
        return np.zeros(0, dtype=np.intp)
    cand = np.sort(np.asarray(cand, dtype=np.intp))
    dist = np.linalg.norm(mu.points[cand] - center, axis=1)
    return cand[dist < inner_radius(radius)]


def ball_indices_scan(mu: DiscreteMeasure, center, radius: float) -> np.ndarray:
    """Exhaustive version of the ball query; used as an oracle."""
    center = np.asarray(center, dtype=float)
    dist = np.linalg.norm(mu.points - center, axis=1)
    return np.flatnonzero(dist < inner_radius(radius))


def ball_mass(mu: DiscreteMeasure, ball: Ball) -> float:
    idx = _ball_indices(mu, ball.center, ball.radius)
    return float(mu.weights[idx].sum())


def upper_density(mu: DiscreteMeasure, x, radii: Sequence[float]) -> list[float]:
    """mu(B(x,r)) / r^n for each radius; the caller reads off the limsup trend."""
    x = np.asarray(x, dtype=float)
    out = []
    for r in radii:
        if r <= 0:
            raise MeasureError("radii must be positive")
        out.append(ball_mass(mu, Ball(x, r)) / r ** mu.n)
    return out


def ad_regularity(mu: DiscreteMeasure, scale_min: float, scale_max: float,
                  sample_count: int = 2000, *, seed: int = 0,
                  return_samples: bool = False):
    """
    Empirical AD-regularity constants.

    Draws x uniformly from the support (by index) and r log-uniformly in
    [scale_min, scale_max]; returns the min and max of mu(B(x,r))/r^n.
    """
    mu.require_nonnegative("ad_regularity")
    if not (0 < scale_min < scale_max):
        raise MeasureError("empty scale range")
    rng = np.random.default_rng(seed)
    spt = mu.support
    xi = spt[rng.integers(0, spt.size, size=sample_count)]
    r = np.exp(rng.uniform(math.log(scale_min), math.log(scale_max), size=sample_count))
    ratios = np.empty(sample_count)
    for k in range(sample_count):
        idx = _ball_indices(mu, mu.points[xi[k]], r[k])
        ratios[k] = mu.weights[idx].sum() / r[k] ** mu.n
    lo, hi = float(ratios.min()), float(ratios.max())
    if return_samples:
        return (lo, hi), (xi, r, ratios)
    return lo, hi


def multiply_density(mu: DiscreteMeasure, f) -> DiscreteMeasure:
    """The measure f*mu.  Negative products give a signed measure."""
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.shape[0] != len(mu):
        raise MeasureError(f"density has {f.shape[0]} entries for {len(mu)} points")
    if not np.all(np.isfinite(f)):
        raise MeasureError("density must be finite")
    w = mu.weights * f
    signed = bool(np.any(w < 0))
    if not signed and np.array_equal(w, mu.weights):
        return mu
    return DiscreteMeasure(
        points=mu.points,
        weights=_freeze(w),
        n=mu.n,
        tree=mu.tree,
        total_mass=float(math.fsum(w)),
        resolution=mu.resolution,
        signed=signed,
        meta=dict(mu.meta),
    )


def restrict(mu: DiscreteMeasure, indices) -> DiscreteMeasure:
    """Sub-measure on the given point indices (order kept)."""
    idx = np.asarray(indices, dtype=np.intp)
    return build_measure(mu.points[idx], mu.weights[idx], mu.n,
                         signed=mu.signed, meta=dict(mu.meta))


def diameter(points: np.ndarray) -> float:
    """Exact diameter of a finite point set."""
    pts = np.asarray(points, dtype=float)
    m = pts.shape[0]
    if m < 2:
        return 0.0
    if m > 64:
        # reduce to the affine hull, then to the convex hull when possible
        c = pts - pts.mean(axis=0)
        _, s, vt = np.linalg.svd(c, full_matrices=False)
        rank = int(np.sum(s > 1e-12 * s[0])) if s[0] > 0 else 0
        if rank == 0:
            return 0.0
        if rank == 1:
            u = c @ vt[0]
            return float(np.linalg.norm(pts[np.argmax(u)] - pts[np.argmin(u)]))
        if rank in (2, 3):
            from scipy.spatial import ConvexHull, QhullError
            try:
                pts = pts[ConvexHull(c @ vt[:rank].T).vertices]
            except (QhullError, ValueError):
                pass
    best = 0.0
    step = max(1, 4_000_000 // max(pts.shape[0], 1))
    for s0 in range(0, pts.shape[0], step):
        block = pts[s0:s0 + step]
        dd = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        best = max(best, float(dd.max()))
    return math.sqrt(best)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise MeasureError(f"{what} contains NaN or Inf")


def to_json(mu: DiscreteMeasure) -> dict:
    return {
        "d": mu.d,
        "n": mu.n,
        "points": mu.points.tolist(),
        "weights": mu.weights.tolist(),
        "meta": mu.meta,
    }


def from_json(obj: dict) -> DiscreteMeasure:
    pts = np.asarray(obj["points"], dtype=float)
    w = np.asarray(obj["weights"], dtype=float)
    _check_finite(pts, "points")
    _check_finite(w, "weights")
    if pts.ndim != 2 or pts.shape[1] != int(obj["d"]):
        raise MeasureError("point dimension does not match 'd'")
    return build_measure(pts, w, int(obj["n"]), meta=obj.get("meta") or {})


def write_json(mu: DiscreteMeasure, path) -> None:
    Path(path).write_text(json.dumps(to_json(mu)))


def read_json(path) -> DiscreteMeasure:
    # json accepts NaN/Infinity tokens; from_json rejects them
    return from_json(json.loads(Path(path).read_text()))


def write_csv(mu: DiscreteMeasure, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"x{k + 1}" for k in range(mu.d)] + ["w"])
        for p, w in zip(mu.points, mu.weights):
            wr.writerow([repr(float(v)) for v in p] + [repr(float(w))])


def read_csv(path, n: int) -> DiscreteMeasure:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MeasureError("empty CSV")
    header = [h.strip() for h in rows[0]]
    d = len(header) - 1
    if d < 1 or header != [f"x{k + 1}" for k in range(d)] + ["w"]:
        raise MeasureError(f"bad CSV header {header}")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if data.size == 0:
        raise MeasureError("empty point list")
    _check_finite(data, "CSV data")
    return build_measure(data[:, :d], data[:, d], n)
