"""
Scale integrals and Carleson sums of multiscale coefficients.

Integrals in t are trapezoid rules in log t over geometric grids, which is
the natural quadrature for dt/t.  Sums over points and cubes use fsum so the
reported totals do not depend on evaluation order.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from cnumbers.coefficients import Kind, beta_number, coefficient_profile
from cnumbers.cubes import Cube, CubeTree
from cnumbers.measures import Ball, DiscreteMeasure, MeasureError, diameter, multiply_density

# slope thresholds of the Dini diagnostic
BOUNDED_SLOPE = 0.05
GROWING_SLOPE = 0.3
# energies below this are rounding noise of exact cancellation
ENERGY_FLOOR = 1e-20


@dataclass(frozen=True)
class ScaleGrid:
    """Geometric nodes t_max 2^(-k/m), k = 0, 1, ..., the last one clipped to t_min."""

    t_min: float
    t_max: float
    samples_per_octave: int = 8

    def __post_init__(self):
        if not 0 < self.t_min < self.t_max:
            raise ValueError("need 0 < t_min < t_max")
        if self.samples_per_octave < 4:
            raise ValueError("samples_per_octave must be >= 4")

    @property
    def nodes(self) -> np.ndarray:
        m = self.samples_per_octave
        k = math.ceil(m * math.log2(self.t_max / self.t_min) - 1e-9)
        t = self.t_max * 2.0 ** (-np.arange(k + 1) / m)
        t[-1] = self.t_min
        return t

    def refined(self) -> "ScaleGrid":
        return ScaleGrid(self.t_min, self.t_max, 2 * self.samples_per_octave)

    def to_dict(self) -> dict:
        return {"t_min": self.t_min, "t_max": self.t_max,
                "samples_per_octave": self.samples_per_octave}


def log_trapezoid(ts: np.ndarray, values: np.ndarray) -> float:
    """int values dt/t by the trapezoid rule in log t (ts in any monotone order)."""
    if len(ts) < 2:
        return 0.0
    u = np.log(ts)
    return float(abs(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(u))))


def cumulative_log_trapezoid(ts: np.ndarray, values: np.ndarray) -> np.ndarray:
    """E_k = int_{ts[k]}^{ts[0]} values dt/t for decreasing ts."""
    u = np.log(ts)
    inc = 0.5 * (values[1:] + values[:-1]) * (u[:-1] - u[1:])
    return np.concatenate([[0.0], np.cumsum(inc)])


def _sq_profile(mu, x, ts, kind):
    vec = coefficient_profile(mu, x, ts, kind)
    return np.einsum("ij,ij->i", vec, vec)


def dini_integral(mu: DiscreteMeasure, x, grid: ScaleGrid, kind: Kind = Kind()) -> float:
    """Truncated int_{t_min}^{t_max} |coef(x, t)|^2 dt/t."""
    ts = grid.nodes
    return log_trapezoid(ts, _sq_profile(mu, x, ts, kind))


@dataclass
class DiniCurve:
    t_min: np.ndarray      # candidate lower limits (decreasing)
    energy: np.ndarray     # truncated integral down to each t_min
    slope: float
    verdict: str


def dini_slope(ts: np.ndarray, energy: np.ndarray, t_max: float) -> float:
    """
    Growth exponent of E(t_min) against log(t_max/t_min) over the finest half
    of the grid: d ln E / d ln ln(t_max/t_min).  A convergent integral gives
    a slope near 0, a per-octave increment bounded below gives a slope near 1.
    """
    k0 = max(1, len(ts) // 2)
    lt = np.log(np.log(t_max / ts[k0:]))
    e = energy[k0:]
    if float(e.max(initial=0.0)) <= ENERGY_FLOOR:
        return 0.0
    le = np.log(np.maximum(e, ENERGY_FLOOR))
    return float(np.polyfit(lt, le, 1)[0])


def classify_slope(slope: float) -> str:
    if slope <= BOUNDED_SLOPE:
        return "bounded"
    if slope >= GROWING_SLOPE:
        return "growing"
    return "undecided"


def dini_curve(mu: DiscreteMeasure, x, grid: ScaleGrid, kind: Kind = Kind()) -> DiniCurve:
    ts = grid.nodes
    e = cumulative_log_trapezoid(ts, _sq_profile(mu, x, ts, kind))
    slope = dini_slope(ts, e, grid.t_max)
    return DiniCurve(ts, e, slope, classify_slope(slope))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    per_cube: list            # (cube id, level, energy, mass)
    per_point: list           # (point index, energy)
    total: float
    normalization: float
    kind: str = "c"
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.total / self.normalization if self.normalization > 0 else math.inf

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["cube_id", "level", "energy", "mass"])
            for cid, lvl, e, m in self.per_cube:
                wr.writerow([cid, lvl, repr(float(e)), repr(float(m))])

    def summary(self) -> dict:
        return {"total": self.total, "normalization": self.normalization,
                "ratio": self.ratio, "kind": self.kind, **self.meta}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray) or isinstance(obj, np.generic):
        return obj.tolist()
    if hasattr(obj, "frame") and hasattr(obj, "base"):
        return {"base": obj.base.tolist(), "frame": obj.frame.tolist()}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _octave_nodes(side: float, m: int) -> np.ndarray:
    """m + 1 geometric nodes spanning [side, 2 side]."""
    return side * 2.0 ** (np.arange(m + 1) / m)


def carleson_energy(mu: DiscreteMeasure, tree: CubeTree, R: Cube,
                    kind: Kind = Kind(), m: int = 8) -> EnergyReport:
    """
    sum_{Q in R} sum_{x in Q} w_x int_{side(Q)}^{2 side(Q)} |coef(x,t)|^2 dt/t,
    normalised by mu(R).
    """
    cubes = tree.descendants(R)
    levels = sorted({q.level for q in cubes})
    sides = {j: tree.scale_unit * 2.0 ** (-j) for j in levels}
    # one profile per point over all the octaves it meets
    ts = np.concatenate([_octave_nodes(sides[j], m) for j in levels])
    point_energy = {}
    level_terms = {}
    for i in R.members.tolist():
        sq = _sq_profile(mu, mu.points[i], ts, kind)
        terms = {}
        for a, j in enumerate(levels):
            blk = slice(a * (m + 1), (a + 1) * (m + 1))
            terms[j] = mu.weights[i] * log_trapezoid(ts[blk], sq[blk])
        level_terms[i] = terms
    per_cube = []
    for q in cubes:
        e = math.fsum(level_terms[i][q.level] for i in q.members.tolist())
        per_cube.append((q.id, q.level, e, q.mass))
    for i, terms in level_terms.items():
        point_energy[i] = math.fsum(terms.values())
    total = math.fsum(e for _, _, e, _ in per_cube)
    return EnergyReport(per_cube, sorted(point_energy.items()), total, R.mass,
                        kind=kind.label, meta={"root": R.id, "root_level": R.level,
                                               "levels": levels, "m": m})


def alpha_energy(mu: DiscreteMeasure, tree: CubeTree, R: Cube, options=None,
                 min_points: int = 0, max_level: Optional[int] = None) -> EnergyReport:
    """sum_{Q in R} alpha(Q)^2 mu(Q), normalised by mu(R).  Degenerate cubes are skipped."""
    from cnumbers.transport import AlphaOptions, alpha_number

    options = options or AlphaOptions()
    per_cube, skipped, planes, floors = [], [], {}, {}
    for q in tree.descendants(R):
        if max_level is not None and q.level > max_level:
            continue
        if q.size < max(min_points, mu.n + 1):
            skipped.append(q.id)
            continue
        try:
            a = alpha_number(mu, q, options)
        except MeasureError:
            skipped.append(q.id)
            continue
        planes[q.id] = a.plane
        floors[q.id] = a.meta["floor"]
        per_cube.append((q.id, q.level, a.value ** 2 * q.mass, q.mass))
    total = math.fsum(e for _, _, e, _ in per_cube)
    return EnergyReport(per_cube, [], total, R.mass, kind="alpha",
                        meta={"root": R.id, "skipped": skipped, "planes": planes,
                              "floors": floors})


def beta_energy(mu: DiscreteMeasure, tree: CubeTree, R: Cube, planes: Optional[dict] = None,
                max_level: Optional[int] = None) -> EnergyReport:
    """
    sum_{Q in R} sum_{x in Q} w_x (dist(x, L_Q)/side(Q))^2, normalised by
    side(R)^n.  L_Q comes from `planes` (e.g. alpha minimisers) when given,
    else the beta_2 plane of B_Q.
    """
    planes = planes or {}
    per_cube, source = [], {}
    for q in tree.descendants(R):
        if max_level is not None and q.level > max_level:
            continue
        plane = planes.get(q.id)
        source[q.id] = "given" if plane is not None else "beta2"
        if plane is None:
            plane = beta_number(mu, Ball(q.center, q.ball_radius), 2).plane
        if plane is None:
            e = 0.0
        else:
            d = plane.dist(mu.points[q.members]) / q.side
            e = float(mu.weights[q.members] @ d ** 2)
        per_cube.append((q.id, q.level, e, q.mass))
    total = math.fsum(e for _, _, e, _ in per_cube)
    return EnergyReport(per_cube, [], total, R.side ** mu.n, kind="beta",
                        meta={"root": R.id, "plane_source": source})


# ---------------------------------------------------------------------------
# martingale differences
# ---------------------------------------------------------------------------

@dataclass
class Martingale:
    root_average: float
    members: np.ndarray            # point indices of R, ascending
    differences: dict              # cube id -> values on members (Delta_P f)
    residual: np.ndarray           # f minus its average on the finest cubes

    def reconstruct(self) -> np.ndarray:
        out = np.full(self.members.size, self.root_average)
        for v in self.differences.values():
            out = out + v
        return out + self.residual


def martingale_decompose(tree: CubeTree, R: Cube, f) -> Martingale:
    """
    Delta_P f = sum_{S child of P} (f_S - f_P) 1_S for every non-leaf P in R,
    with f_Q the mu-average.  The residual term (f - f_Q on leaves Q) is zero
    when the leaves are single points, and makes f = f_R + sum Delta_P f +
    residual exact in general.
    """
    mu = tree.mu
    f = np.asarray(f, dtype=float).reshape(-1)
    if f.size != len(mu):
        raise MeasureError(f"f has {f.size} values for {len(mu)} points")
    members = R.members
    pos = {int(i): k for k, i in enumerate(members.tolist())}
    w = mu.weights

    def avg(q):
        return float(w[q.members] @ f[q.members] / q.mass) if q.mass > 0 else 0.0

    diffs = {}
    residual = np.zeros(members.size)
    for P in tree.descendants(R):
        fP = avg(P)
        loc = np.array([pos[i] for i in P.members.tolist()], dtype=np.intp)
        if not P.children:
            residual[loc] = f[P.members] - fP
            continue
        v = np.zeros(members.size)
        for cid in P.children:
            S = tree[cid]
            v[[pos[i] for i in S.members.tolist()]] = avg(S) - fP
        diffs[P.id] = v
    return Martingale(avg(R), members, diffs, residual)


def martingale_energy(tree: CubeTree, R: Cube, dec: Martingale) -> dict:
    """Squared L2(mu) norms of each piece and of f (for Parseval checks)."""
    w = tree.mu.weights[dec.members]
    parts = [float(w @ v ** 2) for v in dec.differences.values()]
    return {"root": dec.root_average ** 2 * R.mass,
            "differences": math.fsum(parts),
            "residual": float(w @ dec.residual ** 2)}


# ---------------------------------------------------------------------------
# operator diagnostics
# ---------------------------------------------------------------------------

def square_function(nu: DiscreteMeasure, points: np.ndarray, grid: ScaleGrid,
                    kind: Kind = Kind()) -> np.ndarray:
    """(int |C_nu(x,t)|^2 dt/t)^1/2 at each point."""
    ts = grid.nodes
    out = np.empty(len(points))
    for k, x in enumerate(points):
        out[k] = math.sqrt(log_trapezoid(ts, _sq_profile(nu, x, ts, kind)))
    return out


@dataclass
class Weak11Result:
    rows: list           # (lambda, mu{C_nu > lambda}, ||nu|| / lambda)
    k_emp: float


def weak11_check(mu: DiscreteMeasure, nu: DiscreteMeasure, lambdas: Sequence[float],
                 grid: ScaleGrid, kind: Kind = Kind()) -> Weak11Result:
    """Level sets of the truncated square function of nu on spt(mu) versus ||nu||/lambda."""
    spt = mu.support
    norm = nu.total_variation
    if norm == 0:
        return Weak11Result([(float(l), 0.0, 0.0) for l in lambdas], 0.0)
    sq = square_function(nu, mu.points[spt], grid, kind)
    rows, k_emp = [], 0.0
    for lam in lambdas:
        level = float(mu.weights[spt][sq > lam].sum())
        rows.append((float(lam), level, norm / lam))
        k_emp = max(k_emp, lam * level / norm)
    return Weak11Result(rows, k_emp)


def operator_l2_ratio(mu: DiscreteMeasure, tree: CubeTree, R: Cube, f,
                      samples_per_octave: int = 8) -> float:
    """||C_mu(f)||_{L2(mu|R)} / ||f||_{L2(mu)} over scales [finest side, side(R)]."""
    f = np.asarray(f, dtype=float).reshape(-1)
    norm_f = math.sqrt(float(mu.weights @ f ** 2))
    if norm_f == 0:
        raise ValueError("f vanishes in L2(mu)")
    fmu = multiply_density(mu, f)
    t_min = tree.scale_unit * 2.0 ** (-tree.j_max)
    grid = ScaleGrid(t_min, max(R.side, 2 * t_min), samples_per_octave)
    sq = square_function(fmu, mu.points[R.members], grid)
    return math.sqrt(float(mu.weights[R.members] @ sq ** 2)) / norm_f


def default_grid(mu: DiscreteMeasure, samples_per_octave: int = 8) -> ScaleGrid:
    """t_min = resolution, t_max = diameter of the support."""
    return ScaleGrid(mu.resolution, diameter(mu.points[mu.support]), samples_per_octave)
