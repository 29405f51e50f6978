"""
Calderon-Zygmund decomposition of a finite measure nu relative to mu.

Given lambda > 2^(d+1) ||nu|| / ||mu||, select cubes D with

    mu(2D) < (2^(d+1) / lambda) |nu|(D),

put R_j = 6 D_j, w_j = 1_{D_j} / sum_i 1_{D_i} and

    b_j = (int w_j dnu / mu(R_j)) 1_{R_j},

and let f = dnu/dmu off the union of the D_j.  Every property of the
decomposition is checked by `verify_cz` with explicit witnesses.

Two selection rules are available.  "centered" (the default) puts at each
atom x of nu a cube Q_x whose side exceeds half the supremum s(x) of the
admissible sides, so every eta Q_x with eta > 2 fails the selection
inequality, and keeps a bounded-overlap subfamily by a greedy
largest-first (Besicovitch type) pass.  "dyadic" takes the maximal standard
dyadic cubes; it is simpler but the eta inequality can fail for it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from cnumbers.cubes import CenteredCube, GridCube, grid_index
from cnumbers.measures import DiscreteMeasure, MeasureError, diameter

ETAS = (3, 4, 8)


def _box_members(tree: cKDTree, points: np.ndarray, cube, factor: float) -> np.ndarray:
    """Indices of points in the half-open factor-dilate of cube."""
    cand = tree.query_ball_point(cube.center, 0.5 * factor * cube.side * (1 + 1e-12), p=np.inf)
    if not cand:
        return np.zeros(0, dtype=np.intp)
    cand = np.sort(np.asarray(cand, dtype=np.intp))
    return cand[cube.contains(points[cand], factor)]


@dataclass
class CZResult:
    lam: float
    cubes: list                     # D_j
    dilation: float                 # R_j = dilation * D_j
    f: np.ndarray                   # per mu point; zero on the union of the D_j
    b_index: list                   # mu indices of R_j
    b_value: list                   # constant value of b_j on R_j
    w_index: list                   # nu indices in D_j
    w_value: list                   # w_j on those indices
    meta: dict = field(default_factory=dict)

    @property
    def J(self) -> int:
        return len(self.cubes)

    @property
    def R(self) -> list:
        """The dilated cubes R_j = dilation * D_j."""
        return [CenteredCube(tuple(float(v) for v in c.center), self.dilation * c.side)
                for c in self.cubes]

    def b_dense(self, j: int, size: int) -> np.ndarray:
        out = np.zeros(size)
        out[self.b_index[j]] = self.b_value[j]
        return out

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "cubes": [c.to_dict() for c in self.cubes],
            "dilation": self.dilation,
            "f": self.f.tolist(),
            "b": [{"index": i.tolist(), "value": float(v)}
                  for i, v in zip(self.b_index, self.b_value)],
            "w": [{"index": i.tolist(), "value": w.tolist()}
                  for i, w in zip(self.w_index, self.w_value)],
            "meta": self.meta,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def threshold(nu: DiscreteMeasure, mu: DiscreteMeasure) -> float:
    return 2.0 ** (mu.d + 1) * nu.total_variation / mu.total_mass


def _match(nu: DiscreteMeasure, mu: DiscreteMeasure) -> np.ndarray:
    """For each nu point, the mu point at exactly the same location (or -1)."""
    lookup = {tuple(p): i for i, p in enumerate(mu.points.tolist())}
    return np.array([lookup.get(tuple(p), -1) for p in nu.points.tolist()], dtype=np.intp)


def _min_separation(points: np.ndarray) -> float:
    uniq = np.unique(points, axis=0)
    if len(uniq) < 2:
        return math.inf
    d, _ = cKDTree(uniq).query(uniq, k=2)
    return float(d[:, 1].min())


def _select_dyadic(nu: DiscreteMeasure, mu: DiscreteMeasure, coef: float):
    """
    Maximal dyadic cubes, found by descending from a level whose cubes are at
    least twice the diameter of spt(nu) union spt(mu); there 2D covers spt(mu)
    for every cube meeting spt(nu), so none of them is selected.  The descent
    stops once 2D can hold no point other than one coincident with the nu
    atom it contains.
    """
    d = mu.d
    nu_abs = np.abs(nu.weights)
    active = np.flatnonzero(nu_abs > 0)
    all_pts = np.vstack([mu.points[mu.support], nu.points[active]]) if active.size else mu.points
    span = max(diameter(all_pts), float(np.max(np.abs(all_pts))) * 1e-12, 1e-300)
    level = -math.ceil(math.log2(2.0 * span))
    start = level
    sep = _min_separation(all_pts)
    stop_side = sep / (2.0 * math.sqrt(d)) if math.isfinite(sep) else 0.0
    selected, examined = [], 0
    while active.size:
        keys = grid_index(nu.points[active], level)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        mass = np.bincount(inv, weights=nu_abs[active], minlength=len(uniq))
        keep = np.ones(active.size, dtype=bool)
        for k, key in enumerate(uniq):
            cube = GridCube(level, tuple(int(v) for v in key))
            examined += 1
            idx = _box_members(mu.tree, mu.points, cube, 2.0)
            if float(mu.weights[idx].sum()) < coef * mass[k]:
                selected.append(cube)
                keep[inv == k] = False
        active = active[keep]
        if 2.0 ** (-level) < stop_side:
            break
        level += 1
    selected.sort(key=lambda c: (c.level, c.index))
    return selected, {"start_level": start, "stop_side": stop_side, "examined": examined}


def _entry_radius(delta: np.ndarray):
    """
    For offsets delta = p - x, the half-width r at which p enters the
    half-open box [x - r, x + r): p is inside iff r >= max(-delta) and
    r > max(delta).  Returns (threshold, closed) with closed True when the
    threshold itself already contains p.
    """
    a = np.max(-delta, axis=1)
    b = np.max(delta, axis=1)
    return np.maximum(a, b), a > b


def _step_count(thr, closed, w, r):
    """Total weight inside the box of half-width r (vectorised over r)."""
    order = np.argsort(thr, kind="stable")
    thr, closed, w = thr[order], closed[order], w[order]
    # weight with threshold < r, plus closed ones with threshold == r
    cum = np.concatenate([[0.0], np.cumsum(w)])
    ccum = np.concatenate([[0.0], np.cumsum(np.where(closed, w, 0.0))])
    lo = np.searchsorted(thr, r, side="left")
    hi = np.searchsorted(thr, r, side="right")
    return cum[lo] + (ccum[hi] - ccum[lo])


def admissible_sup(x, nu: DiscreteMeasure, mu: DiscreteMeasure, coef: float):
    """
    s(x) = sup{l : mu(2Q(x,l)) < coef |nu|(Q(x,l))} for half-open cubes of
    side l centered at x, together with an admissible side in (s/2, s].
    Returns (None, None) when no side is admissible.
    """
    tn, cn = _entry_radius(nu.points - x)
    tm, cm = _entry_radius(mu.points - x)
    # as functions of the side l: nu counted in half-width l/2, mu in l
    bps = np.unique(np.concatenate([2.0 * tn, tm]))
    bps = bps[bps > 0]
    if bps.size == 0:
        return None, None
    mids = np.concatenate([[bps[0] / 2], 0.5 * (bps[:-1] + bps[1:])])
    probe = np.empty(2 * bps.size)
    probe[0::2] = mids
    probe[1::2] = bps
    nu_abs = np.abs(nu.weights)
    ok = (_step_count(tm, cm, mu.weights, probe)
          < coef * _step_count(tn, cn, nu_abs, probe / 2.0))
    if not np.any(ok):
        return None, None
    last = int(np.flatnonzero(ok).max())
    k = last // 2
    s = float(bps[k])
    if last % 2 == 1 and not ok[last - 1]:
        # admissible only at the breakpoint itself
        return s, s
    # admissible on the open interval below s; stay off the breakpoints so
    # the side does not hinge on rounding at a cube face
    left = float(bps[k - 1]) if k > 0 else 0.0
    lo = max(left, s / 2)
    return s, 0.5 * (lo + s)


def _select_centered(nu: DiscreteMeasure, mu: DiscreteMeasure, coef: float):
    cand = []
    for i in np.flatnonzero(nu.weights != 0).tolist():
        s, side = admissible_sup(nu.points[i], nu, mu, coef)
        if s is not None:
            cand.append((side, i, s))
    cand.sort(key=lambda c: (-c[0], c[1]))
    selected, sups = [], []
    covered = np.zeros(len(nu), dtype=bool)
    for side, i, s in cand:
        if covered[i]:
            continue
        cube = CenteredCube(tuple(float(v) for v in nu.points[i]), side)
        selected.append(cube)
        sups.append(s)
        covered |= cube.contains(nu.points)
    return selected, {"candidates": len(cand), "sup_sides": sups}


def cz_decompose(nu: DiscreteMeasure, mu: DiscreteMeasure, lam: float,
                 dilation: float = 6.0, method: str = "centered") -> CZResult:
    if nu.d != mu.d:
        raise MeasureError("measures live in different dimensions")
    mu.require_nonnegative("cz_decompose (mu)")
    lam_min = threshold(nu, mu)
    if not lam > lam_min:
        raise MeasureError(f"lambda = {lam} must exceed 2^(d+1)||nu||/||mu|| = {lam_min}")
    coef = 2.0 ** (mu.d + 1) / lam
    if method == "centered":
        selected, info = _select_centered(nu, mu, coef)
    elif method == "dyadic":
        selected, info = _select_dyadic(nu, mu, coef)
    else:
        raise ValueError(f"unknown selection method {method!r}")
    mu_tree = mu.tree

    # weights w_j on nu points
    nu_tree = nu.tree
    w_index, counts = [], np.zeros(len(nu))
    for cube in selected:
        ix = _box_members(nu_tree, nu.points, cube, 1.0)
        w_index.append(ix)
        counts[ix] += 1
    w_value = [1.0 / counts[ix] for ix in w_index]
    in_bad = counts > 0

    # f = dnu/dmu off the bad set, by exact point identity
    match = _match(nu, mu)
    f = np.zeros(len(mu))
    good = np.flatnonzero(~in_bad & (nu.weights != 0))
    unmatched = good[match[good] < 0]
    if unmatched.size:
        raise MeasureError(f"nu atoms {unmatched[:5].tolist()} outside the selected cubes "
                           "have no mu atom at the same location")
    for i in good.tolist():
        f[match[i]] += nu.weights[i]
    hit = f != 0
    f[hit] = f[hit] / mu.weights[hit]

    b_index, b_value = [], []
    for j, cube in enumerate(selected):
        ix = _box_members(mu_tree, mu.points, cube, dilation)
        mass_R = float(mu.weights[ix].sum())
        if mass_R == 0:
            raise MeasureError(f"mu({dilation:g}D_{j}) = 0 for cube {cube.to_dict()}; "
                               "refine the sampling of mu")
        b_index.append(ix)
        b_value.append(float(nu.weights[w_index[j]] @ w_value[j]) / mass_R)
    return CZResult(float(lam), selected, float(dilation), f, b_index, b_value,
                    w_index, w_value, meta={"method": method, **info})


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

@dataclass
class PropertyCheck:
    id: int
    name: str
    passed: bool
    witness: Optional[dict] = None
    constant: Optional[float] = None


def verify_cz(res: CZResult, nu: DiscreteMeasure, mu: DiscreteMeasure, *,
              overlap_limit: float = 8.0, sum_limit: float = 4.0,
              rtol: float = 1e-9) -> list:
    d = mu.d
    coef = 2.0 ** (d + 1) / res.lam
    nu_abs = np.abs(nu.weights)
    out = []

    # 1 bounded overlap, counted at every atom of either measure
    probe = np.vstack([mu.points, nu.points])
    count = np.zeros(len(probe), dtype=int)
    for c in res.cubes:
        count += c.contains(probe)
    c_overlap = int(count.max()) if len(probe) else 0
    out.append(PropertyCheck(1, "bounded overlap", c_overlap <= overlap_limit,
                             {"point": int(count.argmax())} if c_overlap > overlap_limit else None,
                             float(c_overlap)))

    # 2 selection inequality
    bad = None
    for j, c in enumerate(res.cubes):
        m2 = float(mu.weights[_box_members(mu.tree, mu.points, c, 2.0)].sum())
        nD = float(nu_abs[_box_members(nu.tree, nu.points, c, 1.0)].sum())
        if not m2 < coef * nD:
            bad = {"j": j, "mu_2D": m2, "bound": coef * nD}
            break
    out.append(PropertyCheck(2, "mu(2D_j) < 2^(d+1)/lambda |nu|(D_j)", bad is None, bad))

    # 3 the eta inequality
    bad = None
    for j, c in enumerate(res.cubes):
        for eta in ETAS:
            lhs = coef * float(nu_abs[_box_members(nu.tree, nu.points, c, eta)].sum())
            rhs = float(mu.weights[_box_members(mu.tree, mu.points, c, 2.0 * eta)].sum())
            if lhs > rhs * (1 + rtol):
                bad = {"j": j, "eta": eta, "lhs": lhs, "rhs": rhs}
                break
        if bad:
            break
    out.append(PropertyCheck(3, "2^(d+1)/lambda |nu|(eta D_j) <= mu(2 eta D_j)", bad is None, bad))

    # 4 nu = f mu off the union, |f| <= lambda
    in_union = np.zeros(len(nu), dtype=bool)
    for c in res.cubes:
        in_union |= c.contains(nu.points)
    mu_in_union = np.zeros(len(mu), dtype=bool)
    for c in res.cubes:
        mu_in_union |= c.contains(mu.points)
    match = _match(nu, mu)
    recon = np.zeros(len(mu))
    bad = None
    for i in np.flatnonzero(~in_union & (nu.weights != 0)).tolist():
        if match[i] < 0:
            bad = {"nu_index": i, "reason": "unmatched"}
            break
        recon[match[i]] += nu.weights[i]
    if bad is None:
        fm = res.f * mu.weights
        fm[mu_in_union] = 0.0
        recon[mu_in_union] = 0.0
        err = np.abs(fm - recon)
        tol = rtol * max(nu.total_variation, 1e-300)
        if np.any(err > tol):
            bad = {"mu_index": int(err.argmax()), "reason": "nu != f mu"}
        elif np.any(np.abs(res.f) > res.lam):
            bad = {"mu_index": int(np.abs(res.f).argmax()), "reason": "|f| > lambda"}
    out.append(PropertyCheck(4, "nu = f mu off the cubes, |f| <= lambda", bad is None, bad,
                             float(np.abs(res.f).max() / res.lam) if len(res.f) else 0.0))

    # 5 R_j = 6 D_j and w_j well formed
    bad = None
    wsum = np.zeros(len(nu))
    for j, c in enumerate(res.cubes):
        expect = _box_members(mu.tree, mu.points, c, res.dilation)
        if not np.array_equal(np.sort(res.b_index[j]), expect):
            bad = {"j": j, "reason": "R_j is not the dilate"}
            break
        wv = np.asarray(res.w_value[j])
        if np.any(wv < 0) or np.any(wv > 1) or not np.all(c.contains(nu.points[res.w_index[j]])):
            bad = {"j": j, "reason": "w_j out of range or outside D_j"}
            break
        wsum[res.w_index[j]] += wv
    if bad is None and np.any(np.abs(wsum[in_union] - 1) > 1e-12):
        bad = {"reason": "sum of w_j is not 1 on the union"}
    out.append(PropertyCheck(5, "R_j = 6D_j, 0 <= w_j <= 1, sum w_j = 1", bad is None, bad))

    # 6 spt b_j in R_j
    bad = None
    for j, c in enumerate(res.cubes):
        pts = mu.points[res.b_index[j]]
        if res.b_value[j] != 0 and not np.all(c.contains(pts, res.dilation)):
            bad = {"j": j}
            break
    out.append(PropertyCheck(6, "spt b_j in R_j", bad is None, bad))

    # 7 constant sign
    bad = None
    for j in range(res.J):
        v = np.atleast_1d(res.b_value[j])
        if np.any(v > 0) and np.any(v < 0):
            bad = {"j": j}
            break
    out.append(PropertyCheck(7, "b_j has constant sign", bad is None, bad))

    # 8 int b_j dmu = int w_j dnu
    bad = None
    for j in range(res.J):
        lhs = float(res.b_value[j] * mu.weights[res.b_index[j]].sum())
        rhs = float(nu.weights[res.w_index[j]] @ np.asarray(res.w_value[j]))
        if abs(lhs - rhs) > rtol * max(abs(rhs), 1e-300):
            bad = {"j": j, "int_b": lhs, "int_w_nu": rhs}
            break
    out.append(PropertyCheck(8, "int b_j dmu = int w_j dnu", bad is None, bad))

    # 9 ||b_j||_inf mu(R_j) <= c |nu|(D_j)
    c9 = 0.0
    for j, c in enumerate(res.cubes):
        mR = float(mu.weights[res.b_index[j]].sum())
        nD = float(nu_abs[_box_members(nu.tree, nu.points, c, 1.0)].sum())
        if nD > 0:
            c9 = max(c9, abs(res.b_value[j]) * mR / nD)
    out.append(PropertyCheck(9, "||b_j|| mu(R_j) <= c |nu|(D_j)", c9 <= 1.0 + rtol, None, c9))

    # 10 sum_j |b_j| <= c lambda
    tot = np.zeros(len(mu))
    for j in range(res.J):
        tot[res.b_index[j]] += abs(res.b_value[j])
    c10 = float(tot.max() / res.lam) if len(tot) else 0.0
    out.append(PropertyCheck(10, "sum |b_j| <= c lambda", c10 <= sum_limit,
                             {"mu_index": int(tot.argmax())} if c10 > sum_limit else None, c10))
    return out


def mass_accounting(res: CZResult, nu: DiscreteMeasure, mu: DiscreteMeasure) -> tuple[float, float]:
    """(||nu|| as nu(R^d), int_{off} f dmu + sum_j int w_j dnu)."""
    mu_in = np.zeros(len(mu), dtype=bool)
    for c in res.cubes:
        mu_in |= c.contains(mu.points)
    off = float(math.fsum((res.f * mu.weights)[~mu_in]))
    bad = math.fsum(float(nu.weights[i] @ np.asarray(w)) for i, w in zip(res.w_index, res.w_value))
    return float(math.fsum(nu.weights)), off + bad


def good_part(res: CZResult, mu: DiscreteMeasure) -> np.ndarray:
    """g = f 1_{F^c} + sum_j b_j on the atoms of mu."""
    g = res.f.copy()
    for c in res.cubes:
        g[c.contains(mu.points)] = 0.0
    for j in range(res.J):
        g[res.b_index[j]] += res.b_value[j]
    return g
