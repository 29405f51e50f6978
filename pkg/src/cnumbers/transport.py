"""
Bounded-Lipschitz distance on a ball and alpha numbers.

    dist_B(mu, nu) = sup { |int f dmu - int f dnu| : Lip(f) <= 1, spt f in B }

For finitely many atoms this is the linear program over the values f_i at
the in-ball atoms with |f_i - f_j| <= |z_i - z_j| and |f_i| <= dist(z_i, B^c)
(McShane extension, then truncation by the distance to the complement).

Its dual is a transport problem with one extra node, the boundary of the
ball: mass may travel between atoms at cost |z_i - z_j|, or leave/enter
through the boundary at cost dist(z_i, B^c).  alpha numbers use the dual,
where the flat measure's density c is one more LP variable.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import expm
from scipy.optimize import linprog, minimize
from scipy.sparse import coo_matrix
from scipy.spatial.distance import cdist

from cnumbers.coefficients import AffinePlane, CoefficientSample, weighted_pca_plane
from cnumbers.cubes import Cube
from cnumbers.measures import Ball, DiscreteMeasure, MeasureError


class SolverError(RuntimeError):
    pass


def _in_ball(mu: DiscreteMeasure, ball: Ball):
    idx = mu.ball_indices(ball.center, ball.radius)
    idx = idx[mu.weights[idx] != 0]
    return mu.points[idx], mu.weights[idx]


def _merge_atoms(pa, wa, pb, wb):
    """Union of atom locations with the signed mass difference at each."""
    pts = np.vstack([pa, pb]) if len(pb) else pa
    if pts.shape[0] == 0:
        return pts, np.zeros(0)
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    rho = np.zeros(uniq.shape[0])
    np.add.at(rho, inv[:len(wa)], wa)
    np.add.at(rho, inv[len(wa):], -np.asarray(wb))
    return uniq, rho


def bl_lp(points: np.ndarray, rho: np.ndarray, bound: np.ndarray) -> tuple[float, np.ndarray]:
    """max sum f_i rho_i  s.t. |f_i - f_j| <= d_ij, |f_i| <= bound_i."""
    m = points.shape[0]
    if m == 0 or not np.any(rho):
        return 0.0, np.zeros(m)
    if m == 1:
        f = np.array([bound[0] * np.sign(rho[0])])
        return float(abs(rho[0]) * bound[0]), f
    ii, jj = np.triu_indices(m, 1)
    d = np.linalg.norm(points[ii] - points[jj], axis=1)
    k = ii.size
    rows = np.concatenate([np.arange(k).repeat(2), (np.arange(k) + k).repeat(2)])
    cols = np.concatenate([np.column_stack([ii, jj]).reshape(-1),
                           np.column_stack([ii, jj]).reshape(-1)])
    vals = np.concatenate([np.tile([1.0, -1.0], k), np.tile([-1.0, 1.0], k)])
    A = coo_matrix((vals, (rows, cols)), shape=(2 * k, m)).tocsr()
    b = np.concatenate([d, d])
    res = linprog(-rho, A_ub=A, b_ub=b, bounds=list(zip(-bound, bound)), method="highs")
    if res.status != 0:
        raise SolverError(f"LP solver failed: {res.message}")
    return float(-res.fun), res.x


def bl_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, ball: Ball) -> float:
    """Exact dist_B(mu, nu) by the primal LP; atoms outside the ball are dropped."""
    if mu.d != nu.d:
        raise MeasureError("measures live in different dimensions")
    pa, wa = _in_ball(mu, ball)
    pb, wb = _in_ball(nu, ball)
    pts, rho = _merge_atoms(pa, wa, pb, wb)
    bound = ball.radius - np.linalg.norm(pts - ball.center, axis=1) if len(pts) else np.zeros(0)
    val, _ = bl_lp(pts, rho, np.maximum(bound, 0.0))
    return abs(val)


# ---------------------------------------------------------------------------
# transport (dual) form
# ---------------------------------------------------------------------------

def _initial_arcs(src_pts, dst_pts, k):
    """Each source to its k nearest targets and each target to its k nearest sources."""
    from scipy.spatial import cKDTree
    m, K = len(src_pts), len(dst_pts)
    kk = min(k, K)
    _, a = cKDTree(dst_pts).query(src_pts, k=kk)
    a = np.asarray(a).reshape(m, kk)
    ks = min(k, m)
    _, b = cKDTree(src_pts).query(dst_pts, k=ks)
    b = np.asarray(b).reshape(K, ks)
    ii = np.concatenate([np.repeat(np.arange(m), kk), b.reshape(-1)])
    jj = np.concatenate([a.reshape(-1), np.repeat(np.arange(K), ks)])
    key = np.unique(ii.astype(np.int64) * K + jj)
    return key // K, key % K


def _violations(src_pts, dst_pts, y_src, y_dst, tol, chunk=512):
    """Arcs whose reduced cost |z_i - q_k| - y_i - y_k is negative."""
    out_i, out_k = [], []
    for s0 in range(0, len(src_pts), chunk):
        D = cdist(src_pts[s0:s0 + chunk], dst_pts)
        red = D - y_src[s0:s0 + chunk, None] - y_dst[None, :]
        i, k = np.nonzero(red < -tol)
        out_i.append(i + s0)
        out_k.append(k)
    return np.concatenate(out_i), np.concatenate(out_k)


def transport_cost(src_pts, src_w, src_bd, dst_pts, dst_w, dst_bd, *,
                   free_scale: bool = False, dense_limit: int = 20000,
                   neighbours: int = 8, max_rounds: int = 50):
    """
    Minimal cost of moving src onto dst (or dst scaled by c >= 0 when
    free_scale) with the boundary as an unlimited source/sink.

    Small problems use every arc.  Larger ones start from nearest-neighbour
    arcs and add arcs with negative reduced cost until none is left, so the
    optimum is exact either way.  Returns (cost, c); c is 1 unless free_scale.
    """
    src_pts = np.atleast_2d(src_pts)
    dst_pts = np.atleast_2d(dst_pts)
    src_w = np.asarray(src_w, dtype=float)
    dst_w = np.asarray(dst_w, dtype=float)
    m, K = len(src_w), len(dst_w)
    if K == 0:
        return float(np.dot(src_w, src_bd)), (0.0 if free_scale else 1.0)
    if m == 0:
        if free_scale:
            return 0.0, 0.0
        return float(np.dot(dst_w, dst_bd)), 1.0
    if m * K <= dense_limit:
        D = cdist(src_pts, dst_pts)
        ii, kk = np.nonzero(D < (src_bd[:, None] + dst_bd[None, :]))
    else:
        ii, kk = _initial_arcs(src_pts, dst_pts, neighbours)
    rhs = np.concatenate([src_w, np.zeros(K) if free_scale else dst_w])
    scale_tol = 1e-12 * max(1.0, float(np.max(src_bd, initial=0)), float(np.max(dst_bd, initial=0)))
    for _ in range(max_rounds):
        npi = ii.size
        nvar = npi + m + K + (1 if free_scale else 0)
        arc_cost = np.linalg.norm(src_pts[ii] - dst_pts[kk], axis=1)
        cost = np.concatenate([arc_cost, src_bd, dst_bd, [0.0] if free_scale else []])
        rows = np.concatenate([ii, np.arange(m), m + kk, m + np.arange(K)])
        cols = np.concatenate([np.arange(npi), npi + np.arange(m), np.arange(npi),
                               npi + m + np.arange(K)])
        vals = np.ones(rows.size)
        if free_scale:
            rows = np.concatenate([rows, m + np.arange(K)])
            cols = np.concatenate([cols, np.full(K, nvar - 1)])
            vals = np.concatenate([vals, -dst_w])
        A = coo_matrix((vals, (rows, cols)), shape=(m + K, nvar)).tocsr()
        res = linprog(cost, A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
        if res.status != 0:
            raise SolverError(f"transport LP failed: {res.message}")
        if m * K <= dense_limit:
            break
        y = res.eqlin.marginals
        vi, vk = _violations(src_pts, dst_pts, y[:m], y[m:], scale_tol)
        if vi.size == 0:
            break
        key = np.union1d(ii.astype(np.int64) * K + kk, vi.astype(np.int64) * K + vk)
        ii, kk = key // K, key % K
    else:
        raise SolverError("column generation did not converge")
    c = float(res.x[-1]) if free_scale else 1.0
    return float(res.fun), c


def _ot():
    # POT probes every installed tensor backend on import; none is needed here
    for name in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{name}", "1")
    import ot
    return ot


def _emd_matrix(src_pts, src_bd, dst_pts, dst_bd) -> np.ndarray:
    m, K = len(src_bd), len(dst_bd)
    M = np.zeros((m + 1, K + 1))
    M[:m, :K] = cdist(src_pts, dst_pts)
    M[:m, K] = src_bd
    M[m, :K] = dst_bd
    return M


def _emd(M, src_w, dst_w):
    a = np.append(src_w, np.sum(dst_w))
    b = np.append(dst_w, np.sum(src_w))
    cost, log = _ot().emd2(a, b, M, numItermax=10 ** 8, log=True)
    if log.get("warning"):
        raise SolverError(f"network simplex: {log['warning']}")
    return float(cost), log


def emd_cost(src_pts, src_w, src_bd, dst_pts, dst_w, dst_bd) -> float:
    """Same optimum as transport_cost(free_scale=False), by network simplex."""
    if len(src_w) == 0 or len(dst_w) == 0:
        return float(np.dot(src_w, src_bd) + np.dot(dst_w, dst_bd))
    return _emd(_emd_matrix(src_pts, src_bd, dst_pts, dst_bd), src_w, dst_w)[0]


def scaled_transport(src_pts, src_w, src_bd, dst_pts, dst_w, dst_bd, *,
                     rtol: float = 1e-9, max_iter: int = 100) -> tuple[float, float, dict]:
    """
    min over c >= 0 of the transport cost from src onto c*dst.

    The cost V(c) is convex and piecewise linear; every network-simplex solve
    returns V(c) and, from its dual potentials, a subgradient
    V'(c) = sum_k dst_w_k v_k + (sum_k dst_w_k) u_boundary.  Cutting planes
    on a bracket [lo, hi] with V'(lo) <= 0 <= V'(hi) close the gap between
    the best value found and the lower model; the returned c carries a
    certified gap of at most rtol * V.  Returns (cost, c, info).
    """
    src_w = np.asarray(src_w, dtype=float)
    dst_w = np.asarray(dst_w, dtype=float)
    lam = float(dst_w.sum())
    v0 = float(np.dot(src_w, src_bd))
    if len(src_w) == 0 or len(dst_w) == 0 or lam == 0:
        return v0, 0.0, {"iterations": 0, "gap": 0.0}
    M = _emd_matrix(src_pts, src_bd, dst_pts, dst_bd)
    m, K = len(src_w), len(dst_w)
    # slope at c = 0: an infinitesimal node mass is fed either from the
    # boundary or by diverting an atom that would otherwise leave the ball
    feed = np.minimum(dst_bd, np.min(M[:m, :K] - np.asarray(src_bd)[:, None], axis=0))
    g0 = float(dst_w @ feed)
    if g0 >= 0:
        return v0, 0.0, {"iterations": 0, "gap": 0.0}

    def evaluate(c):
        cost, log = _emd(M, src_w, c * dst_w)
        g = float(dst_w @ log["v"][:K] + lam * log["u"][m])
        return cost, g

    lo, vlo, glo = 0.0, v0, g0
    hi = max(float(src_w.sum()) / lam, 1e-300)
    vhi, ghi = evaluate(hi)
    it = 1
    while ghi < 0:
        lo, vlo, glo = hi, vhi, ghi
        hi *= 2.0
        vhi, ghi = evaluate(hi)
        it += 1
        if it > max_iter:
            raise SolverError("no upper bracket for the density c")
    best_v, best_c = (vlo, lo) if vlo <= vhi else (vhi, hi)
    gap = math.inf
    while it < max_iter:
        if ghi - glo <= 0:
            break
        # intersection of the tangent lines at lo and hi
        c = (vhi - vlo + glo * lo - ghi * hi) / (glo - ghi)
        c = min(max(c, lo), hi)
        lower = vlo + glo * (c - lo)
        gap = best_v - lower
        if gap <= rtol * max(best_v, 1e-300) or not lo < c < hi:
            break
        v, g = evaluate(c)
        it += 1
        if v < best_v:
            best_v, best_c = v, c
        if g < 0:
            lo, vlo, glo = c, v, g
        elif g > 0:
            hi, vhi, ghi = c, v, g
        else:
            best_v, best_c, gap = v, c, 0.0
            break
    return best_v, best_c, {"iterations": it, "gap": max(gap, 0.0)}


def bl_distance_dual(mu: DiscreteMeasure, nu: DiscreteMeasure, ball: Ball) -> float:
    """dist_B(mu, nu) through the transport problem; equals bl_distance."""
    pa, wa = _in_ball(mu, ball)
    pb, wb = _in_ball(nu, ball)
    pts, rho = _merge_atoms(pa, wa, pb, wb)
    bd = ball.radius - np.linalg.norm(pts - ball.center, axis=1) if len(pts) else np.zeros(0)
    pos, neg = rho > 0, rho < 0
    cost, _ = transport_cost(pts[pos], rho[pos], bd[pos], pts[neg], -rho[neg], bd[neg])
    return cost


# ---------------------------------------------------------------------------
# alpha numbers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlphaOptions:
    search_atoms: int = 64        # mu atoms in B_Q during the plane search
    search_nodes: int = 64        # plane lattice nodes across B_Q during the search
    final_atoms: int = 256        # atoms for the final evaluation at the chosen plane
    angle_step: float = 0.02
    offset_step: float = 0.05     # in units of side(Q)
    steps: int = 5
    tensor_limit: int = 121
    polish: bool = True


def _aggregate(pts, w, frame_full, max_atoms):
    """Bin atoms on a grid aligned with frame_full until at most max_atoms remain."""
    if len(w) <= max_atoms:
        return pts, w, 0.0
    coords = pts @ frame_full.T
    span = float(np.max(np.ptp(coords, axis=0)))
    side = span / max_atoms
    while True:
        key = np.floor(coords / side).astype(np.int64)
        _, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        if inv.max() + 1 <= max_atoms:
            break
        side *= 1.25
    nb = inv.max() + 1
    mass = np.bincount(inv, weights=w, minlength=nb)
    cen = np.column_stack([np.bincount(inv, weights=w * pts[:, k], minlength=nb)
                           for k in range(pts.shape[1])]) / mass[:, None]
    err = float(np.sum(w * np.linalg.norm(pts - cen[inv], axis=1)))
    return cen, mass, err


def plane_lattice(plane: AffinePlane, center: np.ndarray, radius: float, spacing: float):
    """Nodes k*spacing (plane coordinates about the foot of center) inside B(center, radius)."""
    foot = plane.project(center)[0]
    off = float(np.linalg.norm(center - foot))
    if off >= radius:
        return np.zeros((0, plane.d))
    r_in = math.sqrt(radius ** 2 - off ** 2)
    kmax = int(math.floor(r_in / spacing))
    ax = np.arange(-kmax, kmax + 1) * spacing
    grids = np.meshgrid(*([ax] * plane.n), indexing="ij")
    coords = np.column_stack([g.ravel() for g in grids])
    nodes = foot + coords @ plane.frame
    keep = np.linalg.norm(nodes - center, axis=1) < radius
    return nodes[keep]


class AlphaProblem:
    """
    The alpha objective on one cube at a fixed discretization: mu restricted
    to B_Q (binned to at most `atoms` atoms) against c times a lattice on the
    plane with `nodes` nodes per ball diameter, never finer than h/2.
    """

    def __init__(self, mu: DiscreteMeasure, Q: Cube, atoms: int = 64, nodes: int = 64):
        self.mu = mu
        self.Q = Q
        self.center = Q.center
        self.radius = Q.ball_radius
        self.side = Q.side
        self.n = mu.n
        pts, w = _in_ball(mu, Ball(Q.center, self.radius))
        if len(w) < mu.n + 1:
            raise MeasureError(f"degenerate cube {Q.id}: {len(w)} atoms in B_Q")
        self.raw_mass = float(w.sum())
        self.seed = weighted_pca_plane(pts, w, mu.n)
        self._full = np.vstack([self.seed.frame, self.seed.normal_frame()])
        self.pts, self.w, self.agg_error = _aggregate(pts, w, self._full, atoms)
        self.bd = self.radius - np.linalg.norm(self.pts - self.center, axis=1)
        per_axis = nodes if mu.n == 1 else max(8, int(round(nodes ** (1.0 / mu.n))))
        self.spacing = max(mu.resolution / 2, 2 * self.radius / per_axis)
        self.evaluations = 0

    # parametrisation: rotation exp(M) of the seed frame, then offsets along normals
    @property
    def n_angles(self) -> int:
        return self.n * (self.mu.d - self.n)

    @property
    def n_offsets(self) -> int:
        return self.mu.d - self.n

    def plane(self, params) -> AffinePlane:
        params = np.asarray(params, dtype=float)
        d, n = self.mu.d, self.n
        A = params[:self.n_angles].reshape(n, d - n)
        rot = self._full
        if np.any(A):
            M = np.zeros((d, d))
            M[:n, n:] = A
            M[n:, :n] = -A.T
            rot = expm(M) @ self._full
        base = self.seed.base + params[self.n_angles:] @ rot[n:]
        q, _ = np.linalg.qr(rot[:n].T)
        return AffinePlane(base, q.T)

    def nodes(self, plane: AffinePlane):
        nodes = plane_lattice(plane, self.center, self.radius, self.spacing)
        lam = np.full(len(nodes), self.spacing ** self.n)
        bd = self.radius - np.linalg.norm(nodes - self.center, axis=1)
        return nodes, lam, bd

    def cost(self, plane: AffinePlane, c: Optional[float] = None) -> tuple[float, float]:
        """Raw transport cost (not normalised) and the density c used; c=None optimises it."""
        nodes, lam, bd = self.nodes(plane)
        if c is None:
            cost, c_opt, info = scaled_transport(self.pts, self.w, self.bd, nodes, lam, bd)
            self.evaluations += info["iterations"]
            return cost, c_opt
        self.evaluations += 1
        return emd_cost(self.pts, self.w, self.bd, nodes, c * lam, bd), float(c)

    def best_c(self, plane: AffinePlane) -> tuple[float, float]:
        """Exact minimum of the convex fixed-plane objective over c."""
        return self.cost(plane)

    def value(self, params, c: Optional[float] = None) -> float:
        return self.cost(self.plane(params), c)[0] / self.side ** (self.n + 1)

    def floor(self, c: float) -> float:
        """Bound on the discretization error of the returned value."""
        cells = c * self.spacing * math.sqrt(self.n) / 2 * (2 * self.radius) ** self.n
        return (self.agg_error + cells) / self.side ** (self.n + 1)


def _search(prob: AlphaProblem, opt: AlphaOptions, c: float):
    """Local plane search at fixed c: tensor grid (or axis sweeps), then Nelder-Mead."""
    na, no = prob.n_angles, prob.n_offsets
    steps = np.arange(-opt.steps, opt.steps + 1)
    scales = np.array([opt.angle_step] * na + [opt.offset_step * prob.side] * no)
    dim = na + no
    f = lambda p: prob.value(p, c)
    best = np.zeros(dim)
    best_val = f(best)
    if (2 * opt.steps + 1) ** dim <= opt.tensor_limit:
        for combo in itertools.product(steps, repeat=dim):
            if not np.any(combo):
                continue
            p = np.asarray(combo, dtype=float) * scales
            v = f(p)
            if v < best_val:
                best, best_val = p, v
    else:
        for axis in range(dim):
            for s in steps:
                if s == 0:
                    continue
                p = best.copy()
                p[axis] += s * scales[axis]
                v = f(p)
                if v < best_val:
                    best, best_val = p, v
    if opt.polish and best_val > 0:
        simplex = np.vstack([best] + [best + np.eye(dim)[k] * scales[k] / 2 for k in range(dim)])
        res = minimize(f, best, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": 1e-3 * scales.min(),
                                "fatol": 1e-6 * best_val, "maxfev": 30 * dim})
        if res.fun < best_val:
            best, best_val = res.x, float(res.fun)
    return best, best_val


def alpha_number(mu: DiscreteMeasure, Q: Cube,
                 options: AlphaOptions = AlphaOptions()) -> CoefficientSample:
    """
    alpha(Q) = side^-(n+1) min_{c, L} dist_{B_Q}(mu, c H^n|_L).

    L is found by a local search about the PCA plane on a coarse
    discretization, at the density c that is optimal for the PCA plane; c is
    then re-optimised for the chosen plane.  The returned value is the exact
    transport optimum (jointly over c) at that plane on the fine
    discretization.
    """
    mu.require_nonnegative("alpha_number")
    coarse = AlphaProblem(mu, Q, options.search_atoms, options.search_nodes)
    _, c = coarse.best_c(coarse.seed)
    params, _ = _search(coarse, options, c)
    coarse_val, c = coarse.best_c(coarse.plane(params))
    coarse_val /= Q.side ** (mu.n + 1)
    fine = AlphaProblem(mu, Q, options.final_atoms, 2 * options.final_atoms)
    plane = fine.plane(params)
    cost, c = fine.cost(plane)
    val = cost / Q.side ** (mu.n + 1)
    return CoefficientSample(Q.center.copy(), Q.side, val, plane=plane, c=c, meta={
        "cube": Q.id, "ball_radius": fine.radius, "spacing": fine.spacing,
        "atoms": int(len(fine.w)), "aggregation_error": fine.agg_error,
        "floor": fine.floor(c), "search_value": coarse_val,
        "evaluations": coarse.evaluations + fine.evaluations})


def beta_alpha_lhs(mu: DiscreteMeasure, Q: Cube, plane: AffinePlane) -> float:
    """side^-n int_{B(z_Q, 2 side)} dist(y, L)/side dmu(y)."""
    idx = mu.ball_indices(Q.center, 2 * Q.side)
    return float(mu.weights[idx] @ plane.dist(mu.points[idx]) / Q.side ** (mu.n + 1))
