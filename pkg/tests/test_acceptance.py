"""
Acceptance run: one test per criterion, each recording a PASS/FAIL line that
is repeated in the terminal summary.  Run alone with

    pytest tests/test_acceptance.py -v
"""
import math
import time

import numpy as np
import pytest

from cnumbers.coefficients import (
    Kind,
    beta_number,
    circular_projection_batch,
    coefficient_profile,
)
from cnumbers.cubes import build_christ_cubes
from cnumbers.czdecomp import cz_decompose, verify_cz
from cnumbers.energies import (
    ScaleGrid,
    carleson_energy,
    default_grid,
    dini_curve,
    martingale_decompose,
    martingale_energy,
)
from cnumbers.generators import (
    gen_cantor4,
    gen_kplane,
    gen_lipschitz_graph,
    gen_omega,
    gen_parallel_lines,
    gen_random_segment,
    gen_segment,
)
from cnumbers.measures import Ball, ad_regularity, ball_indices_scan, build_measure
from cnumbers.transport import alpha_number, beta_alpha_lhs, bl_distance
from cnumbers.wavelets import build_basis, coefficients_of_g

from oracles import beta2_oracle, vertex_oracle
from suites import cz_instances

SPHERE_MAPS = [
    gen_omega([(1, 1.0, 0.0)], 0.02),
    gen_omega([(2, 1.0, 1.0)], 0.02),
    gen_omega([(1, 0.3, 0.7), (2, -0.2, 0.1)], 0.05),
    gen_omega([(3, 0.2, -0.4)], 0.09),
    gen_omega([(1, 0.5, 0.0), (4, 0.1, 0.3)], 0.09),
]
SCALES = 0.1 * 100.0 ** ((np.arange(20) + 0.5) / 20)      # 20 log-spaced t in [0.1, 10]


def _quantile_indices(mu, count):
    spt = mu.support
    return spt[np.floor((np.arange(count) + 0.5) * spt.size / count).astype(int)]


@pytest.fixture(scope="module")
def lines():
    mu = gen_parallel_lines(3, 1.0, 50.0, 0.01)
    middle = np.flatnonzero((mu.points[:, 1] == 0) & (np.abs(mu.points[:, 0]) < 40))
    return mu, middle[np.linspace(0, middle.size - 1, 100).round().astype(int)]


@pytest.fixture(scope="module")
def dichotomy_measures():
    graph = gen_lipschitz_graph(0.3, 1.0, extent=8.0, spacing=0.01)
    cantor = gen_cantor4(6)
    return ((graph, ScaleGrid(graph.resolution, 8.0), _quantile_indices(graph, 100)),
            (cantor, ScaleGrid(4.0 ** -6, 1.0), _quantile_indices(cantor, 100)))


def _max_symmetric(mu, idx, kind):
    return max(float(np.abs(coefficient_profile(mu, mu.points[i], SCALES, kind)).max())
               for i in idx)


def _dichotomy(measures, kind):
    (graph, g_grid, g_idx), (cantor, c_grid, c_idx) = measures
    g = np.array([dini_curve(graph, graph.points[i], g_grid, kind).slope for i in g_idx])
    c = np.array([dini_curve(cantor, cantor.points[i], c_grid, kind).slope for i in c_idx])
    return float(np.mean(g <= 0.05)), float(np.mean(c >= 0.3))


def test_criterion_01_symmetric_vanishing(lines, criterion):
    mu, idx = lines
    t0 = time.perf_counter()
    worst = _max_symmetric(mu, idx, Kind("c"))
    dt = time.perf_counter() - t0
    criterion(1, worst <= 1e-8 and dt <= 10, f"max |C| = {worst:.2e} over 100 x 20, {dt:.1f} s")


def test_criterion_02_circular_projection(criterion):
    rng = np.random.default_rng(0)
    worst_iso = worst_mem = 0.0
    t0 = time.perf_counter()
    dims = rng.integers(2, 5, 10 ** 4)
    ranks = np.array([rng.integers(1, d) for d in dims])
    for d, n in sorted(set(zip(dims.tolist(), ranks.tolist()))):
        m = int(np.sum((dims == d) & (ranks == n)))
        x = rng.normal(size=(m, d))
        frames = np.linalg.qr(rng.normal(size=(m, d, n)))[0].transpose(0, 2, 1)
        y = x + 3 * rng.normal(size=(m, d))
        p = circular_projection_batch(x, frames, y)
        v = p - x
        worst_iso = max(worst_iso, float(np.max(np.abs(
            np.linalg.norm(v, axis=1) - np.linalg.norm(y - x, axis=1)))))
        resid = v - np.einsum("mk,mkd->md", np.einsum("mkd,md->mk", frames, v), frames)
        worst_mem = max(worst_mem, float(np.linalg.norm(resid, axis=1).max()))
    dt = time.perf_counter() - t0
    ok = worst_iso <= 1e-10 and worst_mem <= 1e-10 and dt <= 1.0
    criterion(2, ok, f"isometry {worst_iso:.1e}, membership {worst_mem:.1e} "
                     f"over 10^4 triples, {dt:.3f} s")


def test_criterion_03_dini_dichotomy(dichotomy_measures, criterion):
    t0 = time.perf_counter()
    bounded, growing = _dichotomy(dichotomy_measures, Kind("c"))
    dt = time.perf_counter() - t0
    ok = bounded >= 0.9 and growing >= 0.9 and dt <= 300
    criterion(3, ok, f"graph bounded {bounded:.0%}, cantor growing {growing:.0%}, {dt:.1f} s")


def test_criterion_04_carleson_linearity(criterion):
    t0 = time.perf_counter()
    seg = gen_segment(8.0, 0.01)
    seg_tree = build_christ_cubes(seg, 0, 10)
    seg_r = [carleson_energy(seg, seg_tree, seg_tree.cube_of(0, j)).ratio for j in (3, 4, 5)]

    graph = gen_lipschitz_graph(0.3, 1.0, extent=128.0, spacing=0.02, start=-64.0)
    g_tree = build_christ_cubes(graph, 0, 12)
    anchor = int(np.argmin(np.abs(graph.points[:, 0] - 0.3)))
    g_r = [carleson_energy(graph, g_tree, g_tree.cube_of(anchor, j)).ratio for j in (3, 4, 5)]

    cantor = gen_cantor4(6)
    c_tree = build_christ_cubes(cantor, 0, 11)
    c_ratio = carleson_energy(cantor, c_tree, c_tree.roots[0]).ratio
    dt = time.perf_counter() - t0

    def spread(r):
        m = float(np.mean(r))
        return max(abs(v - m) for v in r) / m

    ok = spread(seg_r) <= 0.3 and spread(g_r) <= 0.3 and c_ratio >= 5 * max(g_r) and dt <= 600
    criterion(4, ok, f"segment spread {spread(seg_r):.1%}, graph spread {spread(g_r):.1%}, "
                     f"cantor/graph {c_ratio / max(g_r):.1f}x, {dt:.0f} s")


def test_criterion_05_beta_alpha(criterion):
    suite = {
        "segment": gen_segment(1.0, 0.005),
        "graph": gen_lipschitz_graph(0.3, 1.0, extent=4.0, spacing=0.02),
        "cantor": gen_cantor4(4),
        "lines": gen_parallel_lines(2, 0.05, 1.0, 0.01),
        "random": gen_random_segment(1.0, 300, seed=1),
        "kplane": gen_kplane(2, 1.0, 0.05),
    }
    K, cubes, where = 0.0, 0, ""
    for name, mu in suite.items():
        tree = build_christ_cubes(mu, 0, 4 if mu.n == 1 else 3)
        for q in tree.cubes:
            if q.size < 50:
                continue
            a = alpha_number(mu, q)
            excess = beta_alpha_lhs(mu, q, a.plane) - a.meta["floor"]
            cubes += 1
            if excess > 0:
                k = excess / a.value if a.value > 0 else math.inf
                if k > K:
                    K, where = k, f"{name} level {q.level}"
    criterion(5, K <= 10, f"K = {K:.3f} over {cubes} cubes (max at {where or 'none'})")


def test_criterion_06_smooth_bound(criterion):
    suite = {
        "segment": gen_segment(1.0, 1e-3),
        "graph": gen_lipschitz_graph(0.3, 1.0, extent=8.0, spacing=0.01),
        "kplane": gen_kplane(2, 1.0, 0.02),
        "lines": gen_parallel_lines(3, 1.0, 10.0, 0.01),
    }
    K = {1: 0.0, 2: 0.0, 4: 0.0}
    for mu in suite.values():
        grid = default_grid(mu)
        _, c0 = ad_regularity(mu, 4 * grid.t_min, grid.t_max, 500)
        scale = c0 * math.gamma((mu.n + 2) / 2)
        for i in _quantile_indices(mu, 20):
            for N in K:
                prof = coefficient_profile(mu, mu.points[i], grid.nodes, Kind("csmooth", N=N))
                K[N] = max(K[N], float(np.linalg.norm(prof, axis=1).max()) / scale)
    ok = all(v <= 3 for v in K.values())
    criterion(6, ok, "K_N = " + ", ".join(f"{v:.3f} (N={N})" for N, v in K.items()))


def test_criterion_07_wavelet_lemma(criterion):
    t0 = time.perf_counter()
    table = coefficients_of_g(build_basis(3, 12, 1), 0, range(-4, 11))
    inner = max(abs(a) for cls in ("interior", "exterior") for _, a in table.items(cls=cls))
    small = table.decay_exponent(range(3, 11), "max")
    large = table.decay_exponent(range(-4, -2), "l2")
    dt = time.perf_counter() - t0
    ok = inner <= 1e-6 and abs(small - 0.5) <= 0.1 and abs(large + 1.5) <= 0.15 and dt <= 120
    criterion(7, ok, f"off-boundary max {inner:.1e}, small exponent {small:.3f}, "
                     f"large exponent {large:.3f}, {dt:.1f} s")


def test_criterion_08_cz_postconditions(criterion):
    failures, c_overlap, c_sum = [], 0.0, 0.0
    instances = cz_instances()
    for name, nu, mu, lam in instances:
        checks = verify_cz(cz_decompose(nu, mu, lam), nu, mu)
        failures += [f"{name}:{c.id}" for c in checks if not c.passed]
        c_overlap = max(c_overlap, checks[0].constant)
        c_sum = max(c_sum, checks[9].constant)
    ok = not failures and len(instances) >= 20 and c_overlap <= 8 and c_sum <= 4
    criterion(8, ok, f"{len(instances)} instances, failures {failures or 'none'}, "
                     f"c_overlap {c_overlap:g}, sum|b|/lambda {c_sum:.3f}")


def test_criterion_09_martingale_parseval(criterion):
    mu = gen_segment(1.0, 2e-3)
    tree = build_christ_cubes(mu, 0, 2)
    R = tree.roots[0]
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        f = rng.normal(size=len(mu)) * rng.exponential(size=len(mu))
        en = martingale_energy(tree, R, martingale_decompose(tree, R, f))
        norm = float(mu.weights[R.members] @ f[R.members] ** 2)
        worst = max(worst, abs(en["root"] + en["differences"] + en["residual"] - norm) / norm)
    criterion(9, worst <= 1e-9, f"max relative Parseval defect {worst:.1e} over 100 trials")


def test_criterion_10_omega_robustness(lines, dichotomy_measures, criterion):
    mu, idx = lines
    worst, fractions = 0.0, []
    for om in SPHERE_MAPS:
        kind = Kind("comega", omega=om)
        worst = max(worst, _max_symmetric(mu, idx, kind))
        fractions.append(_dichotomy(dichotomy_measures, kind))
    ok = worst <= 1e-8 and all(b >= 0.9 and g >= 0.9 for b, g in fractions)
    criterion(10, ok, f"max |C_Omega| = {worst:.1e}; bounded/growing fractions "
                      + ", ".join(f"{b:.0%}/{g:.0%}" for b, g in fractions))


def test_criterion_11_oracles(criterion):
    rng = np.random.default_rng(11)
    ball_bad = beta_err = bl_err = 0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        mu = build_measure(rng.normal(size=(200, d)), rng.uniform(0, 1, 200), 1)
        x, r = rng.normal(size=d), float(rng.uniform(0.1, 2))
        ball_bad += not np.array_equal(mu.ball_indices(x, r), ball_indices_scan(mu, x, r))
    for _ in range(100):
        m = int(rng.integers(5, 200))
        pts = rng.normal(size=(m, 2)) * [1.0, rng.uniform(0.05, 1.0)]
        mu = build_measure(pts, rng.uniform(0.1, 1, m), 1)
        got = beta_number(mu, Ball(np.zeros(2), 10.0), 2).value
        want = beta2_oracle(pts, mu.weights, 10.0)
        beta_err = max(beta_err, abs(got - want) / max(want, 1e-12))
    for _ in range(100):
        m = int(rng.integers(1, 4))
        pts = rng.uniform(-1, 1, (m, 2))
        wa, wb = rng.uniform(0, 1, m), rng.uniform(0, 1, m)
        got = bl_distance(build_measure(pts, wa, 1), build_measure(pts, wb, 1),
                          Ball(np.zeros(2), 1.5))
        want = abs(vertex_oracle(pts, wa - wb, 1.5 - np.linalg.norm(pts, axis=1)))
        bl_err = max(bl_err, abs(got - want))
    ok = ball_bad == 0 and beta_err <= 1e-6 and bl_err <= 1e-9
    criterion(11, ok, f"ball mismatches {ball_bad}, beta2 rel err {beta_err:.1e}, "
                      f"bl abs err {bl_err:.1e} (100 each)")
