"""Shared instance families for the decomposition tests and the acceptance run."""
import numpy as np

from cnumbers.czdecomp import threshold
from cnumbers.generators import gen_cantor4, gen_lipschitz_graph, gen_segment
from cnumbers.measures import build_measure


def cz_instances():
    """Twenty (name, nu, mu, lambda) triples over segment, graph and Cantor measures."""
    rng = np.random.default_rng(0)
    seg = gen_segment(1.0, 1e-3)
    out = [("nu=mu", seg, seg, 4 * threshold(seg, seg))]
    for k in range(6):
        f = np.exp(3 * rng.standard_normal(len(seg))) * (rng.random(len(seg)) < 0.3)
        nu = build_measure(seg.points, f * seg.weights, 1, signed=True)
        out.append((f"density{k}", nu, seg, threshold(nu, seg) * rng.uniform(1.5, 20)))
    for k in range(4):
        f = rng.standard_normal(len(seg)) * np.exp(2 * rng.standard_normal(len(seg)))
        nu = build_measure(seg.points, f * seg.weights, 1, signed=True)
        out.append((f"signed{k}", nu, seg, threshold(nu, seg) * rng.uniform(1.5, 10)))
    for k in range(4):
        m = int(rng.integers(1, 6))
        pts = np.column_stack([rng.uniform(-0.4, 0.4, m), rng.uniform(-0.1, 0.1, m)])
        w = rng.choice([-1, 1], m) * rng.uniform(0.1, 1, m)
        nu = build_measure(pts, w, 1, signed=True)
        out.append((f"atoms{k}", nu, seg, threshold(nu, seg) * rng.uniform(1.5, 10)))
    graph = gen_lipschitz_graph(0.3, 1.0, extent=4.0, spacing=0.01)
    for k in range(3):
        idx = rng.choice(len(graph), 20, replace=False)
        nu = build_measure(graph.points[idx], rng.uniform(0.01, 0.2, 20), 1)
        out.append((f"graph{k}", nu, graph, threshold(nu, graph) * rng.uniform(1.5, 10)))
    cantor = gen_cantor4(5)
    for k in range(2):
        f = np.exp(2 * rng.standard_normal(len(cantor)))
        nu = build_measure(cantor.points, f * cantor.weights, 1, signed=True)
        out.append((f"cantor{k}", nu, cantor, threshold(nu, cantor) * rng.uniform(1.5, 10)))
    return out
