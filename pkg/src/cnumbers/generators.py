"""
Deterministic synthetic measures.

All default constructions are lattice based so that identical parameters
give bit-identical point clouds.  Each generator records analytic ground
truth (density, arclength, Lipschitz constant, ...) in ``meta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from cnumbers.measures import DiscreteMeasure, MeasureError, build_measure


def _lattice(extent: float, spacing: float) -> np.ndarray:
    """Symmetric 1D lattice k*spacing, |k*spacing| <= extent."""
    if spacing <= 0:
        raise MeasureError("spacing must be positive")
    k = int(math.floor(extent / spacing + 1e-9))
    return np.arange(-k, k + 1, dtype=float) * spacing


def gen_segment(length: float = 1.0, spacing: float = 1e-3, *,
                center: bool = False) -> DiscreteMeasure:
    """Unit-density samples of [0, length] x {0} (or centered at the origin)."""
    if spacing <= 0:
        raise MeasureError("spacing must be positive")
    m = int(round(length / spacing))
    xs = np.arange(m + 1, dtype=float) * spacing
    if center:
        xs = np.arange(-(m // 2), m // 2 + 1, dtype=float) * spacing
    pts = np.column_stack([xs, np.zeros_like(xs)])
    w = np.full(xs.size, spacing)
    return build_measure(pts, w, 1, meta={
        "generator": "segment", "length": float(xs[-1] - xs[0]),
        "density": 1.0, "spacing": spacing})


def gen_kplane(n: int = 1, extent: float = 1.0, spacing: float = 0.05) -> DiscreteMeasure:
    """Lattice on [-extent, extent]^n x {0} in R^{n+1}, weights spacing^n."""
    if n < 1:
        raise MeasureError("n must be >= 1")
    ax = _lattice(extent, spacing)
    grids = np.meshgrid(*([ax] * n), indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids] + [np.zeros(grids[0].size)])
    w = np.full(pts.shape[0], spacing ** n)
    return build_measure(pts, w, n, meta={
        "generator": "kplane", "extent": extent, "density": 1.0, "spacing": spacing})


def gen_lipschitz_graph(amplitude: float = 0.3, frequency: float = 1.0,
                        extent: float = 8.0, spacing: float = 0.01,
                        start: float = 0.0) -> DiscreteMeasure:
    """
    Arclength-uniform samples of the graph of a*sin(f*x) over
    [start, start + extent], each carrying weight equal to its arclength cell.
    """
    lip = amplitude * frequency
    if not lip < 1:
        raise MeasureError(f"Lipschitz constant a*f = {lip} must be < 1")
    if spacing <= 0 or extent <= 0:
        raise MeasureError("spacing and extent must be positive")
    fine = np.linspace(start, start + extent, int(extent / spacing) * 64 + 1)
    speed = np.sqrt(1.0 + (amplitude * frequency * np.cos(frequency * fine)) ** 2)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(fine))])
    total = arc[-1]
    m = int(round(total / spacing))
    ds = total / m
    s = np.arange(m + 1) * ds
    xs = np.interp(s, arc, fine)
    pts = np.column_stack([xs, amplitude * np.sin(frequency * xs)])
    w = np.full(m + 1, ds)
    w[0] = w[-1] = ds / 2
    return build_measure(pts, w, 1, meta={
        "generator": "lipschitz_graph", "amplitude": amplitude,
        "frequency": frequency, "extent": extent, "arclength": float(total),
        "lipschitz": lip, "density": 1.0, "spacing": float(ds)})


def cantor4_corners(generations: int) -> np.ndarray:
    g = int(generations)
    pts = np.zeros((1, 2))
    for k in range(g):
        off = 0.75 * 4.0 ** (-k)
        shifts = np.array([[0.0, 0.0], [off, 0.0], [0.0, off], [off, off]])
        pts = (pts[:, None, :] + shifts[None, :, :]).reshape(-1, 2)
    return pts


def gen_cantor4(generations: int) -> DiscreteMeasure:
    """
    Lower-left corners of the 4^g squares of generation g of the four-corner
    Cantor set (contraction ratio 1/4), each with weight 4^-g, n = 1.
    """
    g = int(generations)
    if not 1 <= g <= 8:
        raise MeasureError("generations must be in 1..8")
    pts = cantor4_corners(g)
    w = np.full(pts.shape[0], 4.0 ** (-g))
    return build_measure(pts, w, 1, meta={
        "generator": "cantor4", "generations": g,
        "diam": math.sqrt(2.0) * (1.0 - 4.0 ** (-g))})


def gen_parallel_lines(count: int = 3, spacing: float = 1.0, extent: float = 50.0,
                       sample_spacing: float = 0.01) -> DiscreteMeasure:
    """
    Unit-density samples of `count` horizontal lines [-extent, extent] at
    heights 0, +-spacing, +-2*spacing, ... (centered configuration).
    """
    if count < 1:
        raise MeasureError("count must be >= 1")
    xs = _lattice(extent, sample_spacing)
    heights = (np.arange(count) - (count - 1) / 2.0) * spacing
    pts = np.column_stack([np.tile(xs, count), np.repeat(heights, xs.size)])
    w = np.full(pts.shape[0], sample_spacing)
    return build_measure(pts, w, 1, meta={
        "generator": "parallel_lines", "count": count, "spacing": spacing,
        "extent": extent, "density": 1.0, "sample_spacing": sample_spacing})


def gen_random_segment(length: float = 1.0, count: int = 1000, seed: int = 0) -> DiscreteMeasure:
    """i.i.d. uniform samples of a segment; robustness checks only."""
    rng = np.random.default_rng(seed)
    xs = np.sort(rng.uniform(0, length, count))
    pts = np.column_stack([xs, np.zeros(count)])
    return build_measure(pts, np.full(count, length / count), 1, meta={
        "generator": "random_segment", "seed": seed, "length": length})


def gen_omega(fourier_spec, delta: float):
    """SphereMap whose perturbation has max |psi'| equal to delta."""
    from cnumbers.coefficients import SphereMap
    return SphereMap.scaled(fourier_spec, delta)


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorSpec":
        return cls(kind=obj["kind"], params=dict(obj.get("params", {})),
                   seed=int(obj.get("seed", 0)))


_GENERATORS = {
    "segment": gen_segment,
    "kplane": gen_kplane,
    "lipschitz_graph": gen_lipschitz_graph,
    "cantor4": gen_cantor4,
    "parallel_lines": gen_parallel_lines,
    "random_segment": gen_random_segment,
}


def generate(spec: GeneratorSpec) -> DiscreteMeasure:
    try:
        fn = _GENERATORS[spec.kind]
    except KeyError:
        raise MeasureError(f"unknown generator {spec.kind!r}") from None
    params = dict(spec.params)
    if spec.kind == "random_segment":
        params.setdefault("seed", spec.seed)
    return fn(**params)
