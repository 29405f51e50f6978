"""
Compactly supported orthonormal wavelets with three vanishing moments and the
wavelet coefficients of g_i(y) = y_i 1_B(y), B the closed unit ball.

The scaling filter is the minimal-length Daubechies filter with three
vanishing moments (six taps, support [0, 5]).  Scaling function and wavelet
are tabulated by the cascade algorithm on the grid 2^-K Z.  For a dyadic cube
I = 2^-j ([0,1)^n + k) the basis element is

    phi_I(y) = 2^(jn/2) prod_m f_m(2^j y_m - k_m + 2),

with each f_m the scaling function or the wavelet, so that phi_I is supported
in 5I.  In one dimension f is always the wavelet; in two dimensions the three
mixed types (psi, phi), (phi, psi), (psi, psi) are used.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

SUPPORT = 5


def daubechies_filter(moments: int = 3) -> np.ndarray:
    """Minimal-phase orthonormal scaling filter with `moments` vanishing moments."""
    N = int(moments)
    if N < 1:
        raise ValueError("need at least one vanishing moment")
    # P(y) = sum_k C(N-1+k, k) y^k with y = (2 - z - 1/z)/4, times z^(N-1)
    zy = np.array([-0.25, 0.5, -0.25])
    poly = np.zeros(2 * N - 1)
    for k in range(N):
        term = np.array([1.0])
        for _ in range(k):
            term = np.convolve(term, zy)
        poly[N - 1 - k:N + k] += math.comb(N - 1 + k, k) * term
    roots = np.roots(poly) if N > 1 else np.zeros(0)
    h = np.array([1.0])
    for _ in range(N):
        h = np.convolve(h, [1.0, 1.0])
    for r in roots[np.abs(roots) < 1]:
        h = np.convolve(h, [1.0, -r])
    h = np.real(h)
    return h * math.sqrt(2.0) / h.sum()


def _cascade(h: np.ndarray, depth: int) -> np.ndarray:
    """Scaling function at k 2^-depth, k = 0 .. (L-1) 2^depth."""
    L = len(h)
    # exact values at the integers: eigenvector of the two-scale matrix
    M = np.zeros((L, L))
    for k in range(L):
        for j in range(L):
            if 0 <= 2 * k - j < L:
                M[k, j] = math.sqrt(2.0) * h[2 * k - j]
    w, v = np.linalg.eig(M)
    vals = np.real(v[:, np.argmin(np.abs(w - 1))])
    vals = vals / vals.sum()
    vals[0] = vals[-1] = 0.0
    for J in range(1, depth + 1):
        size = (L - 1) * 2 ** J + 1
        new = np.zeros(size)
        x = np.arange(size)
        for m in range(L):
            idx = x - m * 2 ** (J - 1)
            ok = (idx >= 0) & (idx < len(vals))
            new[ok] += math.sqrt(2.0) * h[m] * vals[idx[ok]]
        vals = new
    return vals


@dataclass(frozen=True)
class WaveletBasis:
    filter: np.ndarray
    cascade_depth: int
    n: int
    phi: np.ndarray = field(repr=False)      # scaling function on the 2^-K grid
    psi: np.ndarray = field(repr=False)      # wavelet on the 2^-K grid
    phi_mid: np.ndarray = field(repr=False)  # values at cell midpoints
    psi_mid: np.ndarray = field(repr=False)

    @property
    def dx(self) -> float:
        return 2.0 ** -self.cascade_depth

    @property
    def grid(self) -> np.ndarray:
        return np.arange(len(self.psi)) * self.dx

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(len(self.psi_mid)) + 0.5) * self.dx

    @property
    def types(self) -> list[tuple[int, ...]]:
        """Factor types per element: 1 = wavelet, 0 = scaling function."""
        if self.n == 1:
            return [(1,)]
        return [t for t in itertools.product((0, 1), repeat=self.n) if any(t)]

    def factor(self, kind: int, u) -> np.ndarray:
        """Scaling function (kind 0) or wavelet (kind 1) at arbitrary u."""
        table = self.psi if kind else self.phi
        return np.interp(np.asarray(u, dtype=float), self.grid, table, left=0.0, right=0.0)

    def element(self, level: int, offset, kind, points) -> np.ndarray:
        """phi_I at the given points, I = (level, offset) of the given type."""
        y = np.atleast_2d(np.asarray(points, dtype=float))
        if y.shape[1] != self.n:
            y = y.reshape(-1, self.n)
        out = np.full(len(y), 2.0 ** (level * self.n / 2))
        for m in range(self.n):
            out *= self.factor(kind[m], 2.0 ** level * y[:, m] - offset[m] + 2)
        return out


def build_basis(vanishing_moments: int = 3, cascade_depth: int = 12, n: int = 1) -> WaveletBasis:
    if n not in (1, 2):
        raise ValueError(f"unsupported dimension n = {n}; use 1 or 2")
    if vanishing_moments != 3:
        raise ValueError("only the three-moment family is provided")
    if cascade_depth < 8:
        raise ValueError("cascade_depth must be at least 8")
    h = daubechies_filter(vanishing_moments)
    L = len(h)
    g = np.array([(-1) ** m * h[L - 1 - m] for m in range(L)])
    fine = cascade_depth + 1
    phi = _cascade(h, fine)
    x = np.arange(len(phi))
    psi = np.zeros(len(phi))
    for m in range(L):
        idx = 2 * x - m * 2 ** fine
        ok = (idx >= 0) & (idx < len(phi))
        psi[ok] += math.sqrt(2.0) * g[m] * phi[idx[ok]]
    return WaveletBasis(h, int(cascade_depth), n, phi[::2].copy(), psi[::2].copy(),
                        phi[1::2].copy(), psi[1::2].copy())


def g_component(points, i: int) -> np.ndarray:
    """g_i(y) = y_i 1_B(y) on the closed unit ball."""
    y = np.atleast_2d(np.asarray(points, dtype=float))
    inside = np.einsum("ij,ij->i", y, y) <= 1.0
    return np.where(inside, y[:, i], 0.0)


def _box_distances(lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
    """Smallest and largest distance from the origin to the box [lo, hi]."""
    near = np.clip(0.0, lo, hi)
    far = np.maximum(np.abs(lo), np.abs(hi))
    return float(np.linalg.norm(near)), float(np.linalg.norm(far))


def cube_class(level: int, offset) -> str:
    """'boundary' if 5I meets the unit sphere, else 'interior' or 'exterior'."""
    side = 2.0 ** -level
    k = np.asarray(offset, dtype=float)
    near, far = _box_distances((k - 2) * side, (k + 3) * side)
    if near > 1.0:
        return "exterior"
    if far < 1.0:
        return "interior"
    return "boundary"


def relevant_offsets(level: int, n: int) -> list[tuple[int, ...]]:
    """Offsets k whose 5I meets the closed unit ball."""
    scale = 2.0 ** level
    rng = range(math.floor(-scale) - 3, math.ceil(scale) + 3)
    out = []
    for k in itertools.product(rng, repeat=n):
        if cube_class(level, k) != "exterior":
            out.append(tuple(k))
    return out


@dataclass
class CoefficientTable:
    n: int
    i: int
    cascade_depth: int
    entries: dict = field(default_factory=dict)   # (level, offset, type) -> a_I

    @property
    def levels(self) -> list[int]:
        return sorted({key[0] for key in self.entries})

    def __len__(self) -> int:
        return len(self.entries)

    def items(self, level: Optional[int] = None, cls: Optional[str] = None):
        for key, a in sorted(self.entries.items()):
            if level is not None and key[0] != level:
                continue
            if cls is not None and cube_class(key[0], key[1]) != cls:
                continue
            yield key, a

    def level_statistic(self, level: int, statistic: str = "max", cls: str = "boundary") -> float:
        vals = np.array([a for _, a in self.items(level, cls)])
        if vals.size == 0:
            return 0.0
        if statistic == "max":
            return float(np.abs(vals).max())
        if statistic == "l2":
            return float(np.sqrt(np.sum(vals ** 2)))
        raise ValueError(f"unknown statistic {statistic!r}")

    def decay_exponent(self, levels: Iterable[int], statistic: str = "max") -> float:
        """Least-squares slope of log(statistic) against log(side) over the levels."""
        levels = list(levels)
        stats = np.array([self.level_statistic(j, statistic) for j in levels])
        sides = 2.0 ** -np.asarray(levels, dtype=float)
        return float(np.polyfit(np.log(sides), np.log(stats), 1)[0])

    def sum_of_squares(self) -> float:
        return float(math.fsum(a * a for a in self.entries.values()))

    def write_csv(self, path) -> None:
        offs = [f"offset_{m}" for m in range(self.n)] if self.n > 1 else ["offset"]
        header = ["level", *offs] + (["type"] if self.n > 1 else []) + ["a"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for (level, k, t), a in self.items():
                tcol = ["".join(map(str, t))] if self.n > 1 else []
                w.writerow([level, *k, *tcol, repr(float(a))])


def coefficients_of_g(basis: WaveletBasis, i: int, level_range: Iterable[int]) -> CoefficientTable:
    """
    a_I = <g_i, phi_I> by midpoint Riemann sums at resolution 2^-K, for every
    I in the level range whose 5I meets the closed unit ball.
    """
    n = basis.n
    if not 0 <= i < n:
        raise ValueError(f"coordinate index {i} out of range for n = {n}")
    u = basis.midpoints
    du = basis.dx
    tables = {0: basis.phi_mid, 1: basis.psi_mid}
    table = CoefficientTable(n, i, basis.cascade_depth)
    for level in level_range:
        side = 2.0 ** -level
        for k in relevant_offsets(level, n):
            # y_m = (u + k_m - 2) 2^-j on the support of phi_I
            axes = [(u + k[m] - 2) * side for m in range(n)]
            if n == 1:
                gv = g_component(axes[0][:, None], 0)
                for t in basis.types:
                    a = side ** 0.5 * du * float(tables[t[0]] @ gv)
                    table.entries[(level, k, t)] = a
            else:
                Y0, Y1 = np.meshgrid(axes[0], axes[1], indexing="ij")
                G = np.where(Y0 ** 2 + Y1 ** 2 <= 1.0, (Y0, Y1)[i], 0.0)
                for t in basis.types:
                    a = side * du * du * float(tables[t[0]] @ G @ tables[t[1]])
                    table.entries[(level, k, t)] = a
    return table


def reconstruct_g(table: CoefficientTable, basis: WaveletBasis, points) -> np.ndarray:
    """Partial sum of a_I phi_I over the stored coefficients."""
    y = np.atleast_2d(np.asarray(points, dtype=float))
    if y.shape[1] != basis.n:
        y = y.reshape(-1, basis.n)
    out = np.zeros(len(y))
    for (level, k, t), a in table.items():
        if a == 0.0:
            continue
        side = 2.0 ** -level
        lo = (np.asarray(k) - 2) * side
        hi = (np.asarray(k) + 3) * side
        hit = np.all((y >= lo) & (y <= hi), axis=1)
        if np.any(hit):
            out[hit] += a * basis.element(level, k, t, y[hit])
    return out


def g_norm_squared(n: int, i: int = 0) -> float:
    """||g_i||^2 = int_B y_i^2 dy."""
    # |B| / (n + 2) by symmetry
    vol = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return vol / (n + 2)
