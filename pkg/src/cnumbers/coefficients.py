"""
Pointwise multiscale coefficients.

C-numbers measure how far the center of mass of mu in B(x,t) is from x:

    C(x,t) = t^-(n+1) * sum_{|p_i - x| < t} w_i (x - p_i)

plus a Gaussian-type smoothed variant, a variant with an odd angular
perturbation of the kernel (plane only), beta numbers by weighted PCA, and
the circular projection onto an affine plane.  The bounded-Lipschitz
distance and alpha numbers live in `cnumbers.transport`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from cnumbers.measures import Ball, DiscreteMeasure, MeasureError, inner_radius

_EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# planes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffinePlane:
    """base + span(frame); frame rows are orthonormal."""

    base: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float).reshape(-1)
        frame = np.atleast_2d(np.asarray(self.frame, dtype=float))
        if frame.shape[1] != base.size:
            raise ValueError("frame vectors must live in the ambient space of base")
        gram = frame @ frame.T
        if not np.allclose(gram, np.eye(frame.shape[0]), atol=1e-10):
            raise ValueError("frame is not orthonormal")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "frame", frame)

    @classmethod
    def from_vectors(cls, base, vectors) -> "AffinePlane":
        q, _ = np.linalg.qr(np.atleast_2d(np.asarray(vectors, dtype=float)).T)
        return cls(base, q.T)

    @property
    def n(self) -> int:
        return self.frame.shape[0]

    @property
    def d(self) -> int:
        return self.base.size

    def normal_frame(self) -> np.ndarray:
        """Orthonormal basis of the orthogonal complement (rows)."""
        _, _, vt = np.linalg.svd(self.frame, full_matrices=True)
        return vt[self.n:]

    def coords(self, y) -> np.ndarray:
        """Tangential coordinates of y - base."""
        return (np.atleast_2d(y) - self.base) @ self.frame.T

    def project(self, y) -> np.ndarray:
        return self.base + self.coords(y) @ self.frame

    def dist(self, y) -> np.ndarray:
        v = np.atleast_2d(y) - self.base
        r = v - (v @ self.frame.T) @ self.frame
        return np.linalg.norm(r, axis=1)

    def through(self, x) -> "AffinePlane":
        """Parallel translate passing through x."""
        return AffinePlane(np.asarray(x, dtype=float), self.frame)


# ---------------------------------------------------------------------------
# odd perturbations of the circle
# ---------------------------------------------------------------------------

_OMEGA_GRID = np.linspace(0.0, math.pi, 4096, endpoint=False)


@dataclass(frozen=True)
class SphereMap:
    """
    Odd self-map of the unit circle, theta -> theta + psi(theta) with

        psi(theta) = sum_k a_k cos(2k theta) + b_k sin(2k theta).

    psi is pi-periodic, so Omega(theta + pi) = Omega(theta) + pi.  The map is
    bi-Lipschitz with constant 1 + delta when max |psi'| <= delta; delta must
    stay below 1/10.
    """

    fourier_coeffs: tuple = ()
    delta: float = 0.0

    def __post_init__(self):
        coeffs = tuple((int(k), float(a), float(b)) for k, a, b in self.fourier_coeffs)
        if any(k < 1 for k, _, _ in coeffs):
            raise ValueError("mode numbers must be >= 1")
        object.__setattr__(self, "fourier_coeffs", coeffs)
        if not 0 <= self.delta < 0.1:
            raise ValueError(f"delta must lie in [0, 1/10), got {self.delta}")
        slope = self.max_slope()
        if slope > self.delta * (1 + 1e-9) + 1e-15:
            raise ValueError(f"max |psi'| = {slope} exceeds delta = {self.delta}")

    @classmethod
    def identity(cls) -> "SphereMap":
        return cls((), 0.0)

    @classmethod
    def scaled(cls, fourier_spec, delta: float) -> "SphereMap":
        """Rescale the given modes so that max |psi'| on the grid equals delta."""
        if not 0 <= delta < 0.1:
            raise ValueError("delta must lie in [0, 1/10)")
        spec = [(int(k), float(a), float(b)) for k, a, b in fourier_spec]
        if not spec:
            raise ValueError("empty Fourier specification")
        raw = cls.__new__(cls)
        object.__setattr__(raw, "fourier_coeffs", tuple(spec))
        object.__setattr__(raw, "delta", 0.0)
        slope = raw.max_slope()
        if slope == 0:
            return cls((), 0.0)
        s = delta / slope
        return cls(tuple((k, a * s, b * s) for k, a, b in spec), delta)

    def psi(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for k, a, b in self.fourier_coeffs:
            out = out + a * np.cos(2 * k * theta) + b * np.sin(2 * k * theta)
        return out

    def dpsi(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for k, a, b in self.fourier_coeffs:
            out = out + 2 * k * (-a * np.sin(2 * k * theta) + b * np.cos(2 * k * theta))
        return out

    def max_slope(self) -> float:
        if not self.fourier_coeffs:
            return 0.0
        return float(np.max(np.abs(self.dpsi(_OMEGA_GRID))))

    def angle(self, theta):
        return np.asarray(theta, dtype=float) + self.psi(theta)

    def apply(self, u) -> np.ndarray:
        """Apply to unit vectors (rows)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if not self.fourier_coeffs:
            return u.copy()
        th = self.angle(np.arctan2(u[:, 1], u[:, 0]))
        return np.column_stack([np.cos(th), np.sin(th)])

    @property
    def is_identity(self) -> bool:
        return not self.fourier_coeffs


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------

@dataclass
class CoefficientSample:
    x: np.ndarray
    t: float
    value: float
    vector: Optional[np.ndarray] = None
    plane: Optional[AffinePlane] = None
    c: Optional[float] = None
    meta: dict = field(default_factory=dict)


def _as_point(mu: DiscreteMeasure, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != mu.d:
        raise MeasureError(f"point has dimension {x.size}, measure lives in R^{mu.d}")
    return x


def c_number(mu: DiscreteMeasure, x, t: float) -> CoefficientSample:
    if not t > 0:
        raise ValueError("t must be positive")
    x = _as_point(mu, x)
    idx = mu.ball_indices(x, t)
    diff = x - mu.points[idx]
    vec = (mu.weights[idx] @ diff) / t ** (mu.n + 1) if idx.size else np.zeros(mu.d)
    return CoefficientSample(x, float(t), float(np.linalg.norm(vec)), vector=vec)


def smooth_cutoff(N: int) -> float:
    """Radius (in units of t) beyond which exp(-s^(2N)) is below machine epsilon."""
    return math.log(1.0 / _EPS) ** (1.0 / (2 * N))


def smooth_c_number(mu: DiscreteMeasure, x, t: float, N: int = 1) -> CoefficientSample:
    """sum_i w_i ((x - p_i)/t) t^-n exp(-|x - p_i|^(2N) / t^(2N)), no ball cutoff."""
    if not t > 0:
        raise ValueError("t must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    x = _as_point(mu, x)
    idx = mu.ball_indices(x, t * smooth_cutoff(N))
    diff = x - mu.points[idx]
    s = np.linalg.norm(diff, axis=1) / t
    k = mu.weights[idx] * np.exp(-s ** (2 * N))
    vec = (k @ diff) / t ** (mu.n + 1) if idx.size else np.zeros(mu.d)
    return CoefficientSample(x, float(t), float(np.linalg.norm(vec)), vector=vec,
                             meta={"N": N})


def _omega_kernel(diff: np.ndarray, r: np.ndarray, omega: SphereMap) -> np.ndarray:
    """|v| Omega(v/|v|) for rows v; zero where v = 0."""
    out = np.zeros_like(diff)
    nz = r > 0
    if np.any(nz):
        out[nz] = r[nz, None] * omega.apply(diff[nz] / r[nz, None])
    return out


def omega_c_number(mu: DiscreteMeasure, x, t: float, omega: SphereMap) -> CoefficientSample:
    if mu.d != 2:
        raise MeasureError("the perturbed C-number is defined in the plane only")
    if not t > 0:
        raise ValueError("t must be positive")
    x = _as_point(mu, x)
    idx = mu.ball_indices(x, t)
    diff = x - mu.points[idx]
    if omega.is_identity:
        kern = diff
    else:
        kern = _omega_kernel(diff, np.linalg.norm(diff, axis=1), omega)
    vec = (mu.weights[idx] @ kern) / t ** (mu.n + 1) if idx.size else np.zeros(2)
    return CoefficientSample(x, float(t), float(np.linalg.norm(vec)), vector=vec)


# ---------------------------------------------------------------------------
# profiles: one coefficient at many scales
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kind:
    """Selects which C-type coefficient a sweep evaluates."""

    name: str = "c"
    N: int = 1
    omega: Optional[SphereMap] = None

    def __post_init__(self):
        if self.name not in ("c", "csmooth", "comega"):
            raise ValueError(f"unknown coefficient kind {self.name!r}")
        if self.name == "comega" and self.omega is None:
            object.__setattr__(self, "omega", SphereMap.identity())

    @property
    def label(self) -> str:
        if self.name == "csmooth":
            return f"csmooth{self.N}"
        return self.name

    def reach(self, t: float) -> float:
        return t * smooth_cutoff(self.N) if self.name == "csmooth" else t


def coefficient(mu: DiscreteMeasure, x, t: float, kind: Kind) -> CoefficientSample:
    if kind.name == "c":
        return c_number(mu, x, t)
    if kind.name == "csmooth":
        return smooth_c_number(mu, x, t, kind.N)
    return omega_c_number(mu, x, t, kind.omega)


def coefficient_profile(mu: DiscreteMeasure, x, ts: Sequence[float],
                        kind: Kind = Kind()) -> np.ndarray:
    """
    Vectors of the selected coefficient at x for every t in ts, shape
    (len(ts), d).  Uses one neighbour query and prefix sums over the sorted
    distances, so the cost is dominated by the largest t.
    """
    x = _as_point(mu, x)
    ts = np.asarray(ts, dtype=float)
    if ts.size == 0:
        return np.zeros((0, mu.d))
    if np.any(ts <= 0):
        raise ValueError("scales must be positive")
    idx = mu.ball_indices(x, kind.reach(float(ts.max())))
    diff = x - mu.points[idx]
    r = np.linalg.norm(diff, axis=1)
    w = mu.weights[idx]
    norm = ts ** (mu.n + 1)
    if kind.name == "csmooth":
        s = r[None, :] / ts[:, None]
        k = w[None, :] * np.exp(-s ** (2 * kind.N))
        return (k @ diff) / norm[:, None]
    if kind.name == "comega":
        if mu.d != 2:
            raise MeasureError("the perturbed C-number is defined in the plane only")
        if not kind.omega.is_identity:
            diff = _omega_kernel(diff, r, kind.omega)
    order = np.argsort(r, kind="stable")
    r = r[order]
    pref = np.vstack([np.zeros(mu.d), np.cumsum(w[order, None] * diff[order], axis=0)])
    cut = np.searchsorted(r, inner_radius(ts), side="left")
    return pref[cut] / norm[:, None]


# ---------------------------------------------------------------------------
# beta numbers
# ---------------------------------------------------------------------------

def weighted_pca_plane(points: np.ndarray, weights: np.ndarray, n: int) -> AffinePlane:
    """Least-squares affine n-plane: weighted mean + top n principal directions."""
    w = np.asarray(weights, dtype=float)
    mean = (w @ points) / w.sum()
    c = points - mean
    cov = (c * w[:, None]).T @ c
    evals, evecs = np.linalg.eigh(cov)
    frame = evecs[:, ::-1][:, :n].T
    return AffinePlane(mean, frame)


def _irls_l1_plane(points, weights, n, seed_plane, max_iter=50, rtol=1e-8):
    plane = seed_plane
    best = float(weights @ plane.dist(points))
    floor = 1e-12 * max(1.0, float(np.ptp(points)))
    for _ in range(max_iter):
        dist = plane.dist(points)
        cand = weighted_pca_plane(points, weights / np.maximum(dist, floor), n)
        val = float(weights @ cand.dist(points))
        if val < best:
            improvement = (best - val) / max(best, 1e-300)
            plane, best = cand, val
            if improvement < rtol:
                break
        else:
            break
    return plane, best


def beta_number(mu: DiscreteMeasure, ball: Ball, p: int = 2) -> CoefficientSample:
    """
    beta_p over the ball.  p = 2 is exact (weighted PCA); p = 1 is an upper
    bound obtained by iteratively reweighted least squares seeded with the
    p = 2 plane, flagged with meta['upper_bound'].
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    mu.require_nonnegative("beta_number")
    x, t = ball.center, ball.radius
    idx = mu.ball_indices(x, t)
    idx = idx[mu.weights[idx] > 0]
    n = mu.n
    if idx.size < n + 1:
        return CoefficientSample(x, t, 0.0, meta={"degenerate": True, "p": p})
    pts, w = mu.points[idx], mu.weights[idx]
    plane = weighted_pca_plane(pts, w, n)
    meta = {"degenerate": False, "p": p, "count": int(idx.size)}
    if p == 2:
        val = math.sqrt(float(w @ (plane.dist(pts) / t) ** 2) / t ** n)
    else:
        plane, tot = _irls_l1_plane(pts, w, n, plane)
        val = tot / t / t ** n
        meta["upper_bound"] = True
    return CoefficientSample(x, t, val, plane=plane, meta=meta)


def beta_at_plane(mu: DiscreteMeasure, ball: Ball, plane: AffinePlane, p: int = 2) -> float:
    """The beta_p functional evaluated at a given plane (no infimum)."""
    idx = mu.ball_indices(ball.center, ball.radius)
    t = ball.radius
    w = mu.weights[idx]
    dist = plane.dist(mu.points[idx]) / t
    return float((w @ dist ** p) / t ** mu.n) ** (1.0 / p)


# ---------------------------------------------------------------------------
# circular projection
# ---------------------------------------------------------------------------

def circular_projection(x, plane: AffinePlane, y) -> np.ndarray:
    """
    Radial projection of y onto the plane through x, preserving |y - x|:

        x + |y - x| / |P(y - x)| * P(y - x)

    with P the orthogonal projection onto the plane's directions.  When
    y - x is orthogonal to the plane, the image lies along the first frame
    vector.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(y, dtype=float) - x
    r = float(np.linalg.norm(v))
    if r == 0.0:
        return x.copy()
    a = plane.frame @ v
    na = float(np.linalg.norm(a))
    if na <= 1e-15 * r:
        return x + r * plane.frame[0]
    return x + (r / na) * (a @ plane.frame)


def circular_projection_batch(x, frames, y) -> np.ndarray:
    """
    Row-wise circular_projection for stacked inputs: x and y of shape (m, d),
    frames of shape (m, n, d) with orthonormal rows.
    """
    x = np.asarray(x, dtype=float)
    frames = np.asarray(frames, dtype=float)
    v = np.asarray(y, dtype=float) - x
    r = np.linalg.norm(v, axis=1)
    a = np.einsum("mkd,md->mk", frames, v)
    na = np.linalg.norm(a, axis=1)
    flat = na <= 1e-15 * r
    scale = np.divide(r, na, out=np.zeros_like(r), where=~flat)
    out = x + scale[:, None] * np.einsum("mk,mkd->md", a, frames)
    out[flat] = x[flat] + r[flat, None] * frames[flat, 0]
    return out
