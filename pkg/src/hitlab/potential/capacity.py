"""Discrete energies and capacity estimates.

A set is represented by finitely many atoms, each standing for a small cell
of given radius. The energy of a weight vector w is the quadratic form
w' G w with G(i, j) = K(|x_i - x_j|) off the diagonal and G(i, i) =
K(cell_radius_i). The capacity estimate is 1 / min over the simplex of that
form, found by pairwise Frank-Wolfe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from .kernels import CAPACITY_KERNEL, KernelOrGauge


@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray
    cell_radius: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        r = np.asarray(self.cell_radius, dtype=float)
        if not (len(pts) == len(w) == len(r)):
            raise DomainError("points, weights and cell_radius must have equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be non-negative and sum to 1")
        if np.any(r < 0):
            raise DomainError("cell radii must be non-negative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "cell_radius", r)

    @classmethod
    def uniform(cls, points, cell_radius) -> "DiscreteMeasure":
        n = len(points)
        return cls(points, np.full(n, 1.0 / n), cell_radius)


def _distances(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def gram_matrix(points, cell_radius, kernel: KernelOrGauge) -> np.ndarray:
    """Kernel matrix with the cell self-interaction on the diagonal."""
    if kernel.kind != CAPACITY_KERNEL:
        raise DomainError("energy needs a capacity kernel")
    D = _distances(points)
    np.fill_diagonal(D, np.asarray(cell_radius, dtype=float))
    with np.errstate(over="ignore"):
        return np.asarray(kernel(D), dtype=float)


@dataclass(frozen=True)
class EnergyValue:
    total: float
    off_diagonal: float

    def __float__(self) -> float:
        return self.total


def energy(mu: DiscreteMeasure, kernel: KernelOrGauge) -> EnergyValue:
    """Energy of mu, with and without the diagonal cell terms.

    An unbounded kernel at a zero cell radius gives +inf, never an error.
    """
    G = gram_matrix(mu.points, mu.cell_radius, kernel)
    w = mu.weights
    diag = np.diag(G).copy()
    off = G.copy()
    np.fill_diagonal(off, 0.0)
    off_val = float(w @ off @ w)
    with np.errstate(invalid="ignore"):
        diag_val = float(np.sum(np.where(w > 0, w * w * diag, 0.0)))
    return EnergyValue(off_val + diag_val, off_val)


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    equilibrium: DiscreteMeasure
    energy: float
    off_diagonal_energy: float
    converged: bool
    iterations: int
    gap: float


def minimize_energy(G: np.ndarray, tol: float = 1e-8, max_iter: int = 100_000, w0=None):
    """Minimize w' G w over the simplex by pairwise Frank-Wolfe.

    Each step moves mass from the worst support atom to the best atom with an
    exact line search, which keeps iterates sparse and converges linearly on
    strongly convex problems. Returns (w, value, gap, iterations, converged).
    """
    n = G.shape[0]
    w = np.full(n, 1.0 / n) if w0 is None else np.asarray(w0, dtype=float).copy()
    Gw = G @ w
    gap = math.inf
    for it in range(1, max_iter + 1):
        val = float(w @ Gw)
        s = int(np.argmin(Gw))
        gap = 2.0 * (val - Gw[s])
        if gap <= tol * max(1.0, abs(val)):
            return w, val, gap, it, True
        support = np.nonzero(w > 0)[0]
        v = int(support[np.argmax(Gw[support])])
        if v == s:
            return w, val, gap, it, True
        curv = G[s, s] + G[v, v] - 2.0 * G[s, v]
        gain = Gw[v] - Gw[s]
        step = w[v] if curv <= 0 else min(w[v], gain / curv)
        w[s] += step
        w[v] -= step
        if w[v] < 1e-300:
            w[v] = 0.0
        Gw += step * (G[:, s] - G[:, v])
        if it % 1000 == 0:
            Gw = G @ w  # refresh against drift
    val = float(w @ Gw)
    return w, val, gap, max_iter, False


def capacity_estimate(points, cell_radius, kernel: KernelOrGauge, tol: float = 1e-8,
                      max_iter: int = 100_000) -> CapacityResult:
    """1 / inf of the discrete energy over probability weights on ``points``."""
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        raise DomainError("capacity_estimate needs at least one point")
    radius = np.asarray(cell_radius, dtype=float)
    G = gram_matrix(pts, radius, kernel)
    finite = np.isfinite(np.diag(G))
    if not finite.any():
        w = np.full(len(pts), 1.0 / len(pts))
        mu = DiscreteMeasure(pts, w, radius)
        return CapacityResult(0.0, mu, math.inf, float("nan"), True, 0, 0.0)
    # atoms with infinite self-energy can never carry mass
    idx = np.nonzero(finite)[0]
    w_sub, val, gap, iters, ok = minimize_energy(G[np.ix_(idx, idx)], tol, max_iter)
    w = np.zeros(len(pts))
    w[idx] = w_sub
    w /= w.sum()
    mu = DiscreteMeasure(pts, w, radius)
    e = energy(mu, kernel)
    cap = 0.0 if not math.isfinite(e.total) else 1.0 / e.total
    return CapacityResult(cap, mu, e.total, e.off_diagonal, ok, iters, gap)


# ---------------------------------------------------------------------------
# point placements
# ---------------------------------------------------------------------------


def _cells_1d(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Half-width of the cell of each sorted point, cells split at midpoints."""
    mids = 0.5 * (x[1:] + x[:-1])
    edges = np.concatenate([[lo], mids, [hi]])
    return 0.5 * np.diff(edges)


def segment_points(n: int, lo: float = 0.0, hi: float = 1.0):
    """Chebyshev points on [lo, hi] with their cell radii."""
    if n < 1:
        raise DomainError("need n >= 1")
    k = np.arange(n)
    x = lo + (hi - lo) * 0.5 * (1.0 - np.cos(np.pi * (k + 0.5) / n))
    return x[:, None], _cells_1d(x, lo, hi)


def ball_points(center, eps: float, n_per_axis: int = 9):
    """Cubic-lattice points inside the ball B(center, eps), with cell radii."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d = len(c)
    h = 2.0 * eps / n_per_axis
    axis = -eps + h * (np.arange(n_per_axis) + 0.5)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    inside = np.sum(grid**2, axis=1) <= eps**2
    pts = grid[inside] + c
    return pts, np.full(len(pts), 0.5 * h)


def sphere_points(center, radius: float, n: int, d: int):
    """Quasi-uniform points on a sphere (circle for d = 2) with cell radii."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    if d == 1:
        pts = np.array([[-radius], [radius]]) + c
        return pts, np.zeros(2)
    if d == 2:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        pts = radius * np.column_stack([np.cos(th), np.sin(th)]) + c
        return pts, np.full(n, np.pi * radius / n)
    # Fibonacci lattice on the 2-sphere
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    th = np.pi * (1 + 5**0.5) * i
    pts = radius * np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    if d > 3:
        pts = np.hstack([pts, np.zeros((n, d - 3))])
    return pts + c, np.full(n, radius * math.sqrt(4 * np.pi / n) / 2)
