"""Gaussian paths with a prescribed variance function.

Two constructions are available on a grid 0 = t_0 < t_1 < ... < t_m:

* cell-integrated Volterra: B(t_i) = sum_j L(i, j) Z_j with
  L(i, j)**2 = gamma**2(t_i - t_{j-1}) - gamma**2(t_i - t_j), so that
  Var B(t_i) = gamma**2(t_i) exactly (the row sums telescope);
* stationary-increment exact: Cholesky factor of
  (gamma**2(s) + gamma**2(t) - gamma**2(|t - s|)) / 2, when that matrix is
  positive definite.

Grids are a short arbitrary head followed by a uniform tail. On the tail the
Volterra factor is Toeplitz and is applied by FFT convolution.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConstructionError, DomainError, NumericalError, ResourceError
from .rng import CHUNK, map_chunks, path_normals
from .variance import VarianceModel, model_from_dict

VOLTERRA = "VolterraCellIntegrated"
EXACT = "StationaryIncrementExact"
MAX_VALUES = 50_000_000
PSD_SLACK = 1e-10


@dataclass(frozen=True)
class ProcessSpec:
    model: VarianceModel
    dim: int = 1
    construction: str = VOLTERRA
    ell_target: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dimension must be >= 1")
        if self.construction not in (VOLTERRA, EXACT):
            raise DomainError(f"unknown construction {self.construction!r}")
        if self.ell_target < 1:
            raise DomainError("ell must be >= 1")

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "dim": self.dim,
                "construction": self.construction, "ell_target": self.ell_target}

    @classmethod
    def from_dict(cls, desc: dict) -> "ProcessSpec":
        return cls(model_from_dict(desc["model"]), int(desc.get("dim", 1)),
                   desc.get("construction", VOLTERRA), float(desc.get("ell_target", 1.0)))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """times[0] = 0; times[head:] is uniform with step ``step``.

    ``window_start`` indexes the first point of the analysis window.
    """

    times: np.ndarray
    head: int
    step: float
    window_start: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) < 2 or t[0] != 0.0:
            raise DomainError("a grid starts at 0 and has at least one step")
        if np.any(np.diff(t) <= 0):
            raise DomainError("grid times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def m(self) -> int:
        return len(self.times) - 1

    @property
    def window(self) -> np.ndarray:
        return self.times[self.window_start:]


def uniform_grid(T: float, m: int) -> TimeGrid:
    return TimeGrid(np.linspace(0.0, T, m + 1), 0, T / m, 0)


def window_grid(a: float, b: float, k: int, max_head: int = 32) -> TimeGrid:
    """2**k uniform steps on [a, b] after a coarse uniform head on [0, a]."""
    if not 0 <= a < b:
        raise DomainError("need 0 <= a < b")
    n = 2**k
    step = (b - a) / n
    if a == 0:
        return uniform_grid(b, n)
    n_head = int(min(math.ceil(a / step - 1e-9), max_head))
    head = np.linspace(0.0, a, n_head + 1)
    tail = a + step * np.arange(1, n + 1)
    tail[-1] = b
    return TimeGrid(np.concatenate([head, tail]), n_head, step, n_head)


def grid_from_times(times) -> TimeGrid:
    t = np.asarray(times, dtype=float)
    if t[0] != 0.0:
        t = np.concatenate([[0.0], t])
    return TimeGrid(t, len(t) - 1, float("nan"), 0)


# ---------------------------------------------------------------------------
# Volterra factor
# ---------------------------------------------------------------------------


def _sq_increments(model: VarianceModel, upper, lower) -> np.ndarray:
    g2u = np.asarray(model.gamma(upper)) ** 2
    g2l = np.asarray(model.gamma(lower)) ** 2
    return g2u - g2l


def _sqrt_checked(rad: np.ndarray, where: str) -> np.ndarray:
    if np.any(rad < 0):
        scale = np.max(np.abs(rad))
        bad = np.argwhere(rad < -1e-14 * max(scale, 1e-300))
        if bad.size:
            raise ConstructionError(f"negative radicand in the Volterra factor at {where} cell {tuple(bad[0])}")
        rad = np.maximum(rad, 0.0)
    return np.sqrt(rad)


@dataclass(frozen=True, eq=False)
class VolterraFactor:
    """Lower-triangular L, stored as dense head blocks plus a Toeplitz column."""

    grid: TimeGrid
    head_block: np.ndarray   # rows 1..h, columns 1..h
    cross_block: np.ndarray  # rows h+1..m, columns 1..h
    toeplitz: np.ndarray     # L(h+i, h+j) = toeplitz[i-j]
    constant_column: bool
    factor_id: str = VOLTERRA

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def m(self) -> int:
        return self.grid.m

    def dense(self) -> np.ndarray:
        h, m = self.grid.head, self.grid.m
        L = np.zeros((m, m))
        L[:h, :h] = self.head_block
        L[h:, :h] = self.cross_block
        n = m - h
        idx = np.arange(n)
        diff = idx[:, None] - idx[None, :]
        L[h:, h:] = np.where(diff >= 0, self.toeplitz[np.clip(diff, 0, None)], 0.0)
        return L

    def apply(self, Z: np.ndarray) -> np.ndarray:
        """L @ z for each row z of Z (shape (n, m))."""
        h, m = self.grid.head, self.grid.m
        out = np.empty_like(Z)
        if h:
            out[:, :h] = Z[:, :h] @ self.head_block.T
        tail = Z[:, h:]
        if self.constant_column:
            conv = self.toeplitz[0] * np.cumsum(tail, axis=1)
        else:
            conv = fftconvolve(tail, self.toeplitz[None, :], axes=1)[:, : m - h]
        out[:, h:] = conv + (Z[:, :h] @ self.cross_block.T if h else 0.0)
        return out


def volterra_factor(model: VarianceModel, grid) -> VolterraFactor:
    """Cell-integrated Volterra factor on ``grid`` (a TimeGrid or times)."""
    if not isinstance(grid, TimeGrid):
        grid = grid_from_times(grid)
    t = grid.times
    if t[-1] > model.r_max * (1 + 1e-12):
        raise DomainError(f"grid extends beyond r_max = {model.r_max:.6g}")
    h, m = grid.head, grid.m
    # head rows and the columns of the head for every row
    rows = t[1:, None]
    cols_hi = t[None, 0:h]
    cols_lo = t[None, 1:h + 1]
    if h:
        up = np.maximum(rows - cols_hi, 0.0)
        lo = np.maximum(rows - cols_lo, 0.0)
        rad = _sq_increments(model, np.minimum(up, model.r_max), np.minimum(lo, model.r_max))
        rad = np.where(rows - cols_hi > 0, rad, 0.0)
        block = _sqrt_checked(rad, "head")
        head_block, cross_block = np.tril(block[:h]), block[h:]
    else:
        head_block, cross_block = np.zeros((0, 0)), np.zeros((m, 0))
    n = m - h
    if n:
        step = grid.step
        if not math.isfinite(step):
            raise DomainError("the grid tail must be uniform")
        k = np.arange(n, dtype=float)
        upper = np.minimum((k + 1) * step, model.r_max)
        col = _sqrt_checked(_sq_increments(model, upper, k * step), "tail")
        # a flat column (Brownian case) differs from col[0] only by cancellation
        # error in the squared increments; snap it so the cumsum path applies
        constant = bool(np.allclose(col, col[0], rtol=1e-9, atol=0.0))
        if constant:
            col = np.full(n, col[0])
    else:
        col, constant = np.zeros(0), True
    return VolterraFactor(grid, head_block, cross_block, col, constant)


def _general_factor(model: VarianceModel, times: np.ndarray) -> np.ndarray:
    """Dense cell-integrated factor for an arbitrary grid."""
    t = times
    rows = t[1:, None]
    up = rows - t[None, :-1]
    lo = rows - t[None, 1:]
    mask = lo >= 0
    up_c = np.clip(up, 0.0, model.r_max)
    lo_c = np.clip(lo, 0.0, model.r_max)
    rad = np.where(mask, _sq_increments(model, up_c, lo_c), 0.0)
    return _sqrt_checked(rad, "grid")


@dataclass(frozen=True, eq=False)
class DenseFactor:
    times: np.ndarray
    matrix: np.ndarray
    factor_id: str

    @property
    def m(self) -> int:
        return len(self.times) - 1

    def dense(self) -> np.ndarray:
        return self.matrix

    def apply(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.matrix.T


def as_factor(factor, times=None):
    """Accept a factor object, a CovarianceSurface or a raw matrix."""
    if isinstance(factor, (VolterraFactor, DenseFactor)):
        return factor
    if isinstance(factor, CovarianceSurface):
        if factor.cholesky is None:
            raise NumericalError("covariance is not positive definite; use the Volterra construction")
        return DenseFactor(np.concatenate([[0.0], factor.times]), factor.cholesky, EXACT)
    M = np.asarray(factor, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or np.any(np.triu(M, 1) != 0):
        raise DomainError("factor must be square lower-triangular")
    if times is None:
        times = np.arange(M.shape[0] + 1, dtype=float)
    return DenseFactor(np.asarray(times, float), M, "matrix")


# ---------------------------------------------------------------------------
# covariance surfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovarianceSurface:
    """Covariance of one coordinate at grid times t_1..t_m (t_0 = 0 dropped)."""

    times: np.ndarray
    matrix: np.ndarray
    cholesky: np.ndarray | None = None
    not_pd: bool = False
    jitter: float = 0.0
    min_eigenvalue: float = float("nan")
    source: str = ""

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.matrix)

    def delta2(self) -> np.ndarray:
        v = self.variance
        return v[:, None] + v[None, :] - 2.0 * self.matrix

    def sigma(self) -> np.ndarray:
        return self.matrix

    def rho(self) -> np.ndarray:
        v = self.variance
        if np.any(v <= 0):
            raise DomainError("correlation undefined at a zero-variance time")
        s = np.sqrt(v)
        return self.matrix / (s[:, None] * s[None, :])


def _times_without_zero(grid) -> np.ndarray:
    t = grid.times if isinstance(grid, TimeGrid) else np.asarray(grid, dtype=float)
    t = t[t > 0] if t[0] == 0 else t
    if np.any(np.diff(t) <= 0):
        raise DomainError("grid times must be strictly increasing")
    return t


def exact_covariance(model: VarianceModel, grid) -> CovarianceSurface:
    """Stationary-increment covariance, factored when positive definite."""
    t = _times_without_zero(grid)
    g2 = np.asarray(model.gamma(t)) ** 2
    lag = np.abs(t[:, None] - t[None, :])
    if lag.max() > model.r_max * (1 + 1e-12):
        raise DomainError("grid span exceeds r_max")
    S = 0.5 * (g2[:, None] + g2[None, :] - np.asarray(model.gamma(lag)) ** 2)
    np.fill_diagonal(S, g2)
    try:
        C = np.linalg.cholesky(S)
        return CovarianceSurface(t, S, C, False, 0.0, float("nan"), EXACT)
    except np.linalg.LinAlgError:
        pass
    ev = float(np.linalg.eigvalsh(S).min())
    tr = float(np.trace(S))
    if ev >= -PSD_SLACK * tr:
        jitter = abs(ev) + 1e-14 * tr
        try:
            C = np.linalg.cholesky(S + jitter * np.eye(len(t)))
            return CovarianceSurface(t, S, C, False, jitter, ev, EXACT)
        except np.linalg.LinAlgError:
            pass
    return CovarianceSurface(t, S, None, True, 0.0, ev, EXACT)


def volterra_surface(model: VarianceModel, grid) -> CovarianceSurface:
    """Covariance L L' induced by the cell-integrated Volterra factor."""
    if isinstance(grid, TimeGrid):
        L = volterra_factor(model, grid).dense()
        t = grid.times[1:]
    else:
        t_all = np.asarray(grid, dtype=float)
        if t_all[0] != 0.0:
            t_all = np.concatenate([[0.0], t_all])
        L = _general_factor(model, t_all)
        t = t_all[1:]
    return CovarianceSurface(t, L @ L.T, L, False, 0.0, float("nan"), VOLTERRA)


def verify_commensurability(surface: CovarianceSurface, model: VarianceModel) -> float:
    """Smallest ell with gamma^2/ell <= delta^2 <= ell gamma^2 on grid pairs.

    Pairs with time 0 are included; there delta^2 = Var B(t).
    """
    t = np.concatenate([[0.0], surface.times])
    v = np.concatenate([[0.0], surface.variance])
    S = np.zeros((len(t), len(t)))
    S[1:, 1:] = surface.matrix
    d2 = v[:, None] + v[None, :] - 2.0 * S
    iu = np.triu_indices(len(t), k=1)
    d2 = d2[iu]
    g2 = np.asarray(model.gamma(np.abs(t[iu[1]] - t[iu[0]]))) ** 2
    if np.any(d2 <= 0):
        raise NumericalError("degenerate process: zero increment variance between distinct times")
    ratio = d2 / g2
    return float(max(1.0, ratio.max(), (1.0 / ratio).max()))


def conditional_variance_profile(surface: CovarianceSurface, model: VarianceModel, a: float, b: float,
                                 eps: float | None = None) -> dict:
    """Var(B(t) | B(s)) / gamma^2(t - s) over window pairs s < t <= s + eps."""
    if not 0 < a < b:
        raise DomainError("need 0 < a < b")
    t = surface.times
    sel = np.nonzero((t >= a - 1e-15) & (t <= b + 1e-15))[0]
    if len(sel) < 2:
        raise DomainError("window [a, b] contains fewer than two grid times")
    v = surface.variance[sel]
    if np.any(v <= 0):
        raise DomainError("correlation undefined at a zero-variance time")
    S = surface.matrix[np.ix_(sel, sel)]
    cond = v[None, :] - S**2 / v[:, None]  # Var(B(t_j) | B(s_i))
    ts = t[sel]
    lag = ts[None, :] - ts[:, None]
    eps = (b - a) if eps is None else eps
    mask = (lag > 0) & (lag <= eps + 1e-15)  # t_j later than s_i
    ratio = cond[mask] / np.asarray(model.gamma(lag[mask])) ** 2
    ell = verify_commensurability(surface, model)
    ga, gb = float(model.gamma(a)), float(model.gamma(b))
    return {"min_ratio": float(ratio.min()), "lem1_constant": ga**4 / (2.0 * ell * gb**4),
            "eps": float(eps), "ell_hat": ell}


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    times: np.ndarray
    values: np.ndarray  # (n_paths, d, m + 1)
    seed: int
    factor_id: str

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def simulate_chunk(factor, dim: int, seed: int, start: int, stop: int) -> np.ndarray:
    """Paths start..stop-1 as an array (stop - start, dim, m + 1)."""
    f = as_factor(factor)
    n, m = stop - start, f.m
    Z = path_normals(seed, start, n, (dim, m)).reshape(n * dim, m)
    X = f.apply(Z).reshape(n, dim, m)
    out = np.zeros((n, dim, m + 1))
    out[:, :, 1:] = X
    return out


def sample_paths(factor, dim: int, n_paths: int, seed: int, threads: int = 1, chunk: int = CHUNK) -> PathEnsemble:
    """B = L Z with independent standard normal Z for every path and coordinate."""
    f = as_factor(factor)
    if n_paths < 0 or dim < 1:
        raise DomainError("need n_paths >= 0 and dim >= 1")
    if n_paths * dim * (f.m + 1) > MAX_VALUES:
        raise ResourceError("ensemble too large to hold in memory; use map_path_chunks")
    if n_paths == 0:
        return PathEnsemble(f.times, np.zeros((0, dim, f.m + 1)), seed, f.factor_id)
    parts = map_chunks(lambda s, e: simulate_chunk(f, dim, seed, s, e), n_paths, threads, chunk)
    return PathEnsemble(f.times, np.concatenate(parts, axis=0), seed, f.factor_id)


def map_path_chunks(factor, dim: int, n_paths: int, seed: int, fn, threads: int = 1, chunk: int = CHUNK) -> list:
    """fn(start, values_chunk) for every fixed chunk of paths, in order."""
    f = as_factor(factor)
    return map_chunks(lambda s, e: fn(s, simulate_chunk(f, dim, seed, s, e)), n_paths, threads, chunk)


def build_factor(spec: ProcessSpec, grid: TimeGrid):
    """Factor for the requested construction; exact falls back to Volterra."""
    if spec.construction == EXACT:
        surf = exact_covariance(spec.model, grid)
        if not surf.not_pd:
            return DenseFactor(grid.times, surf.cholesky, EXACT)
        f = volterra_factor(spec.model, grid)
        return VolterraFactor(f.grid, f.head_block, f.cross_block, f.toeplitz, f.constant_column,
                              VOLTERRA + " (fallback: exact covariance not PD)")
    return volterra_factor(spec.model, grid)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<QQQQ")


def write_ensemble_binary(ens: PathEnsemble, path) -> None:
    """Header (n_paths, d, m, seed) as little-endian uint64, then float64
    values in path-major order: path, coordinate, time index 0..m."""
    n, d, m1 = ens.values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(n, d, m1 - 1, int(ens.seed)))
        fh.write(np.ascontiguousarray(ens.values, dtype="<f8").tobytes())


def read_ensemble_binary(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        n, d, m, seed = _HEADER.unpack(fh.read(_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * d * (m + 1):
        raise NumericalError("truncated ensemble file")
    return {"n_paths": n, "d": d, "m": m, "seed": seed}, data.reshape(n, d, m + 1)


def ensemble_rows(ens: PathEnsemble) -> list[dict]:
    """Long-format rows (path, coord, index, time, value) for CSV export."""
    rows = []
    n, d, m1 = ens.values.shape
    for p in range(n):
        for c in range(d):
            for i in range(m1):
                rows.append({"path": p, "coord": c, "index": i, "time": float(ens.times[i]),
                             "value": float(ens.values[p, c, i])})
    return rows
