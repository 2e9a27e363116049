"""Monte Carlo hitting probabilities with bracketing detection.

A path observed on a grid can certify a hit (a sign change across a point in
d = 1, a grid value inside a ball) or come close without certifying one. The
lower estimate counts certified hits; the upper estimate also counts paths
whose grid values come within threshold = safety * h(step) of the target,
where h(r) = gamma(r) sqrt(log(1/r)) is the modulus of continuity scale.

Closed-form upper bounds for points and balls are provided for comparison.
Their universal constants are not explicit, so experiments calibrate one
scalar and then check shapes and orderings only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import BoundNotEstablished, DomainError
from .potential.cantor import CantorSpec, cantor_build
from .potential.capacity import ball_points, capacity_estimate
from .potential.phase import texa_case_select
from .simulation import ProcessSpec, build_factor, map_path_chunks, window_grid
from .variance import PowerLog, VarianceModel, check_gammamult, f_gamma

DEFAULT_SAFETY = 3.0


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TargetSet:
    """Point(z), Ball(z, eps) or CantorOnAxis(spec, depth) in [-M, M]^d."""

    kind: str
    z: tuple = ()
    eps: float = 0.0
    cantor: CantorSpec | None = None
    depth: int = 0
    bound_box_M: float = 10.0

    def __post_init__(self):
        if self.kind not in ("Point", "Ball", "CantorOnAxis"):
            raise DomainError(f"unknown target kind {self.kind!r}")
        if self.kind == "Ball" and not self.eps > 0:
            raise DomainError("a ball target needs eps > 0")
        if self.kind == "CantorOnAxis":
            if self.cantor is None or self.depth < 1:
                raise DomainError("a Cantor target needs a spec and depth >= 1")
        elif np.max(np.abs(self.z)) > self.bound_box_M:
            raise DomainError("target lies outside [-M, M]^d")

    @classmethod
    def point(cls, z, M: float = 10.0) -> "TargetSet":
        return cls("Point", tuple(np.atleast_1d(np.asarray(z, float)).tolist()), bound_box_M=M)

    @classmethod
    def ball(cls, z, eps: float, M: float = 10.0) -> "TargetSet":
        return cls("Ball", tuple(np.atleast_1d(np.asarray(z, float)).tolist()), eps, bound_box_M=M)

    @classmethod
    def cantor_on_axis(cls, spec: CantorSpec, depth: int, M: float = 10.0) -> "TargetSet":
        return cls("CantorOnAxis", (), 0.0, spec, depth, M)

    def describe(self) -> str:
        if self.kind == "Point":
            return f"Point(z={list(self.z)})"
        if self.kind == "Ball":
            return f"Ball(z={list(self.z)}, eps={self.eps!r})"
        return f"CantorOnAxis(depth={self.depth})"

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "M": self.bound_box_M}
        if self.kind == "CantorOnAxis":
            out.update(cantor=self.cantor.to_dict(), depth=self.depth)
        else:
            out.update(z=list(self.z))
            if self.kind == "Ball":
                out["eps"] = self.eps
        return out


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------


def _cantor_geometry(target: TargetSet):
    lev = cantor_build(target.cantor, target.depth)
    return lev.left, lev.length, lev.endpoints


def _distance_to_union(x: np.ndarray, left: np.ndarray, length: float) -> np.ndarray:
    """Distance from x to the union of [left_i, left_i + length]."""
    idx = np.clip(np.searchsorted(left, x, side="right") - 1, 0, len(left) - 1)
    lo = left[idx]
    d_here = np.maximum(0.0, np.maximum(lo - x, x - (lo + length)))
    nxt = np.clip(idx + 1, 0, len(left) - 1)
    d_next = np.maximum(0.0, left[nxt] - x)
    return np.minimum(d_here, d_next)


def detect_hits_batch(values: np.ndarray, target: TargetSet, threshold: float, geometry=None):
    """Bracketing detection for many paths at once.

    ``values`` has shape (n, d, t) restricted to the window. Returns boolean
    arrays (hit_lower, hit_upper).
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[None]
    if values.shape[-1] == 0:
        raise DomainError("empty grid")
    n, d, _ = values.shape
    if d == 1:
        # the linear interpolant of a scalar path covers exactly [min, max]
        return _detect_scalar(values[:, 0, :].min(axis=-1), values[:, 0, :].max(axis=-1),
                              target, threshold, geometry)
    if target.kind in ("Point", "Ball"):
        z = np.asarray(target.z, dtype=float)
        if len(z) != d:
            raise DomainError("target dimension does not match the process")
        diff = values - z[None, :, None]
        dist = np.sqrt(np.sum(diff**2, axis=1)) - target.eps
        lower = np.any(dist <= 0.0, axis=-1)
        upper = lower | np.any(dist <= threshold, axis=-1)
        return lower, upper
    left, length, ends = geometry if geometry is not None else _cantor_geometry(target)
    x0 = values[:, 0, :]
    off = np.sqrt(np.sum(values[:, 1:, :] ** 2, axis=1))
    lower = np.zeros(n, dtype=bool)
    dist = np.sqrt(_distance_to_union(x0, left, length) ** 2 + off**2)
    upper = lower | np.any(dist <= threshold, axis=-1)
    return lower, upper


def _detect_scalar(lo: np.ndarray, hi: np.ndarray, target: TargetSet, threshold: float, geometry=None):
    """Detection for d = 1 from the range [lo, hi] of each path.

    A certified hit is a target point inside the range (intermediate value
    theorem); the upper estimate enlarges the range by the threshold.
    """
    if target.kind in ("Point", "Ball"):
        if len(target.z) != 1:
            raise DomainError("target dimension does not match the process")
        z, e = target.z[0], target.eps
        lower = (lo <= z + e) & (hi >= z - e)
        upper = (lo <= z + e + threshold) & (hi >= z - e - threshold)
        return lower, upper
    left, length, ends = geometry if geometry is not None else _cantor_geometry(target)
    lower = np.searchsorted(ends, hi, side="right") > np.searchsorted(ends, lo, side="left")
    # the enlarged range meets the union iff some interval [l, l + len] overlaps it
    first = np.searchsorted(left, hi + threshold, side="right") - 1
    ok = first >= 0
    reach = np.where(ok, left[np.clip(first, 0, None)] + length, -np.inf)
    upper = lower | (ok & (reach >= lo - threshold))
    return lower, upper


def detect_hits(path: np.ndarray, target: TargetSet, threshold: float) -> dict:
    """Single-path detection; ``path`` has shape (d, t) or (t,) for d = 1."""
    p = np.asarray(path, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
    lo, up = detect_hits_batch(p[None], target, threshold)
    return {"hit_lower": bool(lo[0]), "hit_upper": bool(up[0])}


def modulus(model: VarianceModel, r: float) -> float:
    """h(r) = gamma(r) sqrt(log(1/r))."""
    return float(model.gamma(r)) * math.sqrt(math.log(1.0 / r))


def hit_threshold(model: VarianceModel, step: float, safety: float = DEFAULT_SAFETY) -> float:
    return safety * modulus(model, step)


# ---------------------------------------------------------------------------
# estimates
# ---------------------------------------------------------------------------


def wilson(k: int, n: int) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=0.95, method="wilson")
    return (float(ci.low), float(ci.high))


@dataclass(frozen=True)
class HitEstimate:
    p_lower: float
    p_upper: float
    ci_lower: tuple
    ci_upper: tuple
    n_paths: int
    grid_size: int
    threshold_used: float
    hits_lower: int = 0
    hits_upper: int = 0

    @classmethod
    def from_counts(cls, k_lo: int, k_up: int, n: int, grid_size: int, threshold: float) -> "HitEstimate":
        return cls(k_lo / n, k_up / n, wilson(k_lo, n), wilson(k_up, n), n, grid_size, threshold, k_lo, k_up)

    @property
    def se_lower(self) -> float:
        return math.sqrt(self.p_lower * (1 - self.p_lower) / self.n_paths)

    @property
    def se_upper(self) -> float:
        return math.sqrt(self.p_upper * (1 - self.p_upper) / self.n_paths)

    @property
    def width(self) -> float:
        return self.p_upper - self.p_lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.p_lower + self.p_upper)

    def bracket(self, n_se: float = 3.0) -> tuple[float, float]:
        return (self.p_lower - n_se * self.se_lower, self.p_upper + n_se * self.se_upper)

    def to_row(self) -> dict:
        return {"p_lower": self.p_lower, "p_upper": self.p_upper,
                "ci_lower_lo": self.ci_lower[0], "ci_lower_hi": self.ci_lower[1],
                "ci_upper_lo": self.ci_upper[0], "ci_upper_hi": self.ci_upper[1],
                "n_paths": self.n_paths, "grid_size": self.grid_size, "threshold": self.threshold_used}


def _check_window(model: VarianceModel, a: float, b: float):
    if not (0 < a < b <= model.r_max * (1 + 1e-12)):
        raise DomainError(f"need 0 < a < b <= r_max = {model.r_max:.6g}")


def mc_hit_refinement(spec: ProcessSpec, targets, a: float, b: float, grid_ks, n_paths: int, seed: int,
                      safety: float = DEFAULT_SAFETY, threads: int = 1) -> dict:
    """Hit estimates for several targets and grid levels from one simulation.

    Paths are simulated once with 2**max(grid_ks) window steps; coarser levels
    use every 2**(K - k)-th window point, so the estimates are nested.
    Returns {(target_index, k): HitEstimate}.
    """
    _check_window(spec.model, a, b)
    if n_paths < 1:
        raise DomainError("need n_paths >= 1")
    targets = [targets] if isinstance(targets, TargetSet) else list(targets)
    ks = sorted(set(int(k) for k in grid_ks))
    K = ks[-1]
    grid = window_grid(a, b, K)
    factor = build_factor(spec, grid)
    ws = grid.window_start
    thresholds = {k: hit_threshold(spec.model, (b - a) / 2**k, safety) for k in ks}
    geoms = [_cantor_geometry(t) if t.kind == "CantorOnAxis" else None for t in targets]

    def work(start, vals):
        W = vals[:, :, ws:]
        counts = {}
        for ti, tgt in enumerate(targets):
            for k in ks:
                lo, up = detect_hits_batch(W[:, :, :: 2 ** (K - k)], tgt, thresholds[k], geoms[ti])
                counts[(ti, k)] = (int(lo.sum()), int(up.sum()))
        return counts

    parts = map_path_chunks(factor, spec.dim, n_paths, seed, work, threads)
    out = {}
    for key in parts[0]:
        k_lo = sum(p[key][0] for p in parts)
        k_up = sum(p[key][1] for p in parts)
        out[key] = HitEstimate.from_counts(k_lo, k_up, n_paths, 2 ** key[1], thresholds[key[1]])
    return out


def mc_hit_probability(spec: ProcessSpec, target: TargetSet, a: float, b: float, grid_k: int, n_paths: int,
                       seed: int, safety: float = DEFAULT_SAFETY, threads: int = 1) -> HitEstimate:
    """P(B([a, b]) meets target), bracketed."""
    if n_paths < 100:
        raise DomainError("need n_paths >= 100")
    return mc_hit_refinement(spec, [target], a, b, [grid_k], n_paths, seed, safety, threads)[(0, grid_k)]


def mc_window_sweep(spec: ProcessSpec, target: TargetSet, a: float, widths, grid_k: int, n_paths: int,
                    seed: int, safety: float = DEFAULT_SAFETY, threads: int = 1,
                    common_step: bool = False) -> dict:
    """Hit estimates on [a, a + w] for several widths w.

    By default every window gets its own 2**grid_k-step grid, so the threshold
    shrinks with the window and the bracket bias stays comparable across
    widths. With ``common_step`` one simulation on the widest window serves
    all widths (which must then be multiples of its step).
    """
    widths = sorted(float(w) for w in widths)
    if not common_step:
        return {w: mc_hit_probability(spec, target, a, a + w, grid_k, n_paths, seed, safety, threads)
                for w in widths}
    w_max = widths[-1]
    _check_window(spec.model, a, a + w_max)
    grid = window_grid(a, a + w_max, grid_k)
    factor = build_factor(spec, grid)
    ws = grid.window_start
    step = w_max / 2**grid_k
    thr = hit_threshold(spec.model, step, safety)
    counts_idx = []
    for w in widths:
        n_steps = w / step
        if abs(n_steps - round(n_steps)) > 1e-6 or round(n_steps) < 1:
            raise DomainError("window widths must be multiples of the grid step")
        counts_idx.append(int(round(n_steps)))

    def work(start, vals):
        W = vals[:, :, ws:]
        res = []
        for n_steps in counts_idx:
            lo, up = detect_hits_batch(W[:, :, : n_steps + 1], target, thr)
            res.append((int(lo.sum()), int(up.sum())))
        return res

    parts = map_path_chunks(factor, spec.dim, n_paths, seed, work, threads)
    out = {}
    for i, w in enumerate(widths):
        k_lo = sum(p[i][0] for p in parts)
        k_up = sum(p[i][1] for p in parts)
        out[w] = HitEstimate.from_counts(k_lo, k_up, n_paths, counts_idx[i], thr)
    return out


@dataclass(frozen=True)
class KappaEstimate:
    kappa: float
    ci: tuple
    n_paths: int
    grid_k: int


def estimate_kappa(spec: ProcessSpec, a: float, b: float, n_paths: int, seed: int, grid_k: int = 10,
                   threads: int = 1) -> KappaEstimate:
    """Frequency of paths whose first coordinate stays above gamma(b) on [a, b]."""
    _check_window(spec.model, a, b)
    grid = window_grid(a, b, grid_k)
    scalar = ProcessSpec(spec.model, 1, spec.construction, spec.ell_target)
    factor = build_factor(scalar, grid)
    level = float(spec.model.gamma(b))
    ws = grid.window_start

    def work(start, vals):
        return int(np.sum(np.min(vals[:, 0, ws:], axis=1) > level))

    k = sum(map_path_chunks(factor, 1, n_paths, seed, work, threads))
    return KappaEstimate(k / n_paths if n_paths else 0.0, wilson(k, n_paths), n_paths, grid_k)


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------


def point_hit_bound(model: VarianceModel, a: float, b: float, ell: float = 1.0, c_u: float = 1.0,
                    form: str = "f_gamma") -> float:
    """Upper bound on P(B([a, b]) contains z) for a scalar coordinate.

    ``f_gamma``: c_u sqrt(ell) f_gamma(b - a) / gamma(a).
    ``gammamult``: c_u sqrt(ell) gamma(b - a) / gamma(a), valid when the
    gammamult ratio is bounded.
    ``log_corrected``: c_u sqrt(ell) gamma(b - a) sqrt(log(1/(b - a))) / gamma(a).
    """
    if not 0 < a < b:
        raise DomainError("need 0 < a < b")
    w = b - a
    ga = float(model.gamma(a))
    if form == "f_gamma":
        return c_u * math.sqrt(ell) * float(f_gamma(model, w)) / ga
    if form == "gammamult":
        gm = check_gammamult(model, y0=min(w, 0.5 * model.r_max))
        if gm.diverges:
            raise BoundNotEstablished("the gammamult ratio is unbounded for this model")
        return c_u * math.sqrt(ell) * float(model.gamma(w)) / ga
    if form == "log_corrected":
        return c_u * math.sqrt(ell) * float(model.gamma(w)) * math.sqrt(math.log(1.0 / w)) / ga
    raise DomainError(f"unknown bound form {form!r}")


def F_sma(model: VarianceModel, b: float, z_abs: float) -> float:
    """1 for z <= gamma(b), else 1 - exp(-2 artanh(gamma(b)^2 / z^2))."""
    gb = float(model.gamma(b))
    if z_abs <= gb:
        return 1.0
    return -math.expm1(-2.0 * math.atanh(gb * gb / (z_abs * z_abs)))


def ball_hit_bound(model: VarianceModel, a: float, b: float, z_abs: float, eps: float, kappa: float,
                   ell: float = 1.0, c_u: float = 1.0, d: int = 1) -> float:
    """(eps 2 kappa gamma(b) / gamma(a)^2 (1 + 1/F(|z|)) + point bound)^d."""
    if eps < 0:
        raise DomainError("eps must be >= 0")
    if not 0 < kappa < 1:
        raise DomainError("kappa must lie in (0, 1)")
    ga, gb = float(model.gamma(a)), float(model.gamma(b))
    first = eps * 2.0 * kappa * gb / ga**2 * (1.0 + 1.0 / F_sma(model, b, z_abs))
    return (first + point_hit_bound(model, a, b, ell, c_u)) ** d


def calibrate_constant(observed: float, shape_value: float) -> float:
    """The scalar c with c * shape_value = observed."""
    if not shape_value > 0:
        raise DomainError("cannot calibrate against a non-positive shape")
    return observed / shape_value


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------------------
# sandwich experiments
# ---------------------------------------------------------------------------


@dataclass
class SandwichReport:
    rows: list
    slope_p_upper: float
    slope_phi: float
    constant_C: float
    ordering_holds: bool
    case: tuple
    info: dict = field(default_factory=dict)


def sandwich_experiment(spec: ProcessSpec, a: float, b: float, eps_values, z=None, grid_k: int = 9,
                        n_paths: int = 10_000, seed: int = 1, threads: int = 1, capacity_points: int = 7,
                        safety: float = DEFAULT_SAFETY) -> SandwichReport:
    """Shrinking-ball sweep compared with the gauge and capacity bounds.

    Needs a power-log model whose case has an established upper bound.
    """
    model = spec.model
    if not isinstance(model, PowerLog):
        raise DomainError("sandwich experiments need a power-log model")
    case = texa_case_select(model.H, model.beta, spec.dim)
    if not case.upper_established:
        raise BoundNotEstablished(
            f"the Hausdorff upper bound is not established in case {case.case_id} ({case.label})")
    eps_values = sorted((float(e) for e in eps_values), reverse=True)
    z = np.zeros(spec.dim) if z is None else np.atleast_1d(np.asarray(z, float))
    targets = [TargetSet.ball(z, e) for e in eps_values]
    est = mc_hit_refinement(spec, targets, a, b, [grid_k], n_paths, seed, safety, threads)
    rows, caps = [], []
    for i, e in enumerate(eps_values):
        h = est[(i, grid_k)]
        pts, rad = ball_points(z, e, capacity_points)
        cap = capacity_estimate(pts, rad, case.lower_kernel).capacity
        caps.append(cap)
        rows.append({"target": targets[i].describe(), "eps": e, **h.to_row(), "grid_k": grid_k,
                     "phi": float(case.upper_gauge(e)), "capacity": cap})
    p_up = np.array([r["p_upper"] for r in rows])
    phis = np.array([r["phi"] for r in rows])
    C = calibrate_constant(p_up[0], caps[0]) if caps[0] > 0 else 0.0
    tol = 3.0 * np.array([est[(i, grid_k)].se_upper for i in range(len(eps_values))])
    ordering = bool(np.all(C * np.array(caps) <= p_up + tol))
    slope_p = loglog_slope(eps_values, np.maximum(p_up, 1.0 / n_paths))
    slope_phi = loglog_slope(eps_values, phis)
    for r, c in zip(rows, caps):
        r["C_capacity"] = C * c
    return SandwichReport(rows, slope_p, slope_phi, C, ordering, case.cases,
                          {"lower_kernel": case.lower_kernel.to_dict(), "upper_gauge": case.upper_gauge.to_dict()})


def cantor_hit_comparison(models, dim: int, cantor: CantorSpec, depth: int, a: float, b: float,
                          grid_k: int, n_paths: int, seed: int, threads: int = 1,
                          safety: float = DEFAULT_SAFETY) -> list:
    """Hit brackets of one axis Cantor set for several variance models.

    All models share the seed, so paths use identical noise.
    """
    target = TargetSet.cantor_on_axis(cantor, depth)
    rows = []
    for model in models:
        spec = ProcessSpec(model, dim)
        h = mc_hit_refinement(spec, [target], a, b, [grid_k], n_paths, seed, safety, threads)[(0, grid_k)]
        rows.append({"model": model.to_dict(), "depth": depth, **h.to_row(), "grid_k": grid_k})
    return rows
