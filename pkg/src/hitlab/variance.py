"""Variance functions gamma and the analytic checks run on them.

A variance function is continuous and strictly increasing with gamma(0) = 0;
for the processes studied here Var B(t) = gamma(t)**2 and the increments
satisfy E|B(t) - B(s)|**2 ~ gamma(|t - s|)**2 up to a constant ell.

Two families are provided:

* :class:`PowerLog`, gamma(r) = r**H * log(1/r)**beta on (0, r_max];
* :class:`Tabulated`, a monotone cubic (PCHIP) interpolant of samples.

Every model can be evaluated in log coordinates (``log_gamma(log_r)``), which
is what the asymptotic checks below use to probe scales far beyond the range
of double precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, NumericalError, RangeError

TOL_INV = 1e-12
SQRT_LOG2 = math.sqrt(math.log(2.0))
# lower limit of the gammamult integral after y = exp(-u**2)
_U_LOW = SQRT_LOG2

ADMISSIBILITY_RULE = (
    "gamma_{H,beta} requires H in (0,1) with any beta, "
    "or H = 1 with beta > 0, or H = 0 with beta < -1/2"
)


def _as_output(x: np.ndarray) -> Any:
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def check_admissible(H: float, beta: float) -> None:
    """Raise :class:`DomainError` unless (H, beta) is an admissible pair."""
    if not (math.isfinite(H) and math.isfinite(beta)):
        raise DomainError(f"non-finite parameters H={H}, beta={beta}")
    ok = (0.0 < H < 1.0) or (H == 1.0 and beta > 0.0) or (H == 0.0 and beta < -0.5)
    if not ok:
        raise DomainError(f"inadmissible (H={H}, beta={beta}): {ADMISSIBILITY_RULE}")


def monotone_limit(H: float, beta: float) -> float:
    """Default right end of the domain of gamma_{H,beta}.

    gamma_{H,beta}' has the sign of H*log(1/r) - beta, so for beta > H the
    function stops increasing at r = exp(-beta/H); below that point (and
    below 1/e) it is strictly increasing.
    """
    if H > 0.0:
        return math.exp(-max(1.0, beta / H))
    return math.exp(-1.0)


class VarianceModel:
    """Common interface of variance functions.

    Subclasses provide ``_gamma``, ``_derivative`` and ``log_gamma``; the
    inverse is computed here by bisection in log coordinates.
    """

    r_max: float

    # -- evaluation -----------------------------------------------------
    def _check_domain(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(np.isnan(r)) or np.any(r < 0.0) or np.any(r > self.r_max * (1.0 + 1e-12)):
            raise DomainError(f"r outside [0, r_max={self.r_max:.6g}]")
        return np.minimum(r, self.r_max)

    def gamma(self, r):
        """gamma(r) for r in [0, r_max]; vectorized."""
        return _as_output(self._gamma(self._check_domain(r)))

    __call__ = gamma

    def derivative(self, r):
        return _as_output(self._derivative(self._check_domain(r)))

    def log_gamma(self, log_r):
        raise NotImplementedError

    def scaling_ratio(self, r):
        """r * gamma'(r) / gamma(r)."""
        r = self._check_domain(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            return _as_output(r * self._derivative(r) / self._gamma(r))

    def scaling_ratio_log(self, log_r):
        return self.scaling_ratio(np.exp(log_r))

    @property
    def log_r_max(self) -> float:
        return math.log(self.r_max)

    @property
    def gamma_max(self) -> float:
        return float(self._gamma(np.asarray(self.r_max)))

    # -- inversion ------------------------------------------------------
    def log_inverse(self, log_x):
        """log of gamma^{-1}(exp(log_x)), by vectorized bisection on log r."""
        scalar = np.ndim(log_x) == 0
        log_x = np.atleast_1d(np.asarray(log_x, dtype=float))
        top = self.log_r_max
        log_top = float(self.log_gamma(top))
        if np.any(log_x > log_top + 1e-12 * max(1.0, abs(log_top))):
            raise RangeError(f"x exceeds gamma(r_max) = {math.exp(log_top):.6g}")
        at_top = log_x >= log_top
        hi = np.full_like(log_x, top)
        lo = hi - 1.0
        for _ in range(4000):
            bad = self.log_gamma(lo) > log_x
            if not bad.any():
                break
            width = hi[bad] - lo[bad]
            hi[bad] = lo[bad]
            lo[bad] = lo[bad] - 2.0 * width
        else:
            raise NumericalError("could not bracket gamma^{-1}")
        for _ in range(300):
            mid = 0.5 * (lo + hi)
            below = self.log_gamma(mid) <= log_x
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(lo))):
                break
        out = np.where(at_top, top, 0.5 * (lo + hi))
        return float(out[0]) if scalar else out

    def inverse(self, x):
        """gamma^{-1}(x) for x in [0, gamma(r_max)]."""
        x_arr = np.asarray(x, dtype=float)
        if np.any(np.isnan(x_arr)) or np.any(x_arr < 0.0):
            raise DomainError("gamma_inverse needs x >= 0")
        if np.any(x_arr > self.gamma_max * (1.0 + 1e-12)):
            raise RangeError(f"x exceeds gamma(r_max) = {self.gamma_max:.6g}")
        flat = np.atleast_1d(x_arr).ravel()
        out = np.zeros_like(flat)
        pos = flat > 0.0
        if pos.any():
            out[pos] = np.exp(np.atleast_1d(self.log_inverse(np.log(flat[pos]))))
        return _as_output(out.reshape(x_arr.shape))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLog(VarianceModel):
    """gamma(r) = r**H * log(1/r)**beta.

    ``validate=False`` admits pairs outside the admissible set (for example
    H = 1, beta = 0, the smooth process B(t) = tZ) for diagnostic use.
    """

    H: float
    beta: float
    r_max: float | None = None
    validate: bool = True

    def __post_init__(self):
        H, beta = float(self.H), float(self.beta)
        if self.validate:
            check_admissible(H, beta)
        if H < 0.0 or (H == 0.0 and beta >= 0.0):
            raise DomainError(f"gamma_{{H={H},beta={beta}}} is not increasing near 0")
        natural = monotone_limit(H, beta)
        r_max = natural if self.r_max is None else float(self.r_max)
        if not 0.0 < r_max < 1.0:
            raise DomainError("PowerLog needs 0 < r_max < 1")
        if H > 0.0 and beta > 0.0 and r_max > natural * (1.0 + 1e-12):
            raise DomainError(
                f"gamma_{{H,beta}} is not increasing beyond r = exp(-beta/H) = {natural:.6g}"
            )
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "r_max", r_max)

    def _gamma(self, r):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.power(r, self.H) * np.power(-np.log(r), self.beta)
        return np.where(r > 0.0, out, 0.0)

    def _derivative(self, r):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            L = -np.log(r)
            out = np.power(r, self.H - 1.0) * np.power(L, self.beta - 1.0) * (self.H * L - self.beta)
        return np.where(r > 0.0, out, np.inf)

    def log_gamma(self, log_r):
        log_r = np.asarray(log_r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.H * log_r + self.beta * np.log(-log_r)

    def scaling_ratio_log(self, log_r):
        return _as_output(self.H + self.beta / np.asarray(log_r, dtype=float))

    def to_dict(self) -> dict:
        return {"family": "power_log", "H": self.H, "beta": self.beta, "r_max": self.r_max}


@dataclass(frozen=True, eq=False)
class Tabulated(VarianceModel):
    """Monotone piecewise-cubic interpolant through samples (r, gamma(r))."""

    points: tuple
    r_max: float = field(init=False)
    _interp: Any = field(init=False, repr=False)
    _lead: tuple = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise DomainError("tabulated model needs a list of (r, gamma) pairs")
        if pts[0, 0] > 0.0:
            pts = np.vstack([[0.0, 0.0], pts])
        if pts[0, 0] != 0.0 or pts[0, 1] != 0.0:
            raise DomainError("tabulated model must satisfy gamma(0) = 0")
        if np.any(np.diff(pts[:, 0]) <= 0) or np.any(np.diff(pts[:, 1]) <= 0):
            raise DomainError("tabulated samples must be strictly increasing in r and gamma")
        interp = PchipInterpolator(pts[:, 0], pts[:, 1])
        # first cubic piece, gamma(r) = c0 r^3 + c1 r^2 + c2 r near 0
        c = interp.c[:, 0]
        order, coef = next(((3 - k, c[k]) for k in (2, 1, 0) if c[k] > 0.0), (1, pts[1, 1] / pts[1, 0]))
        object.__setattr__(self, "points", tuple(map(tuple, pts.tolist())))
        object.__setattr__(self, "r_max", float(pts[-1, 0]))
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_lead", (order, math.log(coef), float(pts[1, 0])))

    def _gamma(self, r):
        return np.where(r > 0.0, self._interp(r), 0.0)

    def _derivative(self, r):
        return self._interp.derivative()(r)

    def log_gamma(self, log_r):
        log_r = np.asarray(log_r, dtype=float)
        order, log_coef, _ = self._lead
        tiny = log_r < -600.0
        r = np.exp(np.where(tiny, -600.0, log_r))
        with np.errstate(divide="ignore"):
            direct = np.log(self._interp(np.minimum(r, self.r_max)))
        return np.where(tiny, order * log_r + log_coef, direct)

    def scaling_ratio_log(self, log_r):
        log_r = np.asarray(log_r, dtype=float)
        order = self._lead[0]
        tiny = log_r < -600.0
        r = np.exp(np.where(tiny, -600.0, log_r))
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = r * self._derivative(r) / self._gamma(r)
        return _as_output(np.where(tiny, float(order), direct))

    def to_dict(self) -> dict:
        return {"family": "tabulated", "points": [list(p) for p in self.points]}


def model_from_dict(desc: dict) -> VarianceModel:
    """Inverse of ``model.to_dict()``."""
    family = desc.get("family")
    if family == "power_log":
        return PowerLog(float(desc["H"]), float(desc["beta"]), desc.get("r_max"))
    if family == "tabulated":
        return Tabulated(tuple(map(tuple, desc["points"])))
    raise DomainError(f"unknown variance family {family!r}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def gamma_eval(model: VarianceModel, r):
    return model.gamma(r)


def gamma_inverse(model: VarianceModel, x):
    return model.inverse(x)


@dataclass(frozen=True)
class LimitEstimate:
    """An extrapolated limit together with a crude error estimate."""

    value: float
    uncertainty: float
    stable: bool

    def __float__(self) -> float:
        return self.value


def _extrapolate(L: np.ndarray, s: np.ndarray, basis) -> LimitEstimate:
    """Fit s ~ c0 + sum_k c_k b_k(L) on the tail and return c0."""

    def fit(mask):
        A = np.column_stack([np.ones(mask.sum())] + [b(L[mask]) for b in basis])
        coef, *_ = np.linalg.lstsq(A, s[mask], rcond=None)
        return coef[0]

    n = len(L)
    half = np.arange(n) >= n // 2
    quarter = np.arange(n) >= (3 * n) // 4
    v_half, v_quarter = fit(half), fit(quarter)
    unc = abs(v_half - v_quarter)
    return LimitEstimate(float(v_half), float(unc), bool(np.isfinite(v_half) and unc < 1e-3))


def index_estimate(model: VarianceModel, k_max: int = 1000, n_points: int = 96) -> LimitEstimate:
    """Index of gamma: the limit of log gamma(r) / log r along r = 2**-k."""
    k0 = max(1, math.ceil(-model.log_r_max / math.log(2.0)))
    if k_max <= k0 + 4:
        raise DomainError("k_max too small for the domain of the model")
    if k_max - k0 + 1 <= n_points:
        ks = np.arange(k0, k_max + 1, dtype=float)
    else:
        ks = np.unique(np.round(np.geomspace(k0, k_max, n_points)))
    log_r = -ks * math.log(2.0)
    s = np.asarray(model.log_gamma(log_r)) / log_r
    L = -log_r
    return _extrapolate(L, s, [lambda L: 1.0 / L, lambda L: np.log(L) / L])


def local_scaling_limit(model: VarianceModel, r_min: float | None = None, n_points: int = 96) -> LimitEstimate:
    """Limit of r gamma'(r) / gamma(r) as r -> 0, extrapolated in 1/log(1/r)."""
    L0 = -model.log_r_max
    L1 = 1e4 if r_min is None else -math.log(r_min)
    if not L1 > L0:
        raise DomainError("r_min must lie below r_max")
    L = np.geomspace(L0, L1, n_points)
    s = np.asarray(model.scaling_ratio_log(-L), dtype=float)
    if not np.all(np.isfinite(s)):
        return LimitEstimate(float("nan"), float("inf"), False)
    return _extrapolate(L, s, [lambda L: 1.0 / L, lambda L: 1.0 / L**2])


def _quad(f, lo, hi, what: str, **kw) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, lo, hi, epsabs=1e-10, epsrel=1e-10, limit=400, **kw)
        except integrate.IntegrationWarning as exc:
            raise NumericalError(f"quadrature failed for {what}: {exc}") from exc
    if not math.isfinite(val):
        raise NumericalError(f"quadrature for {what} returned {val}")
    return val


def _gammamult_converges(model: VarianceModel) -> bool:
    if isinstance(model, PowerLog) and model.H == 0.0:
        return model.beta < -0.5
    return True


def gammamult_ratio(model: VarianceModel, log_x: float) -> float:
    """(1/gamma(x)) * int_0^{1/2} gamma(xy) dy / (y sqrt(log 1/y)).

    With y = exp(-u**2) the weight becomes 2 du and the endpoint singularity
    at y = 0 disappears.
    """
    if not _gammamult_converges(model):
        raise DomainError("int_0 gamma(xy) dy/(y sqrt(log 1/y)) diverges for this model")
    ref = float(model.log_gamma(log_x))

    def integrand(u):
        return 2.0 * math.exp(float(model.log_gamma(log_x - u * u)) - ref)

    return _quad(integrand, _U_LOW, math.inf, f"gammamult ratio at log x = {log_x:.6g}")


def f_gamma(model: VarianceModel, x):
    """gamma(x) sqrt(log 2) + int_0^{1/2} gamma(xy) dy / (y sqrt(log 1/y))."""
    x_arr = np.atleast_1d(model._check_domain(x)).astype(float)
    if not _gammamult_converges(model):
        raise DomainError("f_gamma diverges: the process is not continuous (need beta < -1/2 when H = 0)")
    out = np.zeros_like(x_arr)
    for i, xi in enumerate(x_arr):
        if xi > 0.0:
            out[i] = float(model._gamma(np.asarray(xi))) * (SQRT_LOG2 + gammamult_ratio(model, math.log(xi)))
    return _as_output(out.reshape(np.shape(x)))


@dataclass(frozen=True)
class GammaMultResult:
    """Outcome of the empirical check of int gamma(xy)... <= k gamma(x)."""

    khat: float
    diverges: bool
    tail_exponent: float
    log_x: np.ndarray
    ratios: np.ndarray


def check_gammamult(model: VarianceModel, y0: float | None = None, n_grid: int = 64, X_max: float = 1e4) -> GammaMultResult:
    """Estimate sup over x in (0, y0] of the gammamult ratio.

    The ratio is sampled on x = exp(-X), X log-spaced up to ``X_max``. A
    ratio that keeps growing like a positive power of log(1/x) is reported as
    divergent with ``khat = inf``.
    """
    y0 = 0.5 * model.r_max if y0 is None else float(y0)
    if not 0.0 < y0 < model.r_max:
        raise DomainError("y0 must lie in (0, r_max)")
    X = np.geomspace(-math.log(y0), X_max, n_grid)
    ratios = np.array([gammamult_ratio(model, -Xi) for Xi in X])
    tail = slice(2 * n_grid // 3, None)
    expo = float(np.polyfit(np.log(X[tail]), np.log(ratios[tail]), 1)[0])
    diverges = expo > 0.05 and bool(np.all(np.diff(ratios[tail]) > 0))
    khat = math.inf if diverges else float(ratios.max())
    return GammaMultResult(khat, diverges, expo, -X, ratios)


@dataclass(frozen=True)
class HypothesisReport:
    concave_near_zero: bool
    concavity_violation_index: int
    derivative_blows_up: bool
    derivative_estimate: float
    h1_constant: dict
    gammamult_khat: float
    gammamult_diverges: bool
    index: float
    local_scaling_limit: float

    @property
    def h0_satisfied(self) -> bool:
        return self.concave_near_zero and self.derivative_blows_up


def check_hypotheses(model: VarianceModel, a: float, b: float, eps_values=None, n_levels: int = 50) -> HypothesisReport:
    """Numerical checks of concavity, gamma'(0+) = inf and the h1 constant."""
    if not (0.0 < a < b <= model.r_max):
        raise DomainError("need 0 < a < b <= r_max")
    r = model.r_max * 2.0 ** -np.arange(n_levels + 1, dtype=float)
    g = np.asarray(model.gamma(r))
    chord = (g[:-1] - g[1:]) / (r[:-1] - r[1:])  # chord k spans [r_{k+1}, r_k]
    # concave <=> chord slopes do not decrease as r shrinks
    viol = chord[:-1] - chord[1:] > 1e-12 + 1e-10 * np.abs(chord[1:])
    idx = np.nonzero(viol)[0]
    last = int(idx.max()) if idx.size else -1
    concave = last < n_levels // 2

    growth_total = chord[-1] / chord[0]
    growth_tail = chord[-1] / chord[-11] - 1.0
    blows_up = bool(growth_total > 1e3 or growth_tail > 0.01)
    deriv = math.inf if blows_up else float(chord[-1])

    if eps_values is None:
        eps_values = (b - a) * 2.0 ** -np.arange(8, dtype=float)
    s = np.linspace(a, b, 129)[:-1]
    h1 = {}
    for eps in eps_values:
        deltas = eps * np.geomspace(1e-4, 1.0, 65)
        S, D = np.meshgrid(s, deltas)
        ok = S + D <= b
        S, D = S[ok], D[ok]
        if S.size == 0:
            continue
        ratio = (np.asarray(model.gamma(S + D)) - np.asarray(model.gamma(S))) / np.asarray(model.gamma(D))
        h1[float(eps)] = float(ratio.max())

    try:
        gm = check_gammamult(model)
        khat, div = gm.khat, gm.diverges
    except DomainError:
        khat, div = math.inf, True
    return HypothesisReport(
        concave_near_zero=concave,
        concavity_violation_index=last,
        derivative_blows_up=blows_up,
        derivative_estimate=deriv,
        h1_constant=h1,
        gammamult_khat=khat,
        gammamult_diverges=div,
        index=index_estimate(model).value,
        local_scaling_limit=local_scaling_limit(model).value,
    )
