"""
Closed-form transition densities, moments, asymptotic laws and exact
sampling at a fixed time for the six conditioned families.

Every density is assembled in log space from factors of the form
log_sinh, log N and log(1 - e^{-y}), with one final exp. Points outside
the state space have density 0.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy import optimize, special
from scipy.interpolate import PchipInterpolator

import numerics
import processes
from config import config
from errors import DomainError, HorizonError, ParameterError, UnsupportedFamilyError, UnsupportedMomentError
from processes import Family, ProcessSpec, Side
from simulate import path_rng

logger = logging.getLogger(__name__)

# Below this value of X*x0/T the excursion moments use the x0*X -> 0 limit
EXCURSION_DEGENERATE = 1e-7


class Provenance(str, Enum):
    CLOSED = "closed"
    NUMERIC = "numeric"


@dataclass(frozen=True)
class MomentPair:
    mean: float
    variance: float
    t: float
    provenance: Provenance = Provenance.CLOSED

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0, got {self.variance}")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class AsymptoticLaw:
    mean_leading: Callable[[float], float]
    var_leading: Callable[[float], float]
    regime: str


def _check_time(spec: ProcessSpec, t: float, allow_start: bool = False):
    if t < 0 or (t == 0 and not allow_start):
        raise DomainError(f"t must be > 0, got {t}")
    if spec.family is Family.EXCURSION_E and t >= spec.horizon and not allow_start:
        raise HorizonError(f"excursion_e: density needs t < T = {spec.horizon}, got {t}")
    if spec.has_horizon and t > spec.horizon:
        raise HorizonError(f"{spec.family.value}: t must be <= T = {spec.horizon}, got {t}")


# Log-density kernels, evaluated at interior points only

def _log_killed(d, a, t):
    """log(1 - e^{-2 a d / t}): the image factor of a flat barrier."""
    return np.log(-np.expm1(-2.0 * a * d / t))


def _log_taboo(x, a, t):
    d = a - x
    return np.log(d / a) + numerics.log_norm_pdf(x, 0.0, t) + _log_killed(d, a, t)


def _log_coth(spec: ProcessSpec, x, t):
    m, a = abs(spec.mu), spec.a
    d = a - x
    return (numerics.log_sinh(m * d) - numerics.log_sinh(m * a) - 0.5 * spec.mu ** 2 * t
            + numerics.log_norm_pdf(x, 0.0, t) + _log_killed(d, a, t))


def _log_line(spec: ProcessSpec, x, t):
    alpha, beta = spec.alpha, spec.beta
    m = abs(alpha)
    d = alpha * t + beta - x
    return (numerics.log_sinh(m * d) - numerics.log_sinh(m * beta) + alpha * x - alpha ** 2 * t
            + numerics.log_norm_pdf(x, 0.0, t) + _log_killed(d, beta, t))


def _log_excursion(spec: ProcessSpec, x, t):
    T, X, x0 = spec.horizon, spec.x_end, spec.x0
    tau = T - t
    # the x0 and X factors of the two killed kernels cancel exactly
    return (numerics.log_norm_pdf(x, x0, t) + numerics.log_norm_pdf(X, x, tau)
            - numerics.log_norm_pdf(X, x0, T) + np.log(2.0 * x * x * T / (t * tau))
            + np.log(numerics.exprel(-2.0 * x0 * x / t))
            + np.log(numerics.exprel(-2.0 * x * X / tau))
            - math.log(numerics.exprel(-2.0 * x0 * X / T)))


def _log_meander(spec: ProcessSpec, x, t):
    T, mu, x0 = spec.horizon, float(spec.mu), spec.x0
    b, _, scale = processes.meander_survival_parts(mu, x, T - t)
    log_end = np.log(b) + scale
    drift_factor = mu * (x - x0) - 0.5 * mu * mu * t
    if x0 < config.SERIES_SWITCH:
        _, db0, scale0 = processes.meander_survival_parts(mu, 0.0, T)
        return (numerics.log_norm_pdf(x, 0.0, t) + drift_factor + np.log(2.0 * x / t) + log_end
                - math.log(float(db0)) - float(scale0))
    b0, _, scale0 = processes.meander_survival_parts(mu, x0, T)
    return (numerics.log_norm_pdf(x, x0, t) + _log_killed(x, x0, t) + drift_factor + log_end
            - math.log(float(b0)) - float(scale0))


def _log_pdf(spec: ProcessSpec, x: np.ndarray, t: float):
    family = spec.family
    if family is Family.TABOO_I:
        return _log_taboo(x, spec.a, t)
    if family is Family.COTH_II:
        return _log_coth(spec, x, t)
    if family is Family.LINE_AB:
        return _log_line(spec, x, t)
    if family is Family.LINE_AB_STAR:
        # taboo process in the frame moving with the line
        return _log_taboo(x - spec.alpha * t, spec.beta, t)
    if family is Family.EXCURSION_E:
        return _log_excursion(spec, x, t)
    return _log_meander(spec, x, t)


def pdf(spec: ProcessSpec, x, t: float):
    """Transition density p(x, t) from x0 at time 0; 0 outside the state space."""
    _check_time(spec, t)
    x_arr = np.asarray(x, dtype=float)
    inside = np.asarray(processes.distance_to_boundary(spec, x_arr, t)) > 0
    b = processes.boundary(spec)
    safe_point = b.position_at(t) + (-1.0 if b.side is Side.UPPER else 1.0)
    xs = np.where(inside, x_arr, safe_point)
    with np.errstate(under="ignore", divide="ignore"):
        values = np.exp(_log_pdf(spec, xs, t))
    values = np.where(inside, values, 0.0)
    return values if values.ndim else float(values)


def current(spec: ProcessSpec, x, t: float, h: float = 1e-5):
    """Probability current j = -1/2 dp/dx by central differences."""
    x_arr = np.asarray(x, dtype=float)
    if np.any(~np.asarray(processes.contains(spec, x_arr - h, t))) or \
            np.any(~np.asarray(processes.contains(spec, x_arr + h, t))):
        raise DomainError(f"{spec.label()}: x +- h must stay inside the state space")
    values = -0.5 * (np.asarray(pdf(spec, x_arr + h, t)) - np.asarray(pdf(spec, x_arr - h, t))) / (2.0 * h)
    return values if values.ndim else float(values)


def boundary_current(spec: ProcessSpec, t: float, h: float = 1e-4) -> float:
    """-1/2 dp/dx at the boundary with the one-sided fourth-order stencil."""
    b = processes.boundary(spec)
    position = float(b.position_at(t))
    side = "below" if b.side is Side.UPPER else "above"
    return -0.5 * numerics.one_sided_derivative(lambda y: pdf(spec, y, t), position, h, side)


# Integrals of the density

def location(spec: ProcessSpec, t: float) -> Tuple[float, float]:
    """Rough (center, spread) used to shape quadratures."""
    if spec.family is Family.MEANDER_M:
        spread = math.sqrt(t)
        return max(spec.x0 + spec.mu * t, spread), spread
    pair = closed_moments(spec, t)
    return pair.mean, max(pair.sd, 1e-6)


def integrate_pdf(spec: ProcessSpec, t: float, weight: Callable[[float], float] = None,
                  upper: float = None) -> numerics.QuadratureResult:
    """Quadrature of weight(x) p(x, t) over the state space (up to `upper`)."""
    _check_time(spec, t)
    domain = processes.state_space(spec, t)
    if upper is not None:
        if upper <= domain.lo:
            return numerics.QuadratureResult(0.0, 0.0, 0)
        domain = numerics.Interval(domain.lo, min(domain.hi, upper))
    center, spread = location(spec, t)
    if weight is None:
        def f(y):
            return pdf(spec, y, t)
    else:
        def f(y):
            return weight(y) * pdf(spec, y, t)
    return numerics.integrate(f, domain, scale=spread, points=[center])


def cdf(spec: ProcessSpec, x: float, t: float) -> float:
    """P(X(t) <= x) by adaptive quadrature from the lower end of the state space."""
    return integrate_pdf(spec, t, upper=float(x)).value


def normalization(spec: ProcessSpec, t: float) -> float:
    return integrate_pdf(spec, t).value


def numeric_moments(spec: ProcessSpec, t: float) -> MomentPair:
    """Mean and variance by quadrature (the variance is taken about the mean)."""
    mass = integrate_pdf(spec, t).value
    mean = integrate_pdf(spec, t, weight=lambda y: y).value / mass
    var = integrate_pdf(spec, t, weight=lambda y: (y - mean) ** 2).value / mass
    return MomentPair(mean, max(var, 0.0), t, Provenance.NUMERIC)


# Closed-form moments

def _partial_gauss(mean: float, var: float, b: float, below: bool) -> Tuple[float, float, float]:
    """Zeroth to second moments of N(mean, var) restricted below (or above) b."""
    s = math.sqrt(var)
    z = (b - mean) / s
    g = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    if below:
        mass = special.ndtr(z)
        return mass, mean * mass - s * g, (mean * mean + var) * mass - s * (mean + b) * g
    mass = special.ndtr(-z)
    return mass, mean * mass + s * g, (mean * mean + var) * mass + s * (mean + b) * g


def _image_moments(components: Sequence[Tuple[float, float, float]], b: float,
                   side: Side) -> Tuple[float, float]:
    """E[X], E[X^2] of sum_j w_j [N_j(x) + N_j(2b - x)] on the physical side of b."""
    upper = side is Side.UPPER
    first = second = 0.0
    for weight, mean, var in components:
        _, in1, in2 = _partial_gauss(mean, var, b, below=upper)
        out0, out1, out2 = _partial_gauss(mean, var, b, below=not upper)
        first += weight * (in1 + 2.0 * b * out0 - out1)
        second += weight * (in2 + 4.0 * b * b * out0 - 4.0 * b * out1 + out2)
    return first, second


def _mixture_weights(c: float) -> Tuple[float, float]:
    """e^{c}/(2 sinh c) and -e^{-c}/(2 sinh c); they sum to 1."""
    return -1.0 / math.expm1(-2.0 * c), -1.0 / math.expm1(2.0 * c)


def _taboo_moments(a: float, t: float) -> Tuple[float, float]:
    r = a / math.sqrt(2.0 * t)
    e, ec = special.erf(r), special.erfc(r)
    g = math.exp(-a * a / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
    first = -(t / a) * e + a * ec - 2.0 * t * g
    second = 3.0 * t + 2.0 * a * a - 2.0 * (t + a * a) * e - 4.0 * a * t * g
    return first, second


def _excursion_moments(spec: ProcessSpec, t: float) -> Tuple[float, float]:
    T, X, x0 = spec.horizon, spec.x_end, spec.x0
    tau = T - t
    v = t * tau / T
    eps = X * x0 / T
    if eps < EXCURSION_DEGENERATE:
        m0 = (t * X + tau * x0) / T
        s = math.sqrt(v)
        if m0 < 1e-8 * s:
            first = 2.0 * math.sqrt(2.0 * v / math.pi)
        else:
            first = ((m0 * m0 + v) * special.erf(m0 / math.sqrt(2.0 * v)) / m0
                     + 2.0 * s * math.exp(-0.5 * m0 * m0 / v) / math.sqrt(2.0 * math.pi))
        return first, m0 * m0 + 3.0 * v
    m1 = (t * (X - x0) + T * x0) / T
    m2 = (t * (X + x0) - T * x0) / T
    w_plus, w_minus = _mixture_weights(eps)
    return _image_moments([(w_plus, m1, v), (w_minus, m2, v)], 0.0, Side.LOWER)


def closed_moments(spec: ProcessSpec, t: float) -> MomentPair:
    """Closed-form mean and variance; MeanderM raises UnsupportedMomentError."""
    family = spec.family
    if family is Family.MEANDER_M:
        raise UnsupportedMomentError("meander_m has no closed-form moments; use numeric_moments")
    if family is Family.EXCURSION_E:
        _check_time(spec, t, allow_start=True)
        if t == 0:
            return MomentPair(float(spec.x0), 0.0, t)
        if t == spec.horizon:
            return MomentPair(float(spec.x_end), 0.0, t)
        first, second = _excursion_moments(spec, t)
    else:
        _check_time(spec, t)
        if family is Family.TABOO_I:
            first, second = _taboo_moments(spec.a, t)
        elif family is Family.LINE_AB_STAR:
            first, second = _taboo_moments(spec.beta, t)
            shift = spec.alpha * t
            second = second + 2.0 * shift * first + shift * shift
            first = first + shift
        elif family is Family.COTH_II:
            w_plus, w_minus = _mixture_weights(spec.mu * spec.a)
            first, second = _image_moments([(w_plus, -spec.mu * t, t), (w_minus, spec.mu * t, t)],
                                           spec.a, Side.UPPER)
        else:
            alpha, beta = spec.alpha, spec.beta
            w_plus, w_minus = _mixture_weights(alpha * beta)
            first, second = _image_moments([(w_plus, 0.0, t), (w_minus, 2.0 * alpha * t, t)],
                                           beta + alpha * t, Side.UPPER)
    return MomentPair(float(first), max(float(second - first * first), 0.0), t)


def mean(spec: ProcessSpec, t: float) -> float:
    return closed_moments(spec, t).mean


def variance(spec: ProcessSpec, t: float) -> float:
    return closed_moments(spec, t).variance


def moments(spec: ProcessSpec, t: float) -> MomentPair:
    """Closed form where one exists, quadrature otherwise (provenance flagged)."""
    try:
        return closed_moments(spec, t)
    except UnsupportedMomentError:
        logger.debug(f"{spec.label()}: numeric moments at t={t}")
        return numeric_moments(spec, t)


def asymptotics(spec: ProcessSpec) -> AsymptoticLaw:
    """Leading large-t behaviour of the mean and variance."""
    family = spec.family
    taboo_var = 3.0 - 8.0 / math.pi

    def taboo_mean(t):
        return -2.0 * math.sqrt(2.0 * t / math.pi)

    if family is Family.TABOO_I:
        return AsymptoticLaw(taboo_mean, lambda t: taboo_var * t, "diffusive repulsion from a")
    if family is Family.COTH_II:
        drift = -abs(spec.mu)
        return AsymptoticLaw(lambda t: drift * t, lambda t: t, "Brownian motion with drift -|mu|")
    if family is Family.LINE_AB:
        alpha, beta = spec.alpha, spec.beta
        if alpha > 0:
            limit = beta - beta / math.tanh(alpha * beta)
            return AsymptoticLaw(lambda t: limit, lambda t: t, "rising line: bounded mean")
        return AsymptoticLaw(lambda t: 2.0 * alpha * t, lambda t: t, "falling line: mean follows 2 alpha t")
    if family is Family.LINE_AB_STAR:
        alpha = spec.alpha
        return AsymptoticLaw(lambda t: alpha * t + taboo_mean(t), lambda t: taboo_var * t,
                             "taboo process moving with the line")
    raise UnsupportedFamilyError(f"{family.value} lives on a finite horizon; no large-t law")


# Exact sampling

class DistributionTable:
    """Cached CDF and quantile function of p(., t) on a fixed grid.

    The grid spans SAMPLER_SPAN_SD standard deviations around the mean,
    clipped to the state space, with SAMPLER_LEVELS cells.
    """

    def __init__(self, spec: ProcessSpec, t: float, levels: int = None, span_sd: float = None):
        levels = levels or config.SAMPLER_LEVELS
        span_sd = span_sd or config.SAMPLER_SPAN_SD
        self.spec = spec
        self.t = t
        pair = moments(spec, t)
        domain = processes.state_space(spec, t)
        lo = max(domain.lo, pair.mean - span_sd * pair.sd)
        hi = min(domain.hi, pair.mean + span_sd * pair.sd)
        self.grid = np.linspace(lo, hi, levels + 1)
        cumulative = numerics.cumulative_integral(lambda y: np.asarray(pdf(spec, y, t)), self.grid)
        self.mass = float(cumulative[-1])
        self.levels_cdf = cumulative / self.mass
        self._cdf = PchipInterpolator(self.grid, self.levels_cdf, extrapolate=False)
        strict = np.concatenate(([True], np.diff(self.levels_cdf) > 0))
        self._ppf = PchipInterpolator(self.levels_cdf[strict], self.grid[strict], extrapolate=False)
        logger.debug(f"Built table for {spec.label()} at t={t}: [{lo:g}, {hi:g}], mass {self.mass:.12f}")

    def cdf(self, x):
        x_arr = np.asarray(x, dtype=float)
        values = np.clip(np.nan_to_num(self._cdf(x_arr), nan=0.0), 0.0, 1.0)
        values = np.where(x_arr >= self.grid[-1], 1.0, np.where(x_arr <= self.grid[0], 0.0, values))
        return values if values.ndim else float(values)

    def _refine(self, u: float, lo: float, hi: float) -> float:
        return optimize.brentq(lambda y: self.cdf(y) - u, lo, hi, xtol=1e-14)

    def ppf(self, u):
        u_arr = np.atleast_1d(np.asarray(u, dtype=float))
        if np.any((u_arr < 0) | (u_arr > 1)):
            raise ParameterError("quantile levels must lie in [0, 1]")
        x = self._ppf(u_arr)
        low_cut, high_cut = self.levels_cdf[1], self.levels_cdf[-2]
        for i in np.flatnonzero((u_arr < low_cut) | (u_arr > high_cut) | np.isnan(x)):
            if u_arr[i] <= low_cut:
                x[i] = self._refine(u_arr[i], self.grid[0], self.grid[1])
            else:
                x[i] = self._refine(u_arr[i], self.grid[-2], self.grid[-1])
        return x if np.ndim(u) else float(x[0])


@lru_cache(maxsize=32)
def distribution_table(spec: ProcessSpec, t: float) -> DistributionTable:
    return DistributionTable(spec, t)


def sample_exact(spec: ProcessSpec, t: float, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws of X(t) by inverse CDF, deterministic in seed."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    table = distribution_table(spec, float(t))
    return np.asarray(table.ppf(path_rng(seed).random(int(n))))

