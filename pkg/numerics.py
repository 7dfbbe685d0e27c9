"""
Singularity-safe scalar kernels and adaptive quadrature.

All kernels accept scalars or numpy arrays and return the same shape
(a plain float for scalar input). Special functions come from
scipy.special (Cephes), which is deterministic across platforms.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate as sp_integrate
from scipy import special

from config import config
from errors import DomainError, ParameterError, QuadratureError

logger = logging.getLogger(__name__)

LOG_2 = math.log(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Interval:
    """Open interval ]lo, hi[ with possibly infinite ends"""
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ParameterError(f"Interval requires lo < hi, got ({self.lo}, {self.hi})")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.lo) & (x < self.hi)
        return bool(inside) if inside.ndim == 0 else inside


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int


def _out(values, like):
    """Return a float for scalar input, an array otherwise."""
    if np.ndim(like) == 0:
        return float(values)
    return values


def erf(x):
    return _out(special.erf(np.asarray(x, dtype=float)), x)


def erfc(x):
    return _out(special.erfc(np.asarray(x, dtype=float)), x)


def erfcx(x):
    """Scaled complementary error function e^{x^2} erfc(x)."""
    return _out(special.erfcx(np.asarray(x, dtype=float)), x)


def exprel(x):
    """(e^x - 1)/x, equal to 1 at the origin."""
    return _out(special.exprel(np.asarray(x, dtype=float)), x)


def log_sinh(x):
    """log(sinh x) for x > 0, without overflow for large x."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"log_sinh requires x > 0, got {x}")
    # 1 - e^{-2x} through expm1 keeps full precision for tiny x
    values = arr + np.log(-np.expm1(-2.0 * arr)) - LOG_2
    return _out(values, x)


def gauss_pair_diff(u, v):
    """e^{-u} - e^{-v}, accurate when u and v nearly coincide.

    Always factored on the smaller exponent so that swapping the
    arguments flips the sign bit-exactly.
    """
    u_arr = np.asarray(u, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    lo = np.minimum(u_arr, v_arr)
    hi = np.maximum(u_arr, v_arr)
    with np.errstate(over="ignore", invalid="ignore"):
        magnitude = -np.exp(-lo) * np.expm1(lo - hi)
    values = np.where(u_arr <= v_arr, magnitude, -magnitude)
    values = np.where(u_arr == v_arr, 0.0, values)
    if np.ndim(u) == 0 and np.ndim(v) == 0:
        return float(values)
    return values


def coth(y):
    """coth with the series 1/y + y/3 below the near-boundary switch."""
    arr = np.asarray(y, dtype=float)
    small = np.abs(arr) < config.SERIES_SWITCH
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = 1.0 / np.tanh(arr)
        series = 1.0 / arr + arr / 3.0
    return _out(np.where(small, series, direct), y)


def xcothx(y):
    """y*coth(y), equal to 1 at the origin."""
    arr = np.asarray(y, dtype=float)
    small = np.abs(arr) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = arr / np.tanh(arr)
    series = 1.0 + arr * arr / 3.0
    return _out(np.where(small, series, direct), y)


def sinhc(y):
    """sinh(y)/y, equal to 1 at the origin."""
    arr = np.asarray(y, dtype=float)
    small = np.abs(arr) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        direct = np.sinh(arr) / arr
    series = 1.0 + arr * arr / 6.0
    return _out(np.where(small, series, direct), y)


def log_norm_pdf(x, mean, var):
    """Log of the Gaussian density N(x; mean, var)."""
    x = np.asarray(x, dtype=float)
    return -0.5 * (x - mean) ** 2 / var - LOG_SQRT_2PI - 0.5 * np.log(var)


def integrate(f: Callable[[float], float], domain: Interval,
              abs_tol: Optional[float] = None, rel_tol: Optional[float] = None,
              scale: float = 1.0, points: Optional[Sequence[float]] = None,
              limit: Optional[int] = None) -> QuadratureResult:
    """Adaptive Gauss-Kronrod quadrature of f over an interval.

    Infinite ends are mapped onto [0, 1) with x = lo + scale*s/(1-s)
    (mirrored for an infinite lower end); `scale` only stretches the map.
    """
    abs_tol = config.QUAD_ABS_TOL if abs_tol is None else abs_tol
    rel_tol = config.QUAD_REL_TOL if rel_tol is None else rel_tol
    limit = config.QUAD_LIMIT if limit is None else limit
    if abs_tol <= 0 or rel_tol <= 0:
        raise ParameterError("integrate requires positive tolerances")
    if scale <= 0:
        raise ParameterError("integrate requires a positive scale")

    lo, hi = domain.lo, domain.hi
    if math.isinf(lo) and math.isinf(hi):
        left = integrate(f, Interval(-math.inf, 0.0), abs_tol / 2, rel_tol, scale, points, limit)
        right = integrate(f, Interval(0.0, math.inf), abs_tol / 2, rel_tol, scale, points, limit)
        return QuadratureResult(left.value + right.value,
                                left.abs_error_estimate + right.abs_error_estimate,
                                left.evaluations + right.evaluations)

    if math.isfinite(lo) and math.isfinite(hi):
        g, a, b = f, lo, hi
        mapped = [p for p in (points or ()) if lo < p < hi]
    else:
        if math.isinf(hi):
            def to_x(s):
                return lo + scale * s / (1.0 - s)

            def to_s(x):
                d = (x - lo) / scale
                return d / (1.0 + d)
        else:
            def to_x(s):
                return hi - scale * s / (1.0 - s)

            def to_s(x):
                d = (hi - x) / scale
                return d / (1.0 + d)

        def g(s):
            x = to_x(s)
            if not math.isfinite(x):
                return 0.0
            return f(x) * scale / (1.0 - s) ** 2

        a, b = 0.0, 1.0
        mapped = [to_s(p) for p in (points or ()) if lo < p < hi]

    kwargs = dict(epsabs=abs_tol, epsrel=rel_tol, limit=limit, full_output=1)
    if mapped:
        kwargs["points"] = sorted(mapped)
    out = sp_integrate.quad(g, a, b, **kwargs)
    value, abserr, info = out[0], out[1], out[2]
    if len(out) > 3:
        logger.debug(f"Quadrature did not converge on ({lo}, {hi}): {out[3]}")
        raise QuadratureError(f"quadrature did not converge on ({lo}, {hi})", value, abserr)
    return QuadratureResult(float(value), float(abserr), int(info["neval"]))


def cumulative_integral(f: Callable[[np.ndarray], np.ndarray], grid: np.ndarray,
                        order: int = 8) -> np.ndarray:
    """Running integral of a vectorized f at the nodes of an increasing grid.

    Each cell uses an `order`-point Gauss-Legendre rule; the first entry is 0.
    """
    grid = np.asarray(grid, dtype=float)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    left, right = grid[:-1], grid[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    xs = mid[:, None] + half[:, None] * nodes[None, :]
    cells = (f(xs.ravel()).reshape(xs.shape) * weights[None, :]).sum(axis=1) * half
    return np.concatenate(([0.0], np.cumsum(cells)))


def one_sided_derivative(f: Callable[[float], float], x0: float, h: float,
                         side: str) -> float:
    """Fourth-order one-sided first derivative at x0.

    side='below' samples x0, x0-h, ..., x0-4h; side='above' mirrors it.
    """
    coeffs = (25.0, -48.0, 36.0, -16.0, 3.0)
    if side == "below":
        return sum(c * f(x0 - k * h) for k, c in enumerate(coeffs)) / (12.0 * h)
    if side == "above":
        return -sum(c * f(x0 + k * h) for k, c in enumerate(coeffs)) / (12.0 * h)
    raise ParameterError(f"side must be 'below' or 'above', got {side!r}")
