"""
Girsanov weights along driftless paths, tilde densities and the
positive-image operator.

For CothII and LineAB the weight Z(t) depends only on the endpoint
W(t); the tilde density is Z times the Gaussian kernel. It solves the
Fokker-Planck equation on the whole line, is normalized there, and
carries a nonzero current out of the physical region. Adding its
mirror image about the boundary removes that current.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

import numerics
import processes
from config import config
from errors import DomainError, ParameterError, UnsupportedFamilyError
from processes import BoundaryInfo, Family, ProcessSpec
from simulate import PathSample, path_rng

logger = logging.getLogger(__name__)

CLOSED_FORM_FAMILIES = (Family.COTH_II, Family.LINE_AB)
TILDE_FAMILIES = (Family.TABOO_I, Family.COTH_II, Family.LINE_AB, Family.LINE_AB_STAR)


class WeightMethod(str, Enum):
    CLOSED_FORM = "ClosedForm"
    PATH_INTEGRAL = "PathIntegral"


@dataclass(frozen=True)
class GirsanovWeight:
    """Z(t); a path that left the state space carries zero_weight=True and value 0."""
    value: float
    method: WeightMethod
    zero_weight: bool = False

    def __post_init__(self):
        if not self.zero_weight and not self.value > 0:
            raise ValueError(f"Girsanov weight must be > 0, got {self.value}")


def _require_closed_form(spec: ProcessSpec, what: str):
    if spec.family not in CLOSED_FORM_FAMILIES:
        raise UnsupportedFamilyError(f"{what} is available for coth_ii and line_ab, got {spec.family.value}")


def log_z_closed(spec: ProcessSpec, w, t):
    """log Z at endpoint w (inside the state space)."""
    w = np.asarray(w, dtype=float)
    if spec.family is Family.COTH_II:
        m = abs(spec.mu)
        return (numerics.log_sinh(m * (spec.a - w)) - numerics.log_sinh(m * spec.a)
                - 0.5 * spec.mu ** 2 * t)
    alpha = spec.alpha
    m = abs(alpha)
    d = alpha * t + spec.beta - w
    return (alpha * w - alpha ** 2 * t
            + numerics.log_sinh(m * d) - numerics.log_sinh(m * spec.beta))


def z_closed(spec: ProcessSpec, w_t: float, t: float) -> GirsanovWeight:
    """Closed-form weight Z(t) as a function of the endpoint W(t) = w_t."""
    _require_closed_form(spec, "z_closed")
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if not processes.contains(spec, w_t, t):
        raise DomainError(f"{spec.label()}: w_t = {w_t} is not inside the state space at t = {t}")
    value = math.exp(float(log_z_closed(spec, w_t, t)))
    return GirsanovWeight(value, WeightMethod.CLOSED_FORM)


def endpoint_weights(spec: ProcessSpec, w, t: float) -> np.ndarray:
    """Signed closed-form Z on the whole line (negative beyond the boundary)."""
    _require_closed_form(spec, "endpoint_weights")
    w = np.asarray(w, dtype=float)
    if spec.family is Family.COTH_II:
        mu, a = spec.mu, spec.a
        ratio = np.sinh(mu * (a - w)) / math.sinh(mu * a)
        return ratio * math.exp(-0.5 * mu ** 2 * t)
    alpha, beta = spec.alpha, spec.beta
    ratio = np.sinh(alpha * (alpha * t + beta - w)) / math.sinh(alpha * beta)
    return ratio * np.exp(alpha * w - alpha ** 2 * t)


def z_path_many(spec: ProcessSpec, times: np.ndarray, positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ito left-point weights for a (paths x times) array of driftless paths.

    Returns (values, zero_weight); rows that leave the state space get 0.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    times = np.asarray(times, dtype=float)
    n_paths = positions.shape[0]
    values = np.ones(n_paths)
    if positions.shape[1] < 2:
        return values, np.zeros(n_paths, dtype=bool)

    d = np.asarray(processes.distance_to_boundary(spec, positions, times[None, :]))
    exited = ~np.all(d > 0, axis=1)
    log_z = np.zeros(n_paths)
    keep = np.flatnonzero(~exited)
    if keep.size:
        x = positions[keep]
        dw = np.diff(x, axis=1)
        du = np.diff(times)
        mu = np.column_stack([np.atleast_1d(processes.drift(spec, x[:, k], times[k]))
                              for k in range(len(times) - 1)])
        log_z[keep] = (mu * dw).sum(axis=1) - 0.5 * (mu * mu * du[None, :]).sum(axis=1)
    values = np.where(exited, 0.0, np.exp(log_z))
    return values, exited


def z_path(spec: ProcessSpec, path: PathSample) -> GirsanovWeight:
    """Ito Riemann-sum approximation of Z along one driftless path."""
    values, exited = z_path_many(spec, path.times, path.positions[None, :])
    if exited[0]:
        logger.debug(f"{spec.label()}: path left the state space, weight 0")
        return GirsanovWeight(0.0, WeightMethod.PATH_INTEGRAL, zero_weight=True)
    return GirsanovWeight(float(values[0]), WeightMethod.PATH_INTEGRAL)


def brownian_paths(x0: float, dt: float, t_end: float, n_paths: int,
                   base_seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Driftless paths on 0, dt, ..., path i drawn from the stream (base_seed, i)."""
    n_steps = int(math.floor(t_end / dt + 1e-6))
    times = np.arange(n_steps + 1) * dt
    out = np.empty((n_paths, n_steps + 1))
    out[:, 0] = x0
    sd = math.sqrt(dt)
    for i in range(n_paths):
        out[i, 1:] = x0 + np.cumsum(sd * path_rng(base_seed, i).standard_normal(n_steps))
    return times, out


def z_path_rms(spec: ProcessSpec, t: float, dt_list: Sequence[float], n_paths: int,
               base_seed: int, margin: Optional[float] = None) -> Tuple[List[float], int]:
    """RMS gap between Ito-sum and closed-form weights, one value per dt.

    All step sizes use the same Brownian paths, drawn on the finest grid
    and subsampled. Only paths that keep `margin` away from the boundary
    at every fine grid point enter the comparison, since the drift
    derivative blows up at the boundary. Returns (rms per dt, kept).
    """
    _require_closed_form(spec, "z_path_rms")
    margin = config.Z_PATH_MARGIN if margin is None else float(margin)
    dt_fine = min(dt_list)
    times, paths = brownian_paths(spec.x0, dt_fine, t, n_paths, base_seed)
    n_steps = len(times) - 1
    d = np.asarray(processes.distance_to_boundary(spec, paths, times[None, :]))
    kept = paths[np.all(d >= margin, axis=1)]
    if kept.shape[0] == 0:
        raise ParameterError(f"{spec.label()}: no path keeps distance {margin} from the boundary")
    exact = np.exp(log_z_closed(spec, kept[:, -1], times[-1]))

    rms = []
    for dt in dt_list:
        stride = int(round(dt / dt_fine))
        if abs(stride * dt_fine - dt) > 1e-9 * dt or n_steps % stride:
            raise ParameterError(f"dt = {dt} is not a multiple of {dt_fine} dividing t = {t}")
        values, _ = z_path_many(spec, times[::stride], kept[:, ::stride])
        rms.append(float(np.sqrt(np.mean((values - exact) ** 2))))
    logger.debug(f"{spec.label()}: weight RMS {rms} over {kept.shape[0]}/{n_paths} paths")
    return rms, int(kept.shape[0])


# Tilde densities

def _gauss_mixture(x, m1, m2, c, var):
    """[e^{c} N(x; m1, var) - e^{-c} N(x; m2, var)] / (2 sinh c), c != 0."""
    x = np.asarray(x, dtype=float)
    big = abs(c)
    u = (x - m1) ** 2 / (2.0 * var) - c + big
    v = (x - m2) ** 2 / (2.0 * var) + c + big
    diff = numerics.gauss_pair_diff(u, v)
    return math.copysign(1.0, c) * diff / (-math.expm1(-2.0 * big)) / math.sqrt(2.0 * math.pi * var)


def tilde_density(spec: ProcessSpec, x, t: float):
    """Girsanov-reweighted Gaussian kernel; signed on the whole line.

    TabooI is the mu -> 0 limit of CothII and LineABStar the taboo
    kernel in the frame moving with the line.
    """
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    family = spec.family
    if family is Family.COTH_II:
        mu, a = spec.mu, spec.a
        values = _gauss_mixture(x, -mu * t, mu * t, mu * a, t)
    elif family is Family.LINE_AB:
        alpha, beta = spec.alpha, spec.beta
        values = _gauss_mixture(x, 0.0, 2.0 * alpha * t, alpha * beta, t)
    elif family is Family.TABOO_I:
        values = _taboo_tilde(np.asarray(x, dtype=float), spec.a, t)
    elif family is Family.LINE_AB_STAR:
        values = _taboo_tilde(np.asarray(x, dtype=float) - spec.alpha * t, spec.beta, t)
    else:
        raise UnsupportedFamilyError(f"no tilde density for {family.value}")
    values = np.asarray(values, dtype=float)
    return values if values.ndim else float(values)


def _taboo_tilde(x: np.ndarray, a: float, t: float):
    return (a - x) / a * np.exp(numerics.log_norm_pdf(x, 0.0, t))


@dataclass(frozen=True)
class TildeDensity:
    spec: ProcessSpec

    def __post_init__(self):
        if self.spec.family not in TILDE_FAMILIES:
            raise UnsupportedFamilyError(f"no tilde density for {self.spec.family.value}")

    @property
    def boundary(self) -> BoundaryInfo:
        return processes.boundary(self.spec)

    def eval(self, x, t: float):
        return tilde_density(self.spec, x, t)


def image_density(tilde: TildeDensity, boundary: BoundaryInfo, x, t: float):
    """tilde(x) + tilde(2 b(t) - x): the positive image about the boundary.

    Zero outside the state space, like the closed-form densities.
    """
    x = np.asarray(x, dtype=float)
    b = boundary.position_at(t)
    inside = x < b if boundary.side is processes.Side.UPPER else x > b
    mirrored = 2.0 * b - x
    values = np.asarray(tilde.eval(x, t), dtype=float) + np.asarray(tilde.eval(mirrored, t), dtype=float)
    values = np.where(inside, values, 0.0)
    return values if values.ndim else float(values)


# Closed-form oracles for the tilde defects

def tilde_physical_mass(spec: ProcessSpec, t: float) -> float:
    """Integral of the tilde density over the physical state space."""
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    s = math.sqrt(t)
    family = spec.family
    if family is Family.COTH_II:
        mu, a = spec.mu, spec.a
        plus = math.exp(mu * a) * special.ndtr((a + mu * t) / s)
        minus = math.exp(-mu * a) * special.ndtr((a - mu * t) / s)
        return float((plus - minus) / (2.0 * math.sinh(mu * a)))
    if family is Family.LINE_AB:
        alpha, beta = spec.alpha, spec.beta
        b = beta + alpha * t
        plus = math.exp(alpha * beta) * special.ndtr(b / s)
        minus = math.exp(-alpha * beta) * special.ndtr((b - 2.0 * alpha * t) / s)
        return float((plus - minus) / (2.0 * math.sinh(alpha * beta)))
    if family in (Family.TABOO_I, Family.LINE_AB_STAR):
        a = spec.a if family is Family.TABOO_I else spec.beta
        return float((a * special.ndtr(a / s) + t * math.exp(numerics.log_norm_pdf(a, 0.0, t))) / a)
    raise UnsupportedFamilyError(f"no tilde density for {family.value}")


def tilde_normalization_defect(spec: ProcessSpec, t: float) -> float:
    """Physical mass of the tilde density minus 1 (strictly positive)."""
    return tilde_physical_mass(spec, t) - 1.0


def tilde_boundary_current(spec: ProcessSpec, t: float) -> float:
    """Outgoing current -1/2 d/dx tilde at the boundary (strictly positive)."""
    if t <= 0:
        raise DomainError(f"t must be > 0, got {t}")
    family = spec.family
    if family is Family.COTH_II:
        mu, a = spec.mu, spec.a
        g = math.exp(-(a * a + mu * mu * t * t) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
        return mu * g / (2.0 * math.sinh(mu * a))
    if family is Family.LINE_AB:
        alpha, beta = spec.alpha, spec.beta
        b = beta + alpha * t
        g = math.exp(alpha * beta + numerics.log_norm_pdf(b, 0.0, t))
        return alpha * g / (2.0 * math.sinh(alpha * beta))
    if family in (Family.TABOO_I, Family.LINE_AB_STAR):
        a = spec.a if family is Family.TABOO_I else spec.beta
        return math.exp(numerics.log_norm_pdf(a, 0.0, t)) / (2.0 * a)
    raise UnsupportedFamilyError(f"no tilde density for {family.value}")
