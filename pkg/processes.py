"""
Catalog of the six conditioned process families.

A ProcessSpec is the single source of truth for drift, boundary and
state space. Every evaluation accepts scalars or numpy arrays.
"""

import json
import logging
import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np

import numerics
from config import config
from errors import (DomainError, HorizonError, ParameterError, SpecFormatError,
                    UnsupportedFamilyError)

logger = logging.getLogger(__name__)


class Family(str, Enum):
    TABOO_I = "taboo_i"
    COTH_II = "coth_ii"
    LINE_AB = "line_ab"
    LINE_AB_STAR = "line_ab_star"
    EXCURSION_E = "excursion_e"
    MEANDER_M = "meander_m"


class Side(str, Enum):
    UPPER = "UpperBarrier"
    LOWER = "LowerBarrier"


# Parameters each family accepts (x0 is accepted everywhere, fixed to 0 for I-IV)
FAMILY_PARAMETERS = {
    Family.TABOO_I: ("a",),
    Family.COTH_II: ("a", "mu"),
    Family.LINE_AB: ("alpha", "beta"),
    Family.LINE_AB_STAR: ("alpha", "beta"),
    Family.EXCURSION_E: ("horizon", "x_end"),
    Family.MEANDER_M: ("horizon", "mu"),
}

UPPER_FAMILIES = (Family.TABOO_I, Family.COTH_II, Family.LINE_AB, Family.LINE_AB_STAR)
FINITE_HORIZON_FAMILIES = (Family.EXCURSION_E, Family.MEANDER_M)


@dataclass(frozen=True)
class ProcessSpec:
    """One conditioned diffusion: family tag plus its parameters.

    `horizon` is T and `x_end` the pinned endpoint X of the excursion.
    """
    family: Family
    a: Optional[float] = None
    mu: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    x0: float = 0.0
    x_end: Optional[float] = None
    horizon: Optional[float] = None

    @classmethod
    def taboo(cls, a: float) -> "ProcessSpec":
        return validate(cls(Family.TABOO_I, a=a))

    @classmethod
    def coth(cls, a: float, mu: float) -> "ProcessSpec":
        return validate(cls(Family.COTH_II, a=a, mu=mu))

    @classmethod
    def line(cls, alpha: float, beta: float) -> "ProcessSpec":
        return validate(cls(Family.LINE_AB, alpha=alpha, beta=beta))

    @classmethod
    def line_star(cls, alpha: float, beta: float) -> "ProcessSpec":
        return validate(cls(Family.LINE_AB_STAR, alpha=alpha, beta=beta))

    @classmethod
    def excursion(cls, T: float, X: float = 0.0, x0: float = 0.0) -> "ProcessSpec":
        return validate(cls(Family.EXCURSION_E, horizon=T, x_end=X, x0=x0))

    @classmethod
    def meander(cls, T: float, mu: float = 0.0, x0: float = 0.0) -> "ProcessSpec":
        return validate(cls(Family.MEANDER_M, horizon=T, mu=mu, x0=x0))

    @property
    def has_horizon(self) -> bool:
        return self.family in FINITE_HORIZON_FAMILIES

    def with_params(self, **changes) -> "ProcessSpec":
        return validate(replace(self, **changes))

    def label(self) -> str:
        params = ", ".join(f"{k}={v:g}" for k, v in self.parameters().items())
        return f"{self.family.value}({params})"

    def parameters(self) -> Dict[str, float]:
        """Parameters that are set, in declaration order (family excluded)."""
        out = {}
        for f in fields(self):
            if f.name == "family":
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            if f.name == "x0" and self.family not in FINITE_HORIZON_FAMILIES:
                continue
            out[f.name] = value
        return out


@dataclass(frozen=True)
class BoundaryInfo:
    """Entrance boundary located at level + slope*t."""
    side: Side
    level: float
    slope: float = 0.0

    def position_at(self, t):
        return self.level + self.slope * np.asarray(t, dtype=float) if np.ndim(t) else \
            self.level + self.slope * float(t)


def _finite(name: str, value) -> float:
    if value is None:
        raise ParameterError(f"parameter '{name}' is required")
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"parameter '{name}' must be a real number, got {value!r}")
    if not math.isfinite(value):
        raise ParameterError(f"parameter '{name}' must be finite, got {value}")
    return value


def validate(spec: ProcessSpec) -> ProcessSpec:
    """Return spec unchanged when every invariant of its family holds."""
    try:
        family = Family(spec.family)
    except ValueError:
        raise ParameterError(f"unknown family {spec.family!r}")

    allowed = set(FAMILY_PARAMETERS[family]) | {"x0"}
    for f in fields(spec):
        if f.name in ("family", "x0") or getattr(spec, f.name) is None:
            continue
        if f.name not in allowed:
            raise ParameterError(f"{family.value}: parameter '{f.name}' does not apply to this family")
    for name in FAMILY_PARAMETERS[family]:
        _finite(name, getattr(spec, name))
    x0 = _finite("x0", spec.x0)

    if family in (Family.TABOO_I, Family.COTH_II):
        if spec.a <= 0:
            raise ParameterError(f"{family.value}: a must be > 0, got {spec.a}")
    if family is Family.COTH_II and spec.mu == 0:
        raise ParameterError("coth_ii: mu must be != 0 (mu = 0 is the taboo process)")
    if family in (Family.LINE_AB, Family.LINE_AB_STAR) and spec.beta <= 0:
        raise ParameterError(f"{family.value}: beta must be > 0, got {spec.beta}")
    if family is Family.LINE_AB and spec.alpha == 0:
        raise ParameterError("line_ab: alpha must be != 0")
    if family is Family.LINE_AB_STAR and spec.alpha >= 0:
        raise ParameterError(f"line_ab_star: alpha must be < 0, got {spec.alpha}")
    if family in UPPER_FAMILIES and x0 != 0.0:
        raise ParameterError(f"{family.value}: the process starts at x0 = 0, got {x0}")
    if family in FINITE_HORIZON_FAMILIES:
        if spec.horizon <= 0:
            raise ParameterError(f"{family.value}: T must be > 0, got {spec.horizon}")
        if x0 < 0:
            raise ParameterError(f"{family.value}: x0 must be >= 0, got {x0}")
    if family is Family.EXCURSION_E and spec.x_end < 0:
        raise ParameterError(f"excursion_e: X must be >= 0, got {spec.x_end}")
    return spec


# JSON round trip

JSON_KEYS = ("family", "a", "mu", "alpha", "beta", "x0", "x_end", "horizon")

# Lowercase forms of the horizon T and the endpoint X
JSON_ALIASES = {"t": "horizon", "x": "x_end"}


def spec_to_dict(spec: ProcessSpec) -> Dict[str, Any]:
    out: Dict[str, Any] = {"family": spec.family.value}
    out.update(spec.parameters())
    return out


def spec_to_json(spec: ProcessSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def _resolve_aliases(data: Dict[str, Any]) -> Dict[str, Any]:
    out = dict(data)
    for alias, key in JSON_ALIASES.items():
        if alias in out:
            if key in out:
                raise SpecFormatError(f"spec gives both {alias!r} and {key!r}")
            out[key] = out.pop(alias)
    return out


def spec_from_json(source: Union[str, Dict[str, Any]]) -> ProcessSpec:
    """Parse and validate a ProcessSpec from a JSON string or decoded object."""
    if isinstance(source, str):
        try:
            data = json.loads(source)
        except json.JSONDecodeError as e:
            raise SpecFormatError(f"invalid spec JSON: {e}")
    else:
        data = source
    if not isinstance(data, dict):
        raise SpecFormatError("spec JSON must be an object")
    data = _resolve_aliases(data)
    unknown = sorted(set(data) - set(JSON_KEYS))
    if unknown:
        raise SpecFormatError(f"unknown spec keys: {unknown}")
    if "family" not in data:
        raise SpecFormatError("spec JSON needs a 'family' key")
    try:
        family = Family(data["family"])
    except ValueError:
        raise SpecFormatError(f"unknown family {data['family']!r}")
    kwargs = {k: v for k, v in data.items() if k != "family"}
    if family is Family.EXCURSION_E:
        kwargs.setdefault("x_end", 0.0)
    if family is Family.MEANDER_M:
        kwargs.setdefault("mu", 0.0)
    return validate(ProcessSpec(family, **kwargs))


# Geometry

def boundary(spec: ProcessSpec) -> BoundaryInfo:
    if spec.family in (Family.TABOO_I, Family.COTH_II):
        return BoundaryInfo(Side.UPPER, float(spec.a))
    if spec.family in (Family.LINE_AB, Family.LINE_AB_STAR):
        return BoundaryInfo(Side.UPPER, float(spec.beta), float(spec.alpha))
    return BoundaryInfo(Side.LOWER, 0.0)


def state_space(spec: ProcessSpec, t: float) -> numerics.Interval:
    b = boundary(spec)
    position = b.position_at(t)
    if b.side is Side.UPPER:
        return numerics.Interval(-math.inf, position)
    return numerics.Interval(position, math.inf)


def distance_to_boundary(spec: ProcessSpec, x, t):
    """Signed distance to the entrance boundary, positive inside."""
    b = boundary(spec)
    x = np.asarray(x, dtype=float)
    position = b.level + b.slope * np.asarray(t, dtype=float)
    d = position - x if b.side is Side.UPPER else x - position
    return d if d.ndim else float(d)


def contains(spec: ProcessSpec, x, t):
    d = np.asarray(distance_to_boundary(spec, x, t))
    inside = d > 0
    return bool(inside) if inside.ndim == 0 else inside


def _check_horizon(spec: ProcessSpec, t, allow_end: bool = False):
    if not spec.has_horizon:
        return
    t_arr = np.asarray(t, dtype=float)
    bad = t_arr > spec.horizon if allow_end else t_arr >= spec.horizon
    if np.any(bad):
        raise HorizonError(f"{spec.family.value}: t must be < T = {spec.horizon}, got {t}")


def _require_inside(spec: ProcessSpec, x, t):
    d = np.asarray(distance_to_boundary(spec, x, t))
    if np.any(~(d > 0)):
        raise DomainError(f"{spec.label()}: x = {x} is not strictly inside the state space at t = {t}")
    return d


# Meander survival kernel

def meander_survival_parts(mu: float, x, tau):
    """Return (B, dB/dx, log_scale) with the survival factor 2*pi_m = B*exp(log_scale).

    B(x) = 1 + erf(w) - e^{-2 mu x} erfc(z), w = (x + mu tau)/sqrt(2 tau),
    z = (x - mu tau)/sqrt(2 tau). For w < 0 everything is scaled by e^{w^2}.
    At tau = 0 the factor is 2 for every x > 0.
    """
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    x, tau = np.broadcast_arrays(x, tau)
    safe_tau = np.where(tau > 0, tau, 1.0)
    s = np.sqrt(2.0 * safe_tau)
    w = (x + mu * safe_tau) / s
    z = (x - mu * safe_tau) / s
    gauss_coeff = 2.0 * np.sqrt(2.0 / (math.pi * safe_tau))
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        ez = np.where(z >= 0, np.exp(-w * w) * numerics.erfcx(z),
                      np.exp(-2.0 * mu * x) * numerics.erfc(z))
        plain_b = numerics.erfc(-w) - ez
        plain_db = gauss_coeff * np.exp(-w * w) + 2.0 * mu * ez
        scaled_b = numerics.erfcx(-w) - numerics.erfcx(z)
        scaled_db = gauss_coeff + 2.0 * mu * numerics.erfcx(z)
    negative = w < 0
    b = np.where(negative, scaled_b, plain_b)
    db = np.where(negative, scaled_db, plain_db)
    log_scale = np.where(negative, -w * w, 0.0)
    ended = tau <= 0
    b = np.where(ended, 2.0, b)
    db = np.where(ended, 0.0, db)
    log_scale = np.where(ended, 0.0, log_scale)
    return b, db, log_scale


# Drifts

def drift(spec: ProcessSpec, x, t):
    """Drift mu(x, t) of the conditioned SDE dX = mu dt + dW."""
    _check_horizon(spec, t)
    d = _require_inside(spec, x, t)
    x_arr = np.asarray(x, dtype=float)
    family = spec.family

    if family is Family.TABOO_I:
        values = -1.0 / d
    elif family is Family.COTH_II:
        m = abs(spec.mu)
        values = -m * numerics.coth(m * d)
    elif family is Family.LINE_AB:
        m = abs(spec.alpha)
        values = spec.alpha - m * numerics.coth(m * d)
    elif family is Family.LINE_AB_STAR:
        values = spec.alpha - 1.0 / d
    elif family is Family.EXCURSION_E:
        tau = spec.horizon - np.asarray(t, dtype=float)
        values = numerics.xcothx(spec.x_end * x_arr / tau) / x_arr - x_arr / tau
    else:
        values = _meander_drift(spec, x_arr, t)
    values = np.asarray(values, dtype=float)
    return values if values.ndim else float(values)


def _meander_drift(spec: ProcessSpec, x: np.ndarray, t):
    mu = float(spec.mu)
    tau = spec.horizon - np.asarray(t, dtype=float)
    b, db, _ = meander_survival_parts(mu, x, tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        regular = mu + db / b
    near = x < config.SERIES_SWITCH * np.sqrt(tau)
    return np.where(near, mu + 1.0 / x, regular)


def excursion_drift_with_prior_drift(spec: ProcessSpec, x, t, mu: float):
    """Excursion drift obtained by conditioning a BM with constant drift mu.

    mu + d/dx log pi(x, t, X, T, mu); the result does not depend on mu.
    """
    if spec.family is not Family.EXCURSION_E:
        raise UnsupportedFamilyError(f"excursion_drift_with_prior_drift needs excursion_e, got {spec.family.value}")
    _check_horizon(spec, t)
    _require_inside(spec, x, t)
    x = np.asarray(x, dtype=float)
    X = float(spec.x_end)
    tau = spec.horizon - np.asarray(t, dtype=float)
    direct = X - x - mu * tau
    image = X + x - mu * tau
    # log of the ratio image/direct Gaussian terms
    log_r = -2.0 * mu * x - (image ** 2 - direct ** 2) / (2.0 * tau)
    r = np.exp(log_r)
    one_minus_r = -np.expm1(log_r)
    values = mu + (direct / tau + r * (2.0 * mu + image / tau)) / one_minus_r
    return values if values.ndim else float(values)


# Doob survival probabilities

def survival_pi(spec: ProcessSpec, x, t):
    """Survival probability pi(x, t) whose log-gradient generates the drift.

    For the excursion this is the killed Brownian transition density to X,
    as in the image-method construction, and can exceed 1.
    """
    family = spec.family
    x_arr = np.asarray(x, dtype=float)
    if family is Family.LINE_AB:
        if spec.alpha <= 0:
            raise ParameterError("line_ab: pi is identically 0 for alpha < 0 (the line is hit almost surely)")
        d = np.asarray(distance_to_boundary(spec, x_arr, t))
        if np.any(d < 0):
            raise DomainError(f"{spec.label()}: x = {x} lies above the line at t = {t}")
        values = -np.expm1(-2.0 * spec.alpha * d)
    elif family is Family.EXCURSION_E:
        _check_horizon(spec, t)
        if np.any(x_arr < 0):
            raise DomainError(f"{spec.label()}: x = {x} is negative")
        tau = spec.horizon - np.asarray(t, dtype=float)
        X = float(spec.x_end)
        values = numerics.gauss_pair_diff((X - x_arr) ** 2 / (2.0 * tau),
                                          (X + x_arr) ** 2 / (2.0 * tau)) / np.sqrt(2.0 * math.pi * tau)
    elif family is Family.MEANDER_M:
        _check_horizon(spec, t)
        if np.any(x_arr < 0):
            raise DomainError(f"{spec.label()}: x = {x} is negative")
        tau = spec.horizon - np.asarray(t, dtype=float)
        b, _, log_scale = meander_survival_parts(float(spec.mu), x_arr, tau)
        values = 0.5 * b * np.exp(log_scale)
    else:
        raise UnsupportedFamilyError(f"survival_pi is degenerate for {family.value}")
    values = np.asarray(values, dtype=float)
    return values if values.ndim else float(values)


def base_drift(spec: ProcessSpec) -> float:
    """Drift of the unconditioned Brownian motion behind the Doob transform."""
    if spec.family is Family.MEANDER_M:
        return float(spec.mu)
    if spec.family in (Family.LINE_AB, Family.EXCURSION_E):
        return 0.0
    raise UnsupportedFamilyError(f"no Doob construction for {spec.family.value}")


def doob_drift_check(spec: ProcessSpec, x: float, t: float, h: float) -> float:
    """mu + d/dx log pi by central differences; matches drift() to O(h^2)."""
    if h <= 0:
        raise ParameterError(f"h must be > 0, got {h}")
    _require_inside(spec, x - h, t)
    _require_inside(spec, x + h, t)
    up = math.log(survival_pi(spec, x + h, t))
    down = math.log(survival_pi(spec, x - h, t))
    return base_drift(spec) + (up - down) / (2.0 * h)
