"""
Boundary-safe Euler-Maruyama integration of the conditioned SDEs
dX = mu(X, t) dt + dW, single paths and ensembles.

Randomness: path i of an ensemble draws from its own Philox stream
keyed by (base_seed, i); increments are presampled per path, so the
result never depends on the worker count or the chunk layout.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

import artifacts
import processes
from config import config
from errors import HorizonError, ParameterError
from processes import ProcessSpec, Side

logger = logging.getLogger(__name__)


def path_rng(seed: int, index: Optional[int] = None) -> np.random.Generator:
    """Counter-based generator for one path; index selects an ensemble stream."""
    if index is None:
        sequence = np.random.SeedSequence(int(seed))
    else:
        sequence = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class PathSample:
    times: np.ndarray
    positions: np.ndarray
    seed: int
    dt: float

    def __post_init__(self):
        if len(self.times) != len(self.positions):
            raise ParameterError("PathSample needs as many positions as times")
        if self.dt <= 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")

    @property
    def endpoint(self) -> float:
        return float(self.positions[-1])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "x": self.positions})


@dataclass(frozen=True)
class EnsembleStats:
    """Per-time sample mean and variance of an ensemble (ddof = 1)."""
    t_grid: np.ndarray
    mean_hat: np.ndarray
    var_hat: np.ndarray
    stderr: np.ndarray
    n_paths: int
    endpoints: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.t_grid,
            "mean": self.mean_hat,
            "var": self.var_hat,
            "stderr": self.stderr,
            "n": np.full(len(self.t_grid), self.n_paths, dtype=int),
        })


# Single step with the overshoot policy

def _is_inside(spec: ProcessSpec, x: float, t: float) -> bool:
    return bool(processes.distance_to_boundary(spec, x, t) > 0)


def _pull_inside(spec: ProcessSpec, x: float, t: float, t_next: float) -> float:
    """Last resort when redraws and halvings are exhausted."""
    b = processes.boundary(spec)
    gap = max(float(processes.distance_to_boundary(spec, x, t)), 1e-12)
    target = b.position_at(t_next)
    logger.warning(f"{spec.label()}: overshoot policy exhausted at t={t}; placing the path {gap / 2:g} inside")
    return target - gap / 2 if b.side is Side.UPPER else target + gap / 2


def _redraw(spec: ProcessSpec, x: float, t: float, dt: float,
            rng: np.random.Generator, depth: int) -> float:
    mu = processes.drift(spec, x, t)
    sd = math.sqrt(dt)
    for _ in range(config.MAX_REDRAWS):
        proposal = x + mu * dt + sd * rng.standard_normal()
        if _is_inside(spec, proposal, t + dt):
            return proposal
    if depth >= config.MAX_HALVINGS:
        return _pull_inside(spec, x, t, t + dt)
    half = dt / 2.0
    logger.debug(f"{spec.label()}: halving dt to {half:g} at t={t}")
    middle = _substep(spec, x, t, half, rng, depth + 1)
    return _substep(spec, middle, t + half, half, rng, depth + 1)


def _substep(spec: ProcessSpec, x: float, t: float, dt: float,
             rng: np.random.Generator, depth: int) -> float:
    proposal = x + processes.drift(spec, x, t) * dt + math.sqrt(dt) * rng.standard_normal()
    if _is_inside(spec, proposal, t + dt):
        return proposal
    return _redraw(spec, x, t, dt, rng, depth)


def step(spec: ProcessSpec, x: float, t: float, dt: float, dW: float,
         rng: Optional[np.random.Generator] = None) -> float:
    """One Euler-Maruyama step; an exiting proposal redraws its increment.

    After MAX_REDRAWS failed redraws the step is split into two half
    steps (recursively, at most MAX_HALVINGS times).
    """
    if dt <= 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    proposal = x + processes.drift(spec, x, t) * dt + dW
    if _is_inside(spec, proposal, t + dt):
        return float(proposal)
    if rng is None:
        rng = path_rng(config.DEFAULT_SEED)
    return float(_redraw(spec, x, t, dt, rng, 0))


# Paths and ensembles

def time_grid(spec: ProcessSpec, dt: float, t_end: float) -> np.ndarray:
    if dt <= 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if t_end <= 0:
        raise ParameterError(f"t_end must be > 0, got {t_end}")
    if spec.has_horizon and t_end > spec.horizon - dt + 1e-12 * spec.horizon:
        raise HorizonError(f"{spec.family.value}: t_end must be <= T - dt = {spec.horizon - dt}, got {t_end}")
    n_steps = int(math.floor(t_end / dt + 1e-6))
    if n_steps < 1:
        raise ParameterError(f"t_end = {t_end} is shorter than one step dt = {dt}")
    return np.arange(n_steps + 1) * dt


def _starts_on_boundary(spec: ProcessSpec) -> bool:
    return not _is_inside(spec, spec.x0, 0.0)


def _increments(rng: np.random.Generator, n_steps: int, dt: float, substeps: int) -> np.ndarray:
    """Brownian increments over dt, each summed from `substeps` finer draws."""
    if substeps == 1:
        return math.sqrt(dt) * rng.standard_normal(n_steps)
    fine = rng.standard_normal(n_steps * substeps).reshape(n_steps, substeps)
    return math.sqrt(dt / substeps) * fine.sum(axis=1)


def _check_substeps(substeps: int) -> int:
    if int(substeps) != substeps or substeps < 1:
        raise ParameterError(f"substeps must be a positive integer, got {substeps}")
    return int(substeps)


def _run_paths(spec: ProcessSpec, times: np.ndarray, rngs: Sequence[np.random.Generator],
               substeps: int = 1) -> np.ndarray:
    """Integrate len(rngs) paths together; row i uses rngs[i] only."""
    dt = float(times[1] - times[0])
    n_steps = len(times) - 1
    increments = np.stack([_increments(rng, n_steps, dt, substeps) for rng in rngs])
    out = np.empty((len(rngs), n_steps + 1))
    out[:, 0] = spec.x0
    first = 0
    if _starts_on_boundary(spec):
        # leave the origin with the radial law of a 3d Brownian motion
        extra = np.stack([rng.standard_normal(2) for rng in rngs])
        out[:, 1] = np.sqrt(increments[:, 0] ** 2 + dt * (extra ** 2).sum(axis=1))
        first = 1
    for k in range(first, n_steps):
        t = float(times[k])
        x = out[:, k]
        proposal = x + processes.drift(spec, x, t) * dt + increments[:, k]
        outside = ~(np.asarray(processes.distance_to_boundary(spec, proposal, times[k + 1])) > 0)
        for i in np.flatnonzero(outside):
            proposal[i] = _redraw(spec, float(x[i]), t, dt, rngs[i], 0)
        out[:, k + 1] = proposal
    return out


def simulate_path(spec: ProcessSpec, dt: float, t_end: float, seed: int) -> PathSample:
    """Full trajectory on the uniform grid 0, dt, ..., deterministic in seed."""
    times = time_grid(spec, dt, t_end)
    positions = _run_paths(spec, times, [path_rng(seed)])[0]
    return PathSample(times=times, positions=positions, seed=int(seed), dt=float(dt))


def ensemble_path(spec: ProcessSpec, dt: float, t_end: float, base_seed: int, index: int,
                  substeps: int = 1) -> PathSample:
    """Path `index` of the ensemble keyed by base_seed."""
    times = time_grid(spec, dt, t_end)
    positions = _run_paths(spec, times, [path_rng(base_seed, index)], _check_substeps(substeps))[0]
    return PathSample(times=times, positions=positions, seed=int(base_seed), dt=float(dt))


@dataclass
class _ChunkMoments:
    count: int
    mean: np.ndarray
    m2: np.ndarray
    endpoints: np.ndarray

    def merge(self, other: "_ChunkMoments") -> "_ChunkMoments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return _ChunkMoments(n, mean, m2, np.concatenate([self.endpoints, other.endpoints]))


def _chunk_moments(spec: ProcessSpec, times: np.ndarray, base_seed: int,
                   indices: range, substeps: int = 1) -> _ChunkMoments:
    rngs = [path_rng(base_seed, i) for i in indices]
    paths = _run_paths(spec, times, rngs, substeps)
    mean = paths.mean(axis=0)
    m2 = ((paths - mean) ** 2).sum(axis=0)
    return _ChunkMoments(len(rngs), mean, m2, paths[:, -1].copy())


def simulate_ensemble(spec: ProcessSpec, dt: float, t_end: float, n_paths: int,
                      base_seed: int, workers: Optional[int] = None,
                      substeps: int = 1) -> EnsembleStats:
    """Per-time sample moments of n_paths independent paths.

    Paths are grouped in fixed chunks of CHUNK_SIZE; chunk moments are
    merged in chunk order, so any worker count gives identical bits.
    With substeps = k every increment is the sum of k draws on the grid
    dt / k, so an ensemble at dt with substeps = k shares its Brownian
    paths with the ensemble at dt / k (common random numbers).
    """
    if n_paths < 2:
        raise ParameterError(f"n_paths must be >= 2, got {n_paths}")
    substeps = _check_substeps(substeps)
    times = time_grid(spec, dt, t_end)
    workers = config.get_workers(workers)
    size = config.CHUNK_SIZE
    chunks = [range(lo, min(lo + size, n_paths)) for lo in range(0, n_paths, size)]
    logger.info(f"Simulating {n_paths} paths of {spec.label()} to t={times[-1]:g} "
                f"(dt={dt:g}, {len(chunks)} chunks, {workers} workers)")

    if workers == 1:
        parts = [_chunk_moments(spec, times, base_seed, c, substeps) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(
                lambda c: _chunk_moments(spec, times, base_seed, c, substeps), chunks))

    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)
    var_hat = np.maximum(total.m2 / (total.count - 1), 0.0)
    return EnsembleStats(
        t_grid=times,
        mean_hat=total.mean,
        var_hat=var_hat,
        stderr=np.sqrt(var_hat / total.count),
        n_paths=total.count,
        endpoints=total.endpoints,
    )


def write_path_csv(path: PathSample, spec: ProcessSpec, out) -> None:
    artifacts.write_csv(path.to_frame(), out, spec=processes.spec_to_dict(spec),
                        seed=path.seed, dt=path.dt)


def write_ensemble_csv(stats: EnsembleStats, spec: ProcessSpec, out, seed: int, dt: float,
                       closed_mean: Optional[np.ndarray] = None) -> None:
    frame = stats.to_frame()
    if closed_mean is not None:
        frame["closed_mean"] = closed_mean
    artifacts.write_csv(frame, out, spec=processes.spec_to_dict(spec), seed=seed, dt=dt)


def assert_inside(spec: ProcessSpec, path: PathSample) -> List[int]:
    """Indices of stored positions that are not strictly inside (expected empty)."""
    d = np.asarray(processes.distance_to_boundary(spec, path.positions, path.times))
    bad = np.flatnonzero(~(d > 0))
    if _starts_on_boundary(spec):
        bad = bad[bad != 0]
    return bad.tolist()
