"""
Configuration file for the entrance_diffusions toolkit
"""

import os
from typing import Dict, Optional

from dotenv import load_dotenv

from errors import ParameterError

load_dotenv()


class Config:
    """Configuration class for the conditioned-diffusion toolkit"""

    # Artifact identification
    ARTIFACT_VERSION = "1.0.0"
    REPORT_SCHEMA_VERSION = 1

    # Logging Configuration
    LOG_LEVEL = "INFO"
    LOG_FORMAT = "%(asctime)s - %(levelname)s - %(name)s - %(message)s"

    # Parallelism (never changes results)
    WORKERS = 1
    CHUNK_SIZE = 256  # paths per simulation chunk

    # Quadrature
    QUAD_ABS_TOL = 1e-13
    QUAD_REL_TOL = 1e-12
    QUAD_LIMIT = 2000

    # Exact sampler
    SAMPLER_LEVELS = 2 ** 12
    SAMPLER_SPAN_SD = 12.0

    # Overshoot policy of the Euler-Maruyama stepper
    MAX_REDRAWS = 100
    MAX_HALVINGS = 20

    # Near-boundary switch to series forms
    SERIES_SWITCH = 1e-8

    # Path-integral weights are compared on paths that keep this distance
    # from the boundary at every grid point
    Z_PATH_MARGIN = 0.25

    # Simulation bias estimate: partner ensemble at BIAS_COARSENING * dt
    BIAS_COARSENING = 10

    # Default seeds
    DEFAULT_SEED = 42

    # Versioned acceptance tolerances of the verification battery
    DEFAULT_TOLERANCES = {
        "normalization": 1e-8,
        "fp_slope": 0.2,
        "boundary_flux": 1e-6,
        "moments": 1e-6,
        "pinning": 1e-10,
        "asymptotics": 5e-2,
        "limits": 1e-6,
        "rayleigh": 1e-12,
        "expected_fail_match": 1e-8,
        "girsanov_alpha": 0.01,
        "z_slope_lo": 0.35,
        "z_slope_hi": 0.65,
        "z_rms": 5e-2,
        "ks": 0.02,
        "sim_sigmas": 3.0,
    }

    @classmethod
    def get_tolerance(cls, name: str, overrides: Optional[Dict[str, float]] = None) -> float:
        """Get a battery tolerance, honouring command-line overrides"""
        if overrides and name in overrides:
            return float(overrides[name])
        if name not in cls.DEFAULT_TOLERANCES:
            raise ParameterError(f"unknown tolerance {name!r}")
        return cls.DEFAULT_TOLERANCES[name]

    @classmethod
    def get_workers(cls, requested: Optional[int] = None) -> int:
        """Get the worker count for ensemble and battery execution"""
        if requested is not None:
            return max(1, int(requested))
        return max(1, int(cls.WORKERS))


# Environment-specific configurations
class DevelopmentConfig(Config):
    """Development environment configuration"""
    DEBUG = True
    LOG_LEVEL = os.getenv("ENTRANCE_DIFFUSIONS_LOG_LEVEL", "DEBUG")
    WORKERS = int(os.getenv("ENTRANCE_DIFFUSIONS_WORKERS", Config.WORKERS))


class ProductionConfig(Config):
    """Production environment configuration"""
    DEBUG = False
    LOG_LEVEL = os.getenv("ENTRANCE_DIFFUSIONS_LOG_LEVEL", "INFO")

    # Override with environment variables in production
    WORKERS = int(os.getenv("ENTRANCE_DIFFUSIONS_WORKERS", os.cpu_count() or 1))


def _select_config() -> Config:
    env = os.getenv("ENTRANCE_DIFFUSIONS_ENV", "development").lower()
    if env == "production":
        return ProductionConfig()
    return DevelopmentConfig()


# Default configuration
config = _select_config()
