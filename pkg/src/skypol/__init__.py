"""Full-sky polarization simulation and swarm-based attitude estimation.

The package renders angle-of-polarization, degree-of-polarization and
luminance maps of a clear sky through a hypothetical fisheye polarization
camera, and recovers the camera's three Euler angles from such images by
social-spider template matching.  A sweep harness runs reproducible
noise/model-error sensitivity studies over the simulator.
"""

from .errors import (
    ConfigError,
    DegenerateConfigError,
    DegenerateImageError,
    DomainError,
    HorizonError,
    NoOverlapError,
    ProjectionError,
    SkypolError,
)
from .geometry import Attitude, SkyDirection
from .harness import ExperimentConfig, TrialResult, run_sweep
from .imager import CameraModel, ImageSet, NoiseSpec, RenderContext, add_noise, render
from .skymodel import AtmosphericFunctions, HosekCoefficients, SkyParams, sample_sky
from .sso import SsoConfig, estimate_attitude

__version__ = "0.1.0"

__all__ = [
    "Attitude",
    "AtmosphericFunctions",
    "CameraModel",
    "ConfigError",
    "DegenerateConfigError",
    "DegenerateImageError",
    "DomainError",
    "ExperimentConfig",
    "HorizonError",
    "HosekCoefficients",
    "ImageSet",
    "NoiseSpec",
    "NoOverlapError",
    "ProjectionError",
    "RenderContext",
    "SkyDirection",
    "SkyParams",
    "SkypolError",
    "SsoConfig",
    "TrialResult",
    "add_noise",
    "estimate_attitude",
    "render",
    "run_sweep",
    "sample_sky",
    "__version__",
]
