"""Numerical study of localized null control and insensitizing controls for a
coupled Korteweg-de Vries cascade on a bounded interval."""

__version__ = "0.1.0"

from .cascade import CascadeSolver, Geometry  # noqa: E402
from .config import ExperimentConfig, load_config  # noqa: E402
from .discretization import make_grid, make_time_grid  # noqa: E402
from .errors import ConfigurationError, ConvergenceError, HskdvError, NumericError  # noqa: E402

__all__ = [
    "CascadeSolver", "Geometry", "ExperimentConfig", "load_config", "make_grid", "make_time_grid",
    "ConfigurationError", "ConvergenceError", "HskdvError", "NumericError", "__version__",
]
