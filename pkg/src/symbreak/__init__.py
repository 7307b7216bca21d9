"""Exact-diagonalization quench dynamics for symmetry-broken system-bath
models, with trace-distance diagnostics, equilibration-time scaling, and
spectral gap-degeneracy analysis."""

__version__ = "0.1.0"

from . import engine, experiments, model, observables, spectra
from ._kernels import active_backend
from .errors import (
    InvalidSpecError,
    InvalidStateError,
    NumericalFailureError,
    ResourceLimitError,
    SymbreakError,
    UndefinedCorrelationError,
)
from .series import TimeSeries

__all__ = [
    "__version__",
    "active_backend",
    "engine",
    "experiments",
    "model",
    "observables",
    "spectra",
    "TimeSeries",
    "SymbreakError",
    "InvalidSpecError",
    "InvalidStateError",
    "NumericalFailureError",
    "ResourceLimitError",
    "UndefinedCorrelationError",
]
