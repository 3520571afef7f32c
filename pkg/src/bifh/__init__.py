"""Numerical verification toolkit for bi-f-harmonic curves and hypersurfaces."""

from .errors import BifhError, ConfigError, NumericalError
from .spaceform import SpaceForm

__all__ = ["BifhError", "ConfigError", "NumericalError", "SpaceForm"]
__version__ = "0.1.0"
