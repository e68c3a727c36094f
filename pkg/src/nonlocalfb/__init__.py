"""Numerical laboratory for nonlocal porous-medium flow and particle aggregation."""

__version__ = "0.1.0"

from .grid import FracOrder, GridField, GridSpec  # noqa: E402
from .errors import CFLError, ConvergenceError, FitError  # noqa: E402

__all__ = ["GridSpec", "GridField", "FracOrder", "ConvergenceError", "CFLError", "FitError",
           "__version__"]
