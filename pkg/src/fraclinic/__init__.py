"""Fractional-Laplacian profiles on the line: pinned minimizers, mountain-pass solutions,
layer profiles and a posteriori certificates."""

from .frac_ops import FracParams, frac_laplacian, gagliardo_sq
from .grid_core import Extension, Grid, GridFunction

__all__ = ["Extension", "FracParams", "Grid", "GridFunction", "frac_laplacian", "gagliardo_sq"]
__version__ = "0.1.0"
