"""Numerical toolkit for nonlinear Schroedinger waves in a flat waveguide R x T."""
from .grid import Field1D, Field2D, GridSpec, default_grid, functionals, make_grid
from .soliton import SolitonParams, line_soliton, m_line, omega_p

__version__ = "0.1.0"

__all__ = [
    "Field1D",
    "Field2D",
    "GridSpec",
    "SolitonParams",
    "default_grid",
    "functionals",
    "line_soliton",
    "m_line",
    "make_grid",
    "omega_p",
]
