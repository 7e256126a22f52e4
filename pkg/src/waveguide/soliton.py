"""Closed-form line soliton R_omega and the quantities derived from it."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Field1D, GridSpec, default_grid

__all__ = [
    "SolitonParams",
    "line_soliton",
    "soliton_x_derivative",
    "soliton_power_eigenfunction",
    "omega_p",
    "m_line",
    "m_line_scaling",
    "action_exponent",
    "sech_power",
]


@dataclass(frozen=True)
class SolitonParams:
    p: float
    omega: float

    def __post_init__(self):
        if not (1.0 < self.p < 5.0):
            raise ValueError(f"p must lie in (1, 5), got {self.p}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def amplitude(self) -> float:
        return ((self.p + 1.0) * self.omega / 2.0) ** (1.0 / (self.p - 1.0))

    @property
    def rate(self) -> float:
        return 0.5 * (self.p - 1.0) * np.sqrt(self.omega)


def sech_power(z: np.ndarray, alpha: float) -> np.ndarray:
    """sech(z)**alpha without overflow; underflows to 0 for large |z|."""
    a = np.abs(np.asarray(z, dtype=float))
    return np.exp(alpha * (np.log(2.0) - a - np.log1p(np.exp(-2.0 * a))))


def _check(params: SolitonParams, grid: GridSpec) -> None:
    if grid.p != params.p:
        raise ValueError(f"grid exponent {grid.p} differs from soliton exponent {params.p}")


def _profile(params: SolitonParams, x: np.ndarray) -> np.ndarray:
    return params.amplitude * sech_power(params.rate * x, 2.0 / (params.p - 1.0))


def line_soliton(params: SolitonParams, grid: GridSpec) -> Field1D:
    _check(params, grid)
    return Field1D(grid, _profile(params, grid.x))


def soliton_x_derivative(params: SolitonParams, grid: GridSpec) -> Field1D:
    _check(params, grid)
    k = params.rate
    alpha = 2.0 / (params.p - 1.0)
    x = grid.x
    return Field1D(grid, -alpha * k * np.tanh(k * x) * _profile(params, x))


def soliton_power_eigenfunction(params: SolitonParams, grid: GridSpec,
                                normalized: bool = False) -> Field1D:
    """R_omega**((p+1)/2), the negative-direction eigenfunction of L_{omega,+,0}."""
    _check(params, grid)
    f = Field1D(grid, _profile(params, grid.x) ** ((params.p + 1.0) / 2.0))
    return f.normalized() if normalized else f


def omega_p(p: float) -> float:
    """Critical frequency 4/((p-1)(p+3)); diverges as p -> 1+."""
    if not (1.0 < p < 5.0):
        raise ValueError(f"p must lie in (1, 5), got {p}")
    return 4.0 / ((p - 1.0) * (p + 3.0))


def action_exponent(p: float) -> float:
    return (p + 1.0) / (p - 1.0) - 0.5


def _m_line_quadrature(p: float, omega: float) -> float:
    grid = default_grid(p, omega, ny=2)
    r = line_soliton(SolitonParams(p, omega), grid).values
    return (p - 1.0) / (2.0 * (p + 1.0)) * float(np.sum(r ** (p + 1.0)) * grid.dx)


def m_line_scaling(p: float, omega: float) -> float:
    return omega ** action_exponent(p) * _m_line_quadrature(p, 1.0)


def m_line(p: float, omega: float) -> float:
    """Line minimization value m_{omega,R} = S_{omega,R}(R_omega), by quadrature."""
    SolitonParams(p, omega)
    value = _m_line_quadrature(p, omega)
    law = m_line_scaling(p, omega)
    if not np.isclose(value, law, rtol=1e-10, atol=0.0):
        raise ArithmeticError(f"m_line quadrature {value!r} disagrees with scaling law {law!r}")
    return value
