"""Split-step integration of i u_t + u_xx - |D_y| u + |u|^{p-1} u = 0 and
the stability diagnostics built on it.

One Strang step is a half nonlinear phase rotation (exact, since |u| is
invariant under the pointwise flow), the exact linear propagator as a
Fourier multiplier, and another half rotation.  Consecutive half rotations
between output times are merged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import scipy.optimize as so

from .grid import Field1D, Field2D, GridSpec, functionals, lift
from .soliton import SolitonParams, line_soliton, omega_p
from .spectral1d import build_operator, growth_rate, lowest_eigenpairs

log = logging.getLogger(__name__)

__all__ = [
    "InitialData",
    "EvolutionConfig",
    "TrajectoryRecord",
    "split_step",
    "linear_step",
    "orbital_distance",
    "perturbation_mode",
    "initial_field",
    "run_experiment",
    "nonlinear_remainder",
    "fit_growth_rate",
    "EPSILON_EXIT",
]

# exit radius for the instability experiment (reporting convention)
EPSILON_EXIT = 0.05
BLOWUP_AMPLITUDE = 1e3


@dataclass(frozen=True)
class InitialData:
    kind: Literal["soliton", "soliton_plus_chi", "custom"] = "soliton"
    delta: float = 0.0
    field: Optional[Field2D] = None

    def __post_init__(self):
        if self.kind not in ("soliton", "soliton_plus_chi", "custom"):
            raise ValueError(f"unknown initial data kind {self.kind!r}")
        if self.kind == "custom" and self.field is None:
            raise ValueError("custom initial data needs a field")
        if self.kind == "soliton_plus_chi" and not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class EvolutionConfig:
    grid: GridSpec
    omega: float
    dt: float
    t_final: float
    record_every: int = 100
    initial: InitialData = InitialData()
    dealias: bool = False
    nonlinear: bool = True
    stop_on_exit: bool = False

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_final >= self.dt:
            raise ValueError("t_final must be at least dt")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.dt * max_linear_symbol(self.grid) >= np.pi:
            raise ValueError("dt too large: linear phase per step exceeds pi")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    mass_drift: list = field(default_factory=list)
    energy_drift: list = field(default_factory=list)
    orbital_distance: list = field(default_factory=list)
    mode1_amplitude: list = field(default_factory=list)
    fitted_growth_rate: Optional[float] = None
    exit_time: Optional[float] = None
    status: str = "completed"
    final: Optional[Field2D] = None

    def append(self, t, mass, energy, dist, amp):
        self.times.append(float(t))
        self.mass_drift.append(float(mass))
        self.energy_drift.append(float(energy))
        self.orbital_distance.append(float(dist))
        self.mode1_amplitude.append(float(amp))

    def rows(self):
        return zip(self.times, self.mass_drift, self.energy_drift,
                   self.orbital_distance, self.mode1_amplitude)


def max_linear_symbol(grid: GridSpec) -> float:
    return float(np.max(grid.xi ** 2) + np.max(np.abs(grid.modes)))


def _propagator(grid: GridSpec, dt: float) -> np.ndarray:
    sym = (grid.xi ** 2)[:, None] + np.abs(grid.modes)[None, :]
    return np.exp(-1j * dt * sym)


def _dealias_mask(grid: GridSpec) -> np.ndarray:
    kx = np.abs(np.fft.fftfreq(grid.nx) * grid.nx)
    ky = np.abs(grid.modes)
    return ((kx <= grid.nx / 3)[:, None] & (ky <= grid.ny / 3)[None, :]).astype(float)


def _phase(u: np.ndarray, p: float, dt: float) -> np.ndarray:
    return u * np.exp(1j * dt * np.abs(u) ** (p - 1.0))


def linear_step(u: Field2D, dt: float) -> Field2D:
    """Exact propagator exp(-i dt (xi^2 + |n|)) of the linear part."""
    uh = np.fft.fft2(u.values) * _propagator(u.grid, dt)
    return Field2D(u.grid, np.fft.ifft2(uh))


def split_step(u: Field2D, dt: float, grid: Optional[GridSpec] = None,
               nonlinear: bool = True) -> Field2D:
    """One Strang step; ``nonlinear=False`` leaves only the linear multiplier."""
    grid = u.grid if grid is None else grid
    v = np.asarray(u.values, dtype=complex)
    p = grid.p
    if nonlinear:
        v = _phase(v, p, 0.5 * dt)
    v = np.fft.ifft2(np.fft.fft2(v) * _propagator(grid, dt))
    if nonlinear:
        v = _phase(v, p, 0.5 * dt)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite values after split step")
    return Field2D(grid, v)


# --------------------------------------------------------------------------
# orbital distance


def _x_weight(grid: GridSpec) -> np.ndarray:
    return (grid.xi ** 2)[:, None] + np.abs(grid.modes)[None, :] + 1.0


def orbital_distance(psi: Field2D, omega: float) -> tuple[float, float, float]:
    """inf over (theta, z) of ||psi - e^{i theta} R_omega(. - z)||_X.

    Returns (distance, theta, z).  Only the y-average of psi couples to the
    y-independent soliton, so the search is one-dimensional: all grid shifts
    by FFT correlation, then the root of the derivative of the correlation
    modulus between the neighbouring shifts.
    """
    grid = psi.grid
    nx, ny, dx = grid.nx, grid.ny, grid.dx
    xi = grid.xi
    r_hat = np.fft.fft(line_soliton(SolitonParams(grid.p, omega), grid).values)
    psi_hat = np.fft.fft2(psi.values)
    # X-weighted y-average against R, as a function of the shift z:
    # C(z) = sum_k (xi^2+1) psi0_hat conj(R_hat) e^{i xi z}  (times constants)
    kernel = (xi ** 2 + 1.0) * psi_hat[:, 0] * np.conj(r_hat)
    scale = grid.cell_area / (nx * ny) * ny
    coarse = np.fft.ifft(kernel) * nx * scale  # C at z = j dx (FFT order)
    j = int(np.argmax(np.abs(coarse)))
    z0 = (j if j <= nx // 2 else j - nx) * dx
    xi_c = grid.xi_odd

    def corr(z):
        return np.sum(kernel * np.exp(1j * xi_c * z)) * scale

    def slope(z):
        c = np.sum(kernel * np.exp(1j * xi_c * z))
        dc = np.sum(1j * xi_c * kernel * np.exp(1j * xi_c * z))
        return float(np.real(np.conj(c) * dc))

    z = z0
    lo, hi = z0 - dx, z0 + dx
    s_lo, s_hi = slope(lo), slope(hi)
    if s_lo > 0 > s_hi:
        z = so.brentq(slope, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    elif abs(slope(z0)) > 0:
        z = so.minimize_scalar(lambda s: -abs(corr(s)), bounds=(lo, hi), method="bounded",
                               options={"xatol": 1e-12}).x
    c = corr(z)
    theta = float(np.angle(c))
    # direct evaluation avoids cancellation in ||psi||^2 + ||R||^2 - 2|C|
    shifted = np.fft.ifft(r_hat * np.exp(-1j * xi_c * z) * np.exp(1j * theta))
    diff = psi_hat - np.fft.fft2(np.repeat(shifted[:, None], ny, axis=1))
    d2 = float(np.sum(_x_weight(grid) * np.abs(diff) ** 2)) * grid.cell_area / (nx * ny)
    z_wrapped = (z + grid.x_halfwidth) % (2 * grid.x_halfwidth) - grid.x_halfwidth
    return float(np.sqrt(max(d2, 0.0))), float(np.angle(np.exp(1j * theta))), float(z_wrapped)


def shift_field(u: Field2D, z: float, theta: float = 0.0) -> Field2D:
    """e^{i theta} u(x - z, y) by spectral interpolation."""
    mult = np.exp(-1j * u.grid.xi_odd * z)[:, None] * np.exp(1j * theta)
    return Field2D(u.grid, np.fft.ifft2(np.fft.fft2(u.values) * mult))


# --------------------------------------------------------------------------
# perturbations and initial data


def _x_norm(u: np.ndarray, grid: GridSpec) -> float:
    uh = np.fft.fft2(u)
    return float(np.sqrt(np.sum(_x_weight(grid) * np.abs(uh) ** 2)
                         * grid.cell_area / (grid.nx * grid.ny)))


def perturbation_mode(p: float, omega: float, grid: GridSpec) -> tuple[Field2D, float]:
    """X-normalized mode-1 perturbation chi and its linear growth rate.

    Unstable frequencies: the growing eigenvector (f, g) of the a=1 block,
    lifted as (f + i g) cos y, which is an exact eigenfunction of the real
    linearization.  Stable frequencies: the bottom eigenvector of the a=1
    plus-operator, lifted the same way (growth rate 0).
    """
    spec = growth_rate(p, omega, 1.0, grid)
    if spec.lambda0 > 0:
        prof = np.asarray(spec.eigvec_re.values) + 1j * np.asarray(spec.eigvec_im.values)
    else:
        op = build_operator(p, omega, 1.0, "plus", grid)
        prof = np.asarray(lowest_eigenpairs(op, 1)[0][1].values, dtype=complex)
    chi = prof[:, None] * np.cos(grid.y)[None, :]
    chi = chi / _x_norm(chi, grid)
    return Field2D(grid, chi), float(spec.lambda0)


def initial_field(config: EvolutionConfig) -> tuple[Field2D, float]:
    grid = config.grid
    init = config.initial
    if init.kind == "custom":
        if init.field.grid != grid:
            raise ValueError("custom field lives on a different grid")
        return Field2D(grid, np.asarray(init.field.values, dtype=complex)), 0.0
    base = lift(line_soliton(SolitonParams(grid.p, config.omega), grid)).values.astype(complex)
    if init.kind == "soliton":
        return Field2D(grid, base), 0.0
    chi, lam = perturbation_mode(grid.p, config.omega, grid)
    return Field2D(grid, base + init.delta * np.asarray(chi.values)), lam


# --------------------------------------------------------------------------
# experiments


def _mode1_amplitude(u: np.ndarray, grid: GridSpec) -> float:
    uh = np.fft.fft(u, axis=1)
    sel = np.abs(grid.modes) == 1
    return float(np.sqrt(np.sum(np.abs(uh[:, sel]) ** 2) * grid.cell_area / grid.ny))


def fit_growth_rate(times, amplitudes, lower: float, upper: float = 1e-2) -> Optional[float]:
    """Least-squares slope of log(amplitude) over the samples in [lower, upper]."""
    t = np.asarray(times, dtype=float)
    a = np.asarray(amplitudes, dtype=float)
    sel = (a >= lower) & (a <= upper)
    if np.count_nonzero(sel) < 3:
        return None
    slope, _ = np.polyfit(t[sel], np.log(a[sel]), 1)
    return float(slope)


def run_experiment(config: EvolutionConfig) -> TrajectoryRecord:
    """Integrate from the configured initial data, recording diagnostics.

    Stops early on non-finite values (status "nan", last good state kept) or
    when the field amplitude exceeds 1e3 (status "blowup").
    """
    grid = config.grid
    p = grid.p
    dt = config.dt
    u0, _ = initial_field(config)
    ref = functionals(u0, config.omega)
    mass0, energy0 = ref.mass, ref.hamiltonian
    prop = _propagator(grid, dt)
    if config.dealias:
        prop = prop * _dealias_mask(grid)
    rec = TrajectoryRecord()

    def record(t, v):
        f = Field2D(grid, v)
        rep = functionals(f, config.omega)
        dist, _, _ = orbital_distance(f, config.omega)
        rec.append(t, abs(rep.mass - mass0) / abs(mass0),
                   abs(rep.hamiltonian - energy0) / abs(energy0),
                   dist, _mode1_amplitude(v, grid))
        if rec.exit_time is None and dist > EPSILON_EXIT:
            rec.exit_time = float(t)

    u = np.asarray(u0.values, dtype=complex)
    record(0.0, u)
    nsteps = config.steps
    step = 0
    while step < nsteps:
        block = min(config.record_every, nsteps - step)
        v = _phase(u, p, 0.5 * dt) if config.nonlinear else u
        for k in range(block):
            v = np.fft.ifft2(np.fft.fft2(v) * prop)
            if config.nonlinear:
                v = _phase(v, p, dt if k < block - 1 else 0.5 * dt)
        step += block
        if not np.all(np.isfinite(v)):
            log.warning("run_experiment: non-finite field at step %d; keeping last good state", step)
            rec.status = "nan"
            break
        u = v
        record(step * dt, u)
        if np.max(np.abs(u)) > BLOWUP_AMPLITUDE:
            rec.status = "blowup"
            break
        if config.stop_on_exit and rec.exit_time is not None:
            rec.status = "exited"
            break
    rec.final = Field2D(grid, u)
    if config.initial.kind == "soliton_plus_chi":
        rec.fitted_growth_rate = fit_growth_rate(rec.times, rec.mode1_amplitude,
                                                 2.0 * config.initial.delta)
    return rec


def nonlinear_remainder(v: Field2D, omega: float, grid: Optional[GridSpec] = None) -> Field2D:
    """f(R + v) - f(R) - Df(R) v for f(u) = |u|^{p-1} u, as a complex field.

    Real and imaginary parts are the two components of the remainder in the
    (Re, Im) splitting of the linearization about the real soliton R_omega.
    """
    grid = v.grid if grid is None else grid
    p = grid.p
    r = line_soliton(SolitonParams(p, omega), grid).values[:, None]
    w = np.asarray(v.values, dtype=complex)
    total = r + w
    full = np.abs(total) ** (p - 1.0) * total
    base = np.abs(r) ** (p - 1.0) * r
    linear = p * r ** (p - 1.0) * w.real + 1j * r ** (p - 1.0) * w.imag
    return Field2D(grid, full - base - linear)


def stable_frequency(p: float) -> float:
    return 0.5 * omega_p(p)
