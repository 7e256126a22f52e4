"""Dense realizations of the per-mode linearized operators L_{omega,+-,a}.

The block operator -J S_omega(a) with S_omega(a) = diag(L_+, L_-) and
J = [[0, -1], [1, 0]] acts as (f, g) -> (L_- g, -L_+ f).  Its real
eigenvalues lambda satisfy lambda**2 f = -L_- L_+ f.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import scipy.linalg as sla

from .grid import Field1D, GridSpec, default_grid
from .soliton import SolitonParams, line_soliton, omega_p

log = logging.getLogger(__name__)

__all__ = [
    "Operator1D",
    "BlockSpectrum",
    "second_derivative_matrix",
    "build_operator",
    "lowest_eigenpairs",
    "growth_rate",
    "threshold_scan",
    "propagate_linearized",
    "block_operator",
    "bottom_eigenvalue",
]

Sign = Literal["plus", "minus"]

# growth rates below this are reported as zero (roundoff of the dense solve)
LAMBDA_FLOOR = 1e-7


def second_derivative_matrix(grid: GridSpec) -> np.ndarray:
    """Circulant Fourier-spectral matrix of -d_xx, exactly symmetric."""
    col = np.real(np.fft.ifft(grid.xi ** 2))
    # enforce c[k] == c[n-k] bitwise
    col = 0.5 * (col + np.roll(col[::-1], 1))
    return sla.circulant(col)


@dataclass(frozen=True)
class Operator1D:
    grid: GridSpec
    matrix: np.ndarray = field(repr=False)
    label: str
    omega: float
    mode_shift: float

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(f)


@dataclass(frozen=True)
class BlockSpectrum:
    omega: float
    p: float
    a: float
    lambda0: float
    eigvec_re: Optional[Field1D]
    eigvec_im: Optional[Field1D]
    residual: float
    nonreal: int = 0
    mu_max: float = float("nan")


def build_operator(p: float, omega: float, a: float, sign: Sign, grid: GridSpec,
                   potential: Optional[np.ndarray] = None) -> Operator1D:
    """-d_xx + omega + a - c * V**(p-1), c = p (plus) or 1 (minus).

    ``V`` defaults to the line soliton R_omega; passing ``potential`` builds
    the same operator around another (y-independent) profile.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    if a < 0:
        raise ValueError("mode shift a must be non-negative")
    if sign not in ("plus", "minus"):
        raise ValueError(f"sign must be 'plus' or 'minus', got {sign!r}")
    if potential is None:
        potential = line_soliton(SolitonParams(p, omega), grid).values
    c = p if sign == "plus" else 1.0
    diag = omega - c * np.abs(np.asarray(potential, dtype=float)) ** (p - 1.0)
    mat = second_derivative_matrix(grid)
    mat[np.diag_indices_from(mat)] += diag
    # the mode shift goes last so that matrix(a) == matrix(0) + a I bitwise
    mat[np.diag_indices_from(mat)] += a
    label = "L_plus" if sign == "plus" else "L_minus"
    return Operator1D(grid, mat, label, float(omega), float(a))


def lowest_eigenpairs(op: Operator1D, k: int) -> list[tuple[float, Field1D]]:
    n = op.grid.nx
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds matrix size {n}")
    vals, vecs = sla.eigh(op.matrix, subset_by_index=[0, k - 1])
    out = []
    for j in range(k):
        v = vecs[:, j]
        # sign convention: largest-magnitude entry positive
        v = v * np.sign(v[np.argmax(np.abs(v))])
        out.append((float(vals[j]), Field1D(op.grid, v).normalized()))
    return out


def bottom_eigenvalue(p: float, omega: float, a: float, sign: Sign, grid: GridSpec) -> float:
    mat = build_operator(p, omega, a, sign, grid).matrix
    return float(sla.eigh(mat, eigvals_only=True, subset_by_index=[0, 0])[0])


def block_operator(p: float, omega: float, a: float, grid: GridSpec) -> np.ndarray:
    """Dense 2nx x 2nx matrix of -J S_omega(a) acting on (Re, Im)."""
    lp = build_operator(p, omega, a, "plus", grid).matrix
    lm = build_operator(p, omega, a, "minus", grid).matrix
    n = grid.nx
    out = np.zeros((2 * n, 2 * n))
    out[:n, n:] = lm
    out[n:, :n] = -lp
    return out


def growth_rate(p: float, omega: float, a: float, grid: GridSpec) -> BlockSpectrum:
    """Largest real growth rate of -J S_omega(a) via the product -L_- L_+."""
    lp = build_operator(p, omega, a, "plus", grid).matrix
    lm = build_operator(p, omega, a, "minus", grid).matrix
    mu, vecs = sla.eig(-lm @ lp)
    scale = np.abs(mu)
    nonreal = np.abs(mu.imag) > 1e-6 * np.maximum(scale, 1e-300)
    if np.any(nonreal):
        log.warning("growth_rate(p=%g, omega=%g, a=%g): %d non-real eigenvalues of -L_-L_+",
                    p, omega, a, int(nonreal.sum()))
    real = ~nonreal
    mu_real = np.where(real, mu.real, -np.inf)
    j = int(np.argmax(mu_real))
    mu_max = float(mu_real[j])
    lam = np.sqrt(mu_max) if mu_max > 0 else 0.0
    if lam <= LAMBDA_FLOOR:
        return BlockSpectrum(omega, p, a, 0.0, None, None, 0.0, int(nonreal.sum()), mu_max)

    f = np.real(vecs[:, j])
    g = -(lp @ f) / lam
    w = np.concatenate([f, g])
    block = np.zeros((2 * grid.nx, 2 * grid.nx))
    block[:grid.nx, grid.nx:] = lm
    block[grid.nx:, :grid.nx] = -lp
    w, lam = _refine(block, w, lam)
    w /= np.linalg.norm(w)
    residual = float(np.linalg.norm(block @ w - lam * w))
    sgn = np.sign(w[np.argmax(np.abs(w[:grid.nx]))])
    w *= sgn
    scale = np.sqrt(grid.dx)
    re = Field1D(grid, w[:grid.nx] / scale)
    im = Field1D(grid, w[grid.nx:] / scale)
    return BlockSpectrum(omega, p, a, float(lam), re, im, residual, int(nonreal.sum()), mu_max)


def _refine(block: np.ndarray, w: np.ndarray, lam: float, steps: int = 2):
    """Shifted inverse iteration with two-sided Rayleigh quotient updates."""
    n = block.shape[0] // 2
    w = w / np.linalg.norm(w)
    for _ in range(steps):
        # left eigenvector of -J S for lam is (g, f) when w = (f, g)
        left = np.concatenate([w[n:], w[:n]])
        denom = left @ w
        if abs(denom) > 1e-14:
            lam = float(left @ (block @ w) / denom)
        shifted = block - lam * np.eye(2 * n)
        try:
            lu = sla.lu_factor(shifted, check_finite=False)
            w_new = sla.lu_solve(lu, w)
        except (sla.LinAlgError, ValueError):
            break
        if not np.all(np.isfinite(w_new)):
            break
        w = w_new / np.linalg.norm(w_new)
    left = np.concatenate([w[n:], w[:n]])
    lam = float(left @ (block @ w) / (left @ w))
    return w, lam


def threshold_scan(p: float, grid: Optional[GridSpec], omega_range: tuple[float, float],
                   tol: float = 1e-5) -> float:
    """Bisect on the sign of the bottom of L_{omega,+,1} (equal to 1 - omega/omega_p).

    With ``grid=None`` every evaluation uses the default grid for its own
    frequency, which keeps wide search ranges resolved.
    """
    lo, hi = map(float, omega_range)
    if not 0 < lo < hi:
        raise ValueError("omega_range must satisfy 0 < lo < hi")
    if not tol > 0:
        raise ValueError("tol must be positive")

    def bottom(w):
        g = default_grid(p, w, ny=2) if grid is None else grid
        return bottom_eigenvalue(p, w, 1.0, "plus", g)

    f_lo = bottom(lo)
    f_hi = bottom(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise ValueError(f"range [{lo}, {hi}] does not bracket a sign change "
                         f"(bottom eigenvalues {f_lo:.3g}, {f_hi:.3g})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = bottom(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def propagate_linearized(v: tuple[Field1D, Field1D], n: int, t: float, p: float,
                         omega: float, grid: GridSpec) -> tuple[Field1D, Field1D]:
    """exp(-t J S_omega(|n|)) applied to the block vector (Re v, Im v)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    re, im = v
    w = np.concatenate([np.asarray(re.values, float), np.asarray(im.values, float)])
    if t == 0:
        out = w
    else:
        out = sla.expm(t * block_operator(p, omega, float(abs(n)), grid)) @ w
    return Field1D(grid, out[:grid.nx]), Field1D(grid, out[grid.nx:])


def expected_negative_eigenvalue(p: float, omega: float) -> float:
    return -omega / omega_p(p)
