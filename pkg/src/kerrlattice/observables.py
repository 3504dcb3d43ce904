"""Observables of a single-site density matrix."""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import eval_hermite, gammaln

from . import fock
from .lindblad import DimensionMismatch

__all__ = [
    "WignerMap",
    "expectation",
    "occupation",
    "purity",
    "parity_expectation",
    "default_window",
    "wigner",
    "quadrature_distribution",
]

PURITY_CLIP = 1e-10


@dataclass
class WignerMap:
    re_grid: np.ndarray
    im_grid: np.ndarray
    values: np.ndarray  # values[i, j] = W(re_grid[j] + 1j * im_grid[i])
    normalization_defect: float
    imag_residue: float = 0.0

    def argmax(self, refine=False):
        """Grid point of the global maximum; ``refine=True`` adds a
        parabolic sub-grid correction along each axis."""
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        x, y = self.re_grid[j], self.im_grid[i]
        if refine:
            x = _parabolic_peak(self.re_grid, self.values[i, :], j)
            y = _parabolic_peak(self.im_grid, self.values[:, j], i)
        return complex(x, y)


def _parabolic_peak(grid, vals, i):
    if i == 0 or i == len(grid) - 1:
        return grid[i]
    fm, f0, fp = vals[i - 1], vals[i], vals[i + 1]
    curv = fm - 2 * f0 + fp
    if curv >= 0:
        return grid[i]
    # uniform spacing assumed locally
    return grid[i] + 0.5 * (fm - fp) / curv * (grid[i + 1] - grid[i])


def _check_pair(op, rho):
    op, rho = np.asarray(op), np.asarray(rho)
    if op.shape != rho.shape or op.ndim != 2:
        raise DimensionMismatch(f"operator {op.shape} and state {rho.shape} do not match")
    return op, rho


def expectation(op, rho):
    """``Tr[op rho]``."""
    op, rho = _check_pair(op, rho)
    # Tr[A B] = sum_ij A_ij B_ji without forming the product
    return complex(np.sum(op * rho.T))


def occupation(rho):
    """``<a^dag a>``."""
    rho = np.asarray(rho)
    return float(np.sum(np.arange(rho.shape[0]) * np.diag(rho).real))


def purity(rho):
    """``Tr[rho^2]``, clipped into ``(0, 1]`` only when within 1e-10 outside."""
    rho = np.asarray(rho)
    p = float(np.real(np.sum(rho * rho.T)))
    if 1.0 < p <= 1.0 + PURITY_CLIP:
        p = 1.0
    return p


def parity_expectation(rho):
    rho = np.asarray(rho)
    return float(np.sum((-1.0) ** np.arange(rho.shape[0]) * np.diag(rho).real))


def default_window(rho):
    return max(3.0, 2.0 * np.sqrt(max(occupation(rho), 0.0)))


def wigner(rho, grid=None, n_points=101, disp_tol=1e-10):
    """Wigner function ``W(z) = (2/pi) Tr[D(-z) rho D(z) P]`` on a Cartesian grid.

    ``grid`` is ``(re_points, im_points)``; by default a square window of
    half-width ``max(3, 2 sqrt(n))`` with ``n_points`` per axis.

    The displacement is built in a larger space, grown until its block on
    the levels of ``rho`` is converged to ``disp_tol`` at the farthest grid
    point (zero-padding ``rho`` leaves the state itself unchanged).
    """
    rho = np.asarray(rho, dtype=complex)
    if grid is None:
        half = default_window(rho)
        xs = np.linspace(-half, half, n_points)
        grid = (xs, xs)
    re_pts = np.asarray(grid[0], dtype=float)
    im_pts = np.asarray(grid[1], dtype=float)
    z_max = np.hypot(np.abs(re_pts).max(), np.abs(im_pts).max())
    n = fock.resolving_levels(z_max, rho.shape[0], tol=disp_tol)
    k = rho.shape[0]
    par = (-1.0) ** np.arange(n)
    vals = np.empty((im_pts.size, re_pts.size), dtype=complex)
    for i, y in enumerate(im_pts):
        for j, x in enumerate(re_pts):
            # only the first k rows of D meet the (zero-padded) state
            d = fock.displacement(complex(x, y), n, rows=k)
            diag = np.sum(d.conj() * (rho @ d), axis=0)  # diag of D^dag rho D
            vals[i, j] = par @ diag
    vals *= 2.0 / np.pi
    residue = float(np.abs(vals.imag).max())
    w = vals.real
    defect = np.nan
    if re_pts.size > 1 and im_pts.size > 1:
        defect = abs(trapezoid(trapezoid(w, re_pts, axis=1), im_pts) - 1.0)
    return WignerMap(re_pts, im_pts, w, float(defect), residue)


def _oscillator_functions(x, n):
    # psi_m(x) for the quadrature x = (a + a^dag)/2, |psi_m|^2 integrates to 1 in x
    x = np.asarray(x, dtype=float)
    m = np.arange(n)[:, None]
    log_norm = 0.25 * np.log(2.0 / np.pi) - 0.5 * (m * np.log(2.0) + gammaln(m + 1))
    return np.exp(log_norm - x[None, :] ** 2) * eval_hermite(m, np.sqrt(2.0) * x[None, :])


def quadrature_distribution(rho, x):
    """Probability density of ``x = (a + a^dag)/2`` (so ``W`` integrates over Im z to it)."""
    rho = np.asarray(rho)
    psi = _oscillator_functions(x, rho.shape[0])
    return np.real(np.einsum("mx,mn,nx->x", psi, rho, psi))
