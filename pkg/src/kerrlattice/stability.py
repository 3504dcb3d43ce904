"""Linear stability of the symmetric mean-field steady state.

Perturbing the factorized state as ``rho_s + delta_rho_k exp(i(kj - w t))``
gives ``-i w delta_rho = M_k delta_rho`` with

    M_k = L - i t_k (|[a^dag, rho_s]>> <<a^dag| + |[a, rho_s]>> <<a|),

``t_k = -J cos k`` (1D chain, coordination 2).  Eigenvalues ``lam`` of
``M_k`` map to ``w = i lam``, so a mode is damped iff ``Im w = Re lam < 0``.

Because ``rho_s`` is parity even and the correction only couples to
``Tr(a drho)``/``Tr(a^dag drho)``, ``M_k`` is block diagonal in the parity
of ``m + n``: the even block is ``L`` itself (k independent, contains the
stationary mode), the odd block carries all the k dependence.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from . import fock
from .lindblad import MeanFieldLiouvillian, Superoperator, vec
from .steadystate import SteadyStateSolver

__all__ = [
    "SymmetryViolation",
    "StationaryModeAmbiguous",
    "NoSignChange",
    "MomentumGrid",
    "ExcitationSpectrum",
    "linearized_generator",
    "excitation_spectrum",
    "stability_boundary",
]

SYMMETRY_TOL = 1e-9
ZERO_MODE_TOL = 1e-9
OVERLAP_MIN = 0.9
SHIFT = 1e-2


class SymmetryViolation(ValueError):
    pass


class StationaryModeAmbiguous(RuntimeError):
    pass


class NoSignChange(ValueError):
    pass


@dataclass(frozen=True)
class MomentumGrid:
    n_k: int = 65
    z: int = 2

    def __post_init__(self):
        if self.n_k < 2:
            raise ValueError("n_k must be >= 2")
        if self.z != 2:
            raise ValueError("only the 1D chain (z=2) is supported")

    @property
    def k_values(self):
        return np.linspace(0.0, np.pi, self.n_k)

    def dispersion(self, j):
        return -j * np.cos(self.k_values)


@dataclass
class ExcitationSpectrum:
    k_values: np.ndarray
    omegas: list
    least_stable: np.ndarray  # max Im(w) at each k
    max_im: float
    argmax_k: float
    method: str = "arnoldi"
    even_modes: np.ndarray = field(default=None, repr=False)


def _parity_index(n):
    par = (np.add.outer(np.arange(n), np.arange(n)) % 2).reshape(-1)
    return np.flatnonzero(par == 0), np.flatnonzero(par == 1)


def _rank2_vectors(a, rho_s):
    """Columns ``v`` and rows ``w`` with ``R = -i t v @ w.T`` (full space)."""
    ad = a.conj().T
    v = np.stack([vec(ad @ rho_s - rho_s @ ad), vec(a @ rho_s - rho_s @ a)], axis=1)
    w = np.stack([vec(a.T), vec(ad.T)], axis=1)
    return v, w


def linearized_generator(liouvillian, rho_s, t_k):
    """Generator ``M_k = L + R_k`` of excitations around ``rho_s``.

    ``R_k drho = -i t_k (Tr(a drho) [a^dag, rho_s] + Tr(a^dag drho) [a, rho_s])``,
    the complex-linear form of the Hermitian-conjugate term.
    """
    n = liouvillian.n_levels
    a = fock.annihilation(n)
    if abs(np.trace(a @ rho_s)) >= SYMMETRY_TOL:
        raise SymmetryViolation(f"<a> = {np.trace(a @ rho_s):.3e} is not zero")
    if t_k == 0:
        return Superoperator(n, liouvillian.matrix.copy())
    v, w = _rank2_vectors(a, rho_s)
    r = sp.csr_matrix(-1j * t_k * (v @ w.T))
    return Superoperator(n, (liouvillian.matrix + r).tocsr())


class _OddBlock:
    """Shift-invert operator for ``L_odd + t V W^T`` via Woodbury."""

    def __init__(self, l_odd, v, w, sigma):
        self.n = l_odd.shape[0]
        self.l_odd = l_odd.tocsr()
        self.v = v
        self.w = w
        self.sigma = sigma
        shifted = (l_odd - sigma * sp.identity(self.n, format="csc")).tocsc()
        self.lu = spl.splu(shifted)
        self.ainv_v = self.lu.solve(v)
        self.v0 = np.ones(self.n, dtype=complex) / np.sqrt(self.n)

    def eigs(self, t, n_modes):
        u = -1j * t * self.v
        ainv_u = -1j * t * self.ainv_v
        cap = np.eye(2) + self.w.T @ ainv_u
        lu, w = self.lu, self.w

        def opinv(x):
            y = lu.solve(x)
            return y - ainv_u @ np.linalg.solve(cap, w.T @ y)

        op = spl.LinearOperator((self.n, self.n), matvec=opinv, dtype=complex)
        mat = spl.LinearOperator(
            (self.n, self.n), matvec=lambda x: self.l_odd @ x + u @ (w.T @ x), dtype=complex
        )
        return spl.eigs(
            mat, k=n_modes, sigma=self.sigma, OPinv=op, which="LM",
            v0=self.v0, return_eigenvectors=False,
        )


def _drop_stationary(vals, vecs, rho_even):
    """Remove the eigenpair that is the steady state itself."""
    target = rho_even / np.linalg.norm(rho_even)
    cands = []
    for i, lam in enumerate(vals):
        if abs(lam) < ZERO_MODE_TOL:
            ov = abs(np.vdot(target, vecs[:, i])) / np.linalg.norm(vecs[:, i])
            cands.append((ov, i))
    match = [i for ov, i in cands if ov > OVERLAP_MIN]
    if len(match) != 1:
        raise StationaryModeAmbiguous(
            f"{len(cands)} near-zero eigenvalues, {len(match)} overlapping the steady state"
        )
    return np.delete(vals, match[0])


def excitation_spectrum(
    params, grid=None, n_levels=fock.DEFAULT_LEVELS, method="arnoldi", n_modes=4, rho_s=None
):
    """Excitation frequencies ``w_k`` of the symmetric steady state.

    ``method="dense"`` diagonalizes both parity blocks completely (exact, all
    modes retained).  ``method="arnoldi"`` keeps the ``n_modes`` eigenvalues
    of each block closest to the shift ``0.01`` (shift-invert Arnoldi with a
    rank-2 Woodbury update per k), which are the least damped ones.
    """
    grid = grid or MomentumGrid()
    n = fock.check_levels(n_levels)
    mf = MeanFieldLiouvillian(params, n)
    if rho_s is None:
        rho_s = SteadyStateSolver(params, n).solve(0.0)[0]
    a = mf.a
    if abs(np.trace(a @ rho_s)) >= SYMMETRY_TOL:
        raise SymmetryViolation("steady state at alpha=0 breaks the Z2 symmetry")
    lmat = mf.at(0.0).tocsr()
    ev, od = _parity_index(n)
    l_even = lmat[ev][:, ev]
    l_odd = lmat[od][:, od]
    v, w = _rank2_vectors(a, rho_s)
    v_odd, w_odd = v[od], w[od]
    rho_even = vec(rho_s)[ev]
    ts = grid.dispersion(params.j)

    if method == "dense":
        vals, vecs = np.linalg.eig(l_even.toarray())
        even_modes = _drop_stationary(vals, vecs, rho_even)
        l_odd_d = l_odd.toarray()
        rank2 = -1j * (v_odd @ w_odd.T)
        odd_modes = [np.linalg.eigvals(l_odd_d + t * rank2) for t in ts]
    elif method == "arnoldi":
        m = min(n_modes, len(ev) - 2)
        shifted = (l_even - SHIFT * sp.identity(len(ev), format="csc")).tocsc()
        lu = spl.splu(shifted)
        op = spl.LinearOperator(shifted.shape, matvec=lu.solve, dtype=complex)
        vals, vecs = spl.eigs(
            l_even, k=m + 1, sigma=SHIFT, OPinv=op, which="LM",
            v0=np.ones(len(ev), dtype=complex) / np.sqrt(len(ev)),
        )
        even_modes = _drop_stationary(vals, vecs, rho_even)
        block = _OddBlock(l_odd, v_odd, w_odd, SHIFT)
        odd_modes = []
        cache = {}
        for t in ts:
            # identical t_k (e.g. J = 0) must give identical modes
            key = float(t)
            if key not in cache:
                cache[key] = block.eigs(t, min(n_modes, len(od) - 2))
            odd_modes.append(cache[key])
    else:
        raise ValueError(f"unknown method {method!r}")

    omegas = [1j * np.concatenate([even_modes, om]) for om in odd_modes]
    least = np.array([om.imag.max() for om in omegas])
    i = int(np.argmax(least))  # first occurrence: smallest k wins ties
    return ExcitationSpectrum(
        k_values=grid.k_values,
        omegas=omegas,
        least_stable=least,
        max_im=float(least[i]),
        argmax_k=float(grid.k_values[i]),
        method=method,
        even_modes=1j * even_modes,
    )


def stability_boundary(
    params, j_range, tol=1e-4, grid=None, n_levels=fock.DEFAULT_LEVELS, method="arnoldi"
):
    """Bisect J for the sign change of ``max_k Im w_k``.

    ``params.j`` is ignored; ``j_range = (lo, hi)`` must bracket exactly one
    sign change (stable at ``lo``, unstable at ``hi`` or vice versa).
    """
    lo, hi = map(float, j_range)

    def indicator(j):
        return excitation_spectrum(params.with_j(j), grid, n_levels, method=method).max_im

    f_lo, f_hi = indicator(lo), indicator(hi)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoSignChange(f"max Im w has the same sign at J={lo} ({f_lo:.3g}) and J={hi} ({f_hi:.3g})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        f_mid = indicator(mid)
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)
