"""Single-site mean-field Hamiltonian and Lindblad generator.

Vectorization convention (used everywhere in the package): a density
matrix ``rho`` of shape ``(N, N)`` maps to ``vec(rho) = rho.reshape(-1)``,
so element ``rho[m, n]`` sits at index ``m * N + n``.  With this row-major
layout ``vec(A @ rho @ B) = kron(A, B.T) @ vec(rho)``.
"""

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fock

__all__ = [
    "BAND_BOTTOM",
    "FIXED",
    "DimensionMismatch",
    "ModelParams",
    "Superoperator",
    "vec",
    "unvec",
    "spre",
    "spost",
    "trace_row",
    "build_hamiltonian",
    "build_liouvillian",
    "apply",
    "check_density_matrix",
    "MeanFieldLiouvillian",
]

FIXED = "fixed"
BAND_BOTTOM = "band_bottom"


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters in units of the one-photon loss rate kappa.

    ``delta_mode="band_bottom"`` ties the detuning to the hopping,
    ``Delta = -J``; with ``"fixed"`` the ``delta`` field is used as is.
    """

    delta: float = 0.0
    u: float = 1.0
    g: complex = 0.0
    j: float = 0.0
    kappa: float = 1.0
    eta: float = 1.0
    delta_mode: str = FIXED

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.eta < 0 or self.u < 0 or self.j < 0:
            raise ValueError("eta, u and j must be non-negative")
        if self.delta_mode not in (FIXED, BAND_BOTTOM):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")

    @property
    def detuning(self):
        return -self.j if self.delta_mode == BAND_BOTTOM else self.delta

    @property
    def coupling(self):
        """Mean-field drive strength per unit ``<a>``: the k=0 dispersion ``-J``."""
        return -self.j

    def with_j(self, j):
        return replace(self, j=float(j))

    def with_g(self, g):
        return replace(self, g=g)


def vec(rho):
    return np.asarray(rho).reshape(-1)


def unvec(v, n_levels=None):
    v = np.asarray(v)
    n = n_levels if n_levels is not None else int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise DimensionMismatch(f"vector of size {v.size} is not a vectorized {n}x{n} matrix")
    return v.reshape(n, n)


def spre(op):
    """Sparse superoperator for ``rho -> op @ rho``."""
    op = sp.csr_matrix(op)
    return sp.kron(op, sp.identity(op.shape[0], format="csr"), format="csr")


def spost(op):
    """Sparse superoperator for ``rho -> rho @ op``."""
    op = sp.csr_matrix(op)
    return sp.kron(sp.identity(op.shape[0], format="csr"), op.T, format="csr")


def trace_row(n_levels):
    """Row vector ``w`` with ``w @ vec(rho) == trace(rho)``."""
    return np.eye(n_levels).reshape(-1)


def _commutator(op):
    return spre(op) - spost(op)


def _dissipator(op):
    # 2 K rho K^dag - {K^dag K, rho}
    op = sp.csr_matrix(op)
    kk = (op.conj().T @ op).tocsr()
    return (2 * sp.kron(op, op.conj(), format="csr") - spre(kk) - spost(kk)).tocsr()


@dataclass(frozen=True)
class Superoperator:
    """Linear map on vectorized ``N x N`` matrices (see module docstring)."""

    n_levels: int
    matrix: sp.csr_matrix

    def __post_init__(self):
        dim = self.n_levels**2
        if self.matrix.shape != (dim, dim):
            raise DimensionMismatch(
                f"superoperator of shape {self.matrix.shape} does not act on {self.n_levels} levels"
            )

    @cached_property
    def dense(self):
        return self.matrix.toarray()

    def __matmul__(self, v):
        return self.matrix @ v

    def __add__(self, other):
        if other.n_levels != self.n_levels:
            raise DimensionMismatch("cannot add superoperators of different sizes")
        return Superoperator(self.n_levels, (self.matrix + other.matrix).tocsr())


def build_hamiltonian(params, alpha_mf, n_levels):
    """Mean-field single-site Hamiltonian.

    ``H = -Delta n + U/2 a^dag a^dag a a + G/2 a^dag^2 + G*/2 a^2
    + t0 (alpha a^dag + alpha* a)`` with ``t0 = params.coupling = -J``.
    """
    a = fock.annihilation(n_levels)
    ad = a.conj().T
    g = complex(params.g)
    c = params.coupling * complex(alpha_mf)
    h = (
        -params.detuning * (ad @ a)
        + 0.5 * params.u * (ad @ ad @ a @ a)
        + 0.5 * g * (ad @ ad)
        + 0.5 * np.conj(g) * (a @ a)
        + c * ad
        + np.conj(c) * a
    )
    return 0.5 * (h + h.conj().T)


class MeanFieldLiouvillian:
    """Liouvillian split as ``L(alpha) = L_sym + c D_plus + c* D_minus``.

    ``c = t0 * alpha`` and ``D_plus``/``D_minus`` are the (sparse) commutator
    superoperators of ``a^dag`` and ``a``; all three share one sparsity
    pattern so that ``at(alpha)`` only touches data arrays.
    """

    def __init__(self, params, n_levels):
        n = fock.check_levels(n_levels)
        self.params = params
        self.n_levels = n
        a = fock.annihilation(n)
        self.a = a
        h0 = build_hamiltonian(params, 0.0, n)
        lsym = -1j * _commutator(h0)
        lsym = lsym + 0.5 * params.kappa * _dissipator(a)
        if params.eta:
            lsym = lsym + 0.5 * params.eta * _dissipator(a @ a)
        d_plus = -1j * _commutator(a.conj().T)
        d_minus = -1j * _commutator(a)
        pattern = (abs(lsym) + abs(d_plus) + abs(d_minus)).tocsr()
        pattern.sort_indices()
        coo = pattern.tocoo()
        rows, cols = coo.row, coo.col

        def on_pattern(m):
            vals = np.asarray(m.tocsr()[rows, cols]).ravel().astype(complex)
            return sp.csr_matrix(
                (vals, pattern.indices.copy(), pattern.indptr.copy()), shape=pattern.shape
            )

        self.l_sym = on_pattern(lsym)
        self.d_plus = on_pattern(d_plus)
        self.d_minus = on_pattern(d_minus)
        # Tr(a rho) = w_a @ vec(rho); Tr(a^dag rho) = w_ad @ vec(rho)
        self.w_a = vec(a.T).copy()
        self.w_ad = vec(a.conj()).copy()

    def drive(self, alpha):
        return self.params.coupling * complex(alpha)

    def at(self, alpha):
        c = self.drive(alpha)
        m = self.l_sym.copy()
        if c != 0:
            m.data = m.data + c * self.d_plus.data + np.conj(c) * self.d_minus.data
        return m


def build_liouvillian(params, alpha_mf, n_levels):
    """Lindblad generator with one- and two-photon loss at fixed ``<a> = alpha_mf``.

    ``L rho = -i[H, rho] + kappa/2 D(a) rho + eta/2 D(a^2) rho`` with
    ``D(K) rho = 2 K rho K^dag - {K^dag K, rho}``.
    """
    mf = MeanFieldLiouvillian(params, n_levels)
    return Superoperator(mf.n_levels, mf.at(alpha_mf))


def apply(superop, rho):
    rho = np.asarray(rho)
    n = superop.n_levels
    if rho.shape != (n, n):
        raise DimensionMismatch(f"rho of shape {rho.shape} vs superoperator on {n} levels")
    return unvec(superop.matrix @ vec(rho), n)


def check_density_matrix(rho, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-8):
    """Raise ValueError unless ``rho`` is Hermitian, unit-trace and PSD."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > herm_tol:
        raise ValueError(f"density matrix is not Hermitian (defect {herm:.2e})")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"density matrix trace is {tr:.12g}")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lam < -psd_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam:.2e}")
    return rho
