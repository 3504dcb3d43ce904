"""Truncated Fock-space primitives.

All operators are dense ``(N, N)`` complex arrays in the number basis
``|0>, ..., |N-1>``; states are complex ``(N,)`` vectors.
"""

from functools import lru_cache

import numpy as np
from scipy.special import gammaln

__all__ = [
    "TruncationError",
    "DegenerateCat",
    "DEFAULT_LEVELS",
    "check_levels",
    "annihilation",
    "creation",
    "number",
    "parity_operator",
    "coherent_state",
    "cat_state",
    "displacement",
    "resolving_levels",
    "projector",
]

DEFAULT_LEVELS = 40
TRUNCATION_TOL = 1e-8


class TruncationError(ValueError):
    """The requested state or operator is not representable at this cutoff."""


class DegenerateCat(ValueError):
    """The odd cat state at alpha = 0 is the zero vector."""


def check_levels(n_levels):
    n = int(n_levels)
    if n != n_levels or n < 2:
        raise ValueError(f"n_levels must be an integer >= 2, got {n_levels!r}")
    return n


def annihilation(n_levels):
    """Lowering operator with ``a[n, n+1] = sqrt(n+1)``."""
    n = check_levels(n_levels)
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def creation(n_levels):
    return annihilation(n_levels).T.copy()


def number(n_levels):
    n = check_levels(n_levels)
    return np.diag(np.arange(n, dtype=float)).astype(complex)


def parity_operator(n_levels):
    """Photon-number parity ``diag((-1)**n)``; implements ``a -> -a``."""
    n = check_levels(n_levels)
    return np.diag((-1.0) ** np.arange(n)).astype(complex)


def _coherent_amplitudes(alpha, n):
    k = np.arange(n)
    alpha = complex(alpha)
    if alpha == 0:
        c = np.zeros(n, dtype=complex)
        c[0] = 1.0
        return c
    # log-space keeps large |alpha| and n! finite
    log_mag = -0.5 * abs(alpha) ** 2 + k * np.log(abs(alpha)) - 0.5 * gammaln(k + 1)
    return np.exp(log_mag) * np.exp(1j * k * np.angle(alpha))


def coherent_state(alpha, n_levels, truncation_tol=TRUNCATION_TOL):
    """Coherent state ``|alpha>`` truncated and renormalized to unit norm.

    Raises TruncationError when the population of the top level exceeds
    ``truncation_tol``.
    """
    n = check_levels(n_levels)
    c = _coherent_amplitudes(alpha, n)
    if abs(c[-1]) ** 2 > truncation_tol:
        raise TruncationError(
            f"|alpha|={abs(alpha):.3g} leaks {abs(c[-1]) ** 2:.2e} into level {n - 1}; "
            "increase n_levels"
        )
    return c / np.linalg.norm(c)


def cat_state(alpha, parity, n_levels, truncation_tol=TRUNCATION_TOL):
    """Normalized cat state ``(|alpha> + parity |-alpha>) / norm``."""
    if parity not in (1, -1):
        raise ValueError("parity must be +1 or -1")
    n = check_levels(n_levels)
    if alpha == 0 and parity == -1:
        raise DegenerateCat("odd cat state with alpha=0 vanishes")
    c = _coherent_amplitudes(alpha, n)
    if abs(c[-1]) ** 2 > truncation_tol:
        raise TruncationError(f"cat amplitude alpha={alpha} does not fit in {n} levels")
    keep = (np.arange(n) % 2 == 0) if parity == 1 else (np.arange(n) % 2 == 1)
    psi = np.where(keep, c, 0.0)
    return psi / np.linalg.norm(psi)


@lru_cache(maxsize=16)
def _quadrature_eigensystem(n):
    # a^dag - a is real antisymmetric, so i(a^dag - a) is Hermitian
    a = annihilation(n)
    gen = 1j * (a.conj().T - a)
    w, v = np.linalg.eigh(gen)
    v.flags.writeable = False
    w.flags.writeable = False
    return w, v


def displacement(z, n_levels, check=True, tol=1e-6, rows=None):
    """Displacement operator ``exp(z a^dag - z* a)`` on the truncated space.

    Uses the eigendecomposition of the real generator ``a^dag - a`` rotated
    by ``exp(i arg(z) n)``.  The truncated operator is exactly unitary, so
    the useful check is ``D|0>`` against the analytic coherent amplitudes:
    TruncationError when they differ by more than ``tol`` in norm.

    ``rows=k`` returns only the first ``k`` rows (cheaper; no check).
    """
    n = check_levels(n_levels)
    z = complex(z)
    w, v = _quadrature_eigensystem(n)
    r, theta = abs(z), np.angle(z)
    phase = np.exp(1j * theta * np.arange(n))
    # z a^dag - z* a = R (r (a^dag - a)) R^dag with R = exp(i theta n)
    if rows is not None:
        core = (v[:rows] * np.exp(-1j * r * w)) @ v.conj().T
        return phase[:rows, None] * core * phase.conj()[None, :]
    core = (v * np.exp(-1j * r * w)) @ v.conj().T
    d = phase[:, None] * core * phase.conj()[None, :]
    if check:
        defect = np.linalg.norm(d[:, 0] - _coherent_amplitudes(z, n))
        if defect > tol:
            raise TruncationError(
                f"displacement by |z|={r:.3g} is not resolved with {n} levels (defect {defect:.2e})"
            )
    return d


def resolving_levels(z_max, n_levels, tol=1e-6, step=10, cap=400):
    """Smallest size ``>= n_levels`` (in steps of ``step``) whose displacement
    by ``z_max``, restricted to the leading ``n_levels`` block, agrees with
    the next larger size to ``tol``."""
    k = check_levels(n_levels)
    n = k
    prev = displacement(z_max, n, rows=k)[:, :k]
    while n <= cap:
        cur = displacement(z_max, n + step, rows=k)[:, :k]
        if np.abs(cur - prev).max() < tol:
            return n
        n += step
        prev = cur
    raise TruncationError(f"|z|={abs(z_max):.3g} needs more than {cap} levels")


def projector(psi):
    """Density matrix ``|psi><psi|`` of a (normalized) state vector."""
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())
