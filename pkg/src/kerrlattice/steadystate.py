"""Steady states of the single-site Liouvillian and the mean-field loop.

The self-consistency condition is ``alpha = Tr[a rho_ss(alpha)]``.  The
symmetric solution ``alpha = 0`` always exists; broken-symmetry solutions
come in pairs ``(alpha, -alpha)``.
"""

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from . import fock
from .lindblad import MeanFieldLiouvillian, trace_row, unvec, vec

__all__ = [
    "Branch",
    "DegenerateSteadyState",
    "NoConvergence",
    "SolverOptions",
    "FixedPoint",
    "SteadyStateSolver",
    "steady_state_at_fixed_alpha",
    "selfconsistent_steady_state",
    "find_branches",
    "canonical_alpha",
]

log = logging.getLogger(__name__)

NULL_TOL = 1e-9
RESIDUAL_TOL = 1e-8
ROOT_REL_TOL = 1e-4


class DegenerateSteadyState(RuntimeError):
    """More than one (numerically) zero eigenvalue of the Liouvillian.

    ``multiplicity`` is the number of eigenvalues below the null tolerance;
    ``rho`` (possibly None) is the parity-even, unit-trace element of the
    null space.
    """

    def __init__(self, message, multiplicity=None, rho=None):
        super().__init__(message)
        self.multiplicity = multiplicity
        self.rho = rho


class NoConvergence(RuntimeError):
    pass


class Branch(str, enum.Enum):
    SYMMETRIC = "symmetric"
    BROKEN = "broken"


DEFAULT_SEEDS = (0.1, 0.5, 2.0, 0.1j, 0.5j, 2.0j)


@dataclass(frozen=True)
class SolverOptions:
    mixing: float = 0.5
    max_iter: int = 400
    tol: float = 1e-10
    seeds: tuple = DEFAULT_SEEDS
    newton_fallback: bool = True
    symmetric_threshold: float = 1e-6
    dedupe_tol: float = 1e-6
    stall_window: int = 20
    capture_radius: float = 1e-3

    def __post_init__(self):
        if not 0 < self.mixing <= 1:
            raise ValueError("mixing must lie in (0, 1]")
        if self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter >= 1")
        if len(self.seeds) == 0:
            raise ValueError("at least one seed is required")


@dataclass
class FixedPoint:
    alpha: complex
    rho: np.ndarray
    residual: float
    iterations: int
    branch: Branch
    converged: bool = True
    newton: bool = False
    seed: complex = 0j
    z2_defect: float = float("nan")
    captured: bool = False
    attracting: bool = None

    @property
    def order_parameter(self):
        return abs(self.alpha)


def canonical_alpha(alpha):
    """Representative of the Z2 pair ``{alpha, -alpha}``: Re >= 0, ties Im >= 0."""
    alpha = complex(alpha)
    if alpha.real < 0 or (alpha.real == 0 and alpha.imag < 0):
        return -alpha
    return alpha


class SteadyStateSolver:
    """Sparse-LU steady-state solver for ``L(alpha)`` at fixed parameters.

    The trace condition replaces the equation for ``rho[0, 0]``; the rows of
    ``L`` are linearly dependent through ``Tr(L rho) = 0``, so nothing is
    lost.  The same factorization yields the linear response of ``rho`` to
    the mean field, which gives the exact Jacobian of ``Tr[a rho(alpha)]``.
    """

    def __init__(self, params, n_levels=fock.DEFAULT_LEVELS):
        self.params = params
        self.n_levels = fock.check_levels(n_levels)
        self.mf = MeanFieldLiouvillian(params, self.n_levels)
        self._trace = sp.csr_matrix(trace_row(self.n_levels)[None, :])
        self.n_solves = 0

    def _factor(self, alpha):
        lmat = self.mf.at(alpha)
        a = sp.vstack([self._trace, lmat[1:]], format="csc")
        try:
            lu = spl.splu(a, permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))
        except RuntimeError as exc:
            raise DegenerateSteadyState(f"singular steady-state system: {exc}") from exc
        self.n_solves += 1
        return lmat, lu

    def solve(self, alpha, jacobian=False):
        """Return ``(rho, f)`` or ``(rho, f, df)`` at mean field ``alpha``.

        ``f = Tr[a rho]``; ``df`` is the 2x2 real Jacobian of
        ``(Re f, Im f)`` with respect to ``(Re alpha, Im alpha)``.
        """
        n = self.n_levels
        lmat, lu = self._factor(alpha)
        b = np.zeros(n * n, dtype=complex)
        b[0] = 1.0
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise DegenerateSteadyState("steady-state solve produced non-finite values")
        resid = np.abs(lmat @ x).max()
        if resid > RESIDUAL_TOL:
            raise NoConvergence(f"steady-state residual {resid:.2e} exceeds {RESIDUAL_TOL}")
        rho = unvec(x, n)
        rho = 0.5 * (rho + rho.conj().T)
        rho = rho / np.trace(rho).real
        f = complex(self.mf.w_a @ vec(rho))
        if not jacobian:
            return rho, f
        t0 = self.params.coupling
        xr = vec(rho)
        dp = self.mf.d_plus @ xr
        dm = self.mf.d_minus @ xr
        cols = []
        # d/dRe(alpha) and d/dIm(alpha) of L(alpha) applied to rho
        for dl_rho in (t0 * (dp + dm), t0 * 1j * (dp - dm)):
            rhs = -dl_rho
            rhs[0] = 0.0
            drho = lu.solve(rhs)
            df = self.mf.w_a @ drho
            cols.append([df.real, df.imag])
        return rho, f, np.array(cols).T

    def order_map(self, alpha):
        return self.solve(alpha)[1]


def _null_space_eig(params, alpha, n):
    from .lindblad import build_liouvillian

    lmat = build_liouvillian(params, alpha, n).dense
    w, v = np.linalg.eig(lmat)
    order = np.argsort(np.abs(w))
    w, v = w[order], v[:, order]
    mult = int(np.sum(np.abs(w) < NULL_TOL))
    if mult == 0:
        raise NoConvergence(f"no eigenvalue below {NULL_TOL}; smallest is {abs(w[0]):.2e}")
    return w, v, mult, lmat


def _even_unit_trace(vectors, n):
    par = (np.add.outer(np.arange(n), np.arange(n)) % 2).reshape(-1)
    best = None
    for col in vectors.T:
        even = np.where(par == 0, col, 0)
        tr = np.trace(unvec(even, n))
        if best is None or abs(tr) > abs(best[1]):
            best = (even, tr)
    if best is None or abs(best[1]) < 1e-12:
        return None
    rho = unvec(best[0] / best[1], n)
    return 0.5 * (rho + rho.conj().T)


def steady_state_at_fixed_alpha(params, alpha, n_levels=fock.DEFAULT_LEVELS, method="direct"):
    """Steady state of ``L(alpha)`` (mean field held fixed).

    ``method="direct"`` solves the trace-constrained linear system with a
    sparse LU; ``method="eig"`` takes the eigenvector of the dense
    Liouvillian whose eigenvalue has the smallest modulus and raises
    DegenerateSteadyState when more than one eigenvalue has modulus below
    1e-9.
    """
    n = fock.check_levels(n_levels)
    if method == "direct":
        return SteadyStateSolver(params, n).solve(alpha)[0]
    if method != "eig":
        raise ValueError(f"unknown method {method!r}")
    w, v, mult, lmat = _null_space_eig(params, alpha, n)
    if mult > 1:
        raise DegenerateSteadyState(
            f"null space of dimension {mult}",
            multiplicity=mult,
            rho=_even_unit_trace(v[:, :mult], n),
        )
    rho = unvec(v[:, 0], n)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    resid = np.abs(lmat @ vec(rho)).max()
    if resid > RESIDUAL_TOL:
        raise NoConvergence(f"steady-state residual {resid:.2e}")
    return rho


def _branch_of(alpha, opts):
    return Branch.SYMMETRIC if abs(alpha) < opts.symmetric_threshold else Branch.BROKEN


def _newton_step(jac, fx):
    try:
        return -np.linalg.solve(jac - np.eye(2), fx)
    except np.linalg.LinAlgError:
        return -fx


def _root_ok(res, step, alpha, opts):
    # near a bifurcation F is nearly flat: a small residual alone does not
    # mean alpha is close to the root, so also bound the Newton step
    return res < opts.tol and np.hypot(*step) < max(opts.tol, ROOT_REL_TOL * abs(alpha))


def _newton(solver, alpha, opts, budget):
    """Damped Newton on ``F(alpha) = Tr[a rho(alpha)] - alpha`` in R^2.

    Returns ``(alpha, rho, residual, jacobian, n_iter, converged)`` where
    ``jacobian`` is d(Tr[a rho])/d(alpha) at the final point.
    """
    x = np.array([alpha.real, alpha.imag])
    rho, f, jac = solver.solve(complex(*x), jacobian=True)
    fx = np.array([f.real, f.imag]) - x
    it = 0
    while True:
        res = float(np.hypot(*fx))
        step = _newton_step(jac, fx)
        if _root_ok(res, step, complex(*x), opts):
            return complex(*x), rho, res, jac, it, True
        if it >= budget:
            return complex(*x), rho, res, jac, it, False
        it += 1
        lam = 1.0
        while True:
            xn = x + lam * step
            rho_n, f_n, jac_n = solver.solve(complex(*xn), jacobian=True)
            fn = np.array([f_n.real, f_n.imag]) - xn
            if np.hypot(*fn) < (1 - 0.25 * lam) * max(res, 1e-300):
                break
            lam *= 0.5
            if lam < 1e-3:
                # no descent along the Newton direction: typically the ghost of
                # a saddle-node, where F has a minimum but no root
                return complex(*x), rho, res, jac, it, False
        x, rho, fx, jac = xn, rho_n, fn, jac_n


def _attracting(jac):
    # fixed point of alpha <- (1-m) alpha + m f(alpha) is stable for small m
    return bool(np.max(np.linalg.eigvals(jac).real) < 1.0)


def selfconsistent_steady_state(
    params, seed, opts=None, n_levels=fock.DEFAULT_LEVELS, solver=None, attractors=()
):
    """Solve ``alpha = Tr[a rho_ss(alpha)]`` starting from ``seed``.

    Under-relaxed iteration ``alpha <- (1-m) alpha + m Tr[a rho(alpha)]``.
    The mixing is halved whenever the residual flips direction without
    shrinking.  When the observed contraction predicts more than
    ``opts.stall_window`` further iterations, a damped Newton iteration
    (exact Jacobian) takes over; its root is accepted only if it attracts
    the relaxation map, otherwise the plain iteration resumes.  A
    non-converged result carries ``converged=False`` and the best iterate.

    ``attractors`` lists already converged, attracting fixed points; an
    iterate that comes within ``opts.capture_radius`` of one of them (and
    closer than halfway to any other) is returned as that fixed point,
    flagged ``captured=True``.
    """
    opts = opts or SolverOptions()
    solver = solver or SteadyStateSolver(params, n_levels)
    seed = complex(seed)
    alpha = seed
    m = opts.mixing
    prev_res = None
    prev_r = None
    best = None
    it = 0
    newton_block = 0
    # capture radius never reaches halfway to another known fixed point
    radii = [
        (fp, min([opts.capture_radius] + [0.5 * abs(fp.alpha - o.alpha) for o in attractors if o is not fp]))
        for fp in attractors
    ]
    while it < opts.max_iter:
        it += 1
        rho, f = solver.solve(alpha)
        r = f - alpha
        res = abs(r)
        if best is None or res < best[2]:
            best = (alpha, rho, res)
        force_newton = False
        if res < opts.tol:
            _, _, jac = solver.solve(alpha, jacobian=True)
            if _root_ok(res, _newton_step(jac, np.array([r.real, r.imag])), alpha, opts):
                return FixedPoint(
                    alpha, rho, res, it, _branch_of(alpha, opts), seed=seed,
                    attracting=_attracting(jac),
                )
            force_newton = True
        for fp, radius in radii:
            if abs(alpha - fp.alpha) < radius:
                return replace(fp, iterations=it, seed=seed, captured=True)
        if prev_r is not None and (r * np.conj(prev_r)).real < 0 and res > 0.5 * prev_res:
            m = max(0.5 * m, 1e-3)
        stalled = False
        if prev_res is not None and it > 2:
            q = res / prev_res
            need = np.inf if q >= 1 else np.log(opts.tol / res) / np.log(q)
            stalled = need > opts.stall_window
        if force_newton or (opts.newton_fallback and stalled and it >= newton_block):
            budget = min(30, opts.max_iter - it)
            a_n, rho_n, res_n, jac, k, ok = _newton(solver, alpha, opts, budget)
            it += k
            if ok and _attracting(jac):
                return FixedPoint(
                    a_n, rho_n, res_n, it, _branch_of(a_n, opts), newton=True, seed=seed,
                    attracting=True,
                )
            # rejected root: give the plain iteration a head start before retrying
            newton_block = it + opts.stall_window
        prev_r, prev_res = r, res
        alpha = alpha + m * r
    log.warning("self-consistency from seed %s did not converge (residual %.2e)", seed, best[2])
    return FixedPoint(
        best[0], best[1], best[2], it, _branch_of(best[0], opts),
        converged=False, seed=seed,
    )


@dataclass
class BranchSearch:
    branches: list
    failed_seeds: list = field(default_factory=list)
    discarded: list = field(default_factory=list)


def search_branches(params, opts=None, n_levels=fock.DEFAULT_LEVELS, extra_seeds=(), solver=None):
    """Multi-seed search; see :func:`find_branches`.  Also reports failures."""
    opts = opts or SolverOptions()
    solver = solver or SteadyStateSolver(params, n_levels)
    rho0, _, jac0 = solver.solve(0.0, jacobian=True)
    sym = FixedPoint(0j, rho0, 0.0, 1, Branch.SYMMETRIC, attracting=_attracting(jac0))
    known = [sym] if sym.attracting else []
    broken = []
    failed = []
    seen = set()
    for seed in list(extra_seeds) + list(opts.seeds):
        seed = complex(seed)
        if seed == 0 or seed in seen:
            continue
        seen.add(seed)
        fp = selfconsistent_steady_state(params, seed, opts, solver=solver, attractors=known)
        if not fp.converged:
            failed.append(seed)
            continue
        if fp.branch is Branch.BROKEN:
            canon = canonical_alpha(fp.alpha)
            if canon != fp.alpha:
                fp = replace(fp, alpha=canon, rho=_parity_conjugate(fp.rho))
            if not any(abs(canon - b.alpha) < opts.dedupe_tol for b in broken):
                broken.append(fp)
                if fp.attracting or fp.attracting is None:
                    mirror = replace(fp, alpha=-fp.alpha, rho=_parity_conjugate(fp.rho))
                    known.extend([fp, mirror])
    broken.sort(key=lambda b: -abs(b.alpha))
    for fp in broken[:1]:
        fp.z2_defect = _z2_defect(solver, fp)
    return BranchSearch([sym] + broken[:1], failed, broken[1:])


def find_branches(params, opts=None, n_levels=fock.DEFAULT_LEVELS, extra_seeds=()):
    """Symmetric fixed point plus, when found, one broken-symmetry branch.

    Seeds ``0``, ``extra_seeds`` and ``opts.seeds`` are each iterated to
    convergence; broken solutions are mapped to their canonical Z2
    representative and deduplicated.  If several distinct broken solutions
    turn up, the one with the largest ``|alpha|`` is kept.
    """
    return search_branches(params, opts, n_levels, extra_seeds).branches


def _parity_conjugate(rho):
    p = np.diag(fock.parity_operator(rho.shape[0])).real
    return rho * np.outer(p, p)


def _z2_defect(solver, fp):
    rho_m, f_m = solver.solve(-fp.alpha)
    f_p = solver.mf.w_a @ vec(fp.rho)
    return float(max(abs(f_m + f_p), np.abs(rho_m - _parity_conjugate(fp.rho)).max()))
