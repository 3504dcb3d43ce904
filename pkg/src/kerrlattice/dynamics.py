"""Time evolution of the self-consistent mean-field master equation.

The generator depends on the state through ``alpha = Tr[a rho]``, which is
recomputed at every right-hand-side evaluation.  Written holomorphically in
``y = vec(rho)`` (``alpha* = Tr[a^dag rho]`` for Hermitian ``rho``):

    dy/dt = L_sym y + t0 (w_a . y) D_plus y + t0 (w_ad . y) D_minus y

with Jacobian ``L(alpha) + t0 (D_plus y) w_a^T + t0 (D_minus y) w_ad^T``.
"""

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import BDF, RK45

from . import fock
from .lindblad import MeanFieldLiouvillian, check_density_matrix, unvec, vec
from .observables import occupation, purity

__all__ = [
    "StepSizeUnderflow",
    "PositivityLost",
    "Endpoint",
    "IntegratorOptions",
    "Trajectory",
    "MeanFieldFlow",
    "evolve",
    "classify_endpoint",
    "coherent_initial_state",
]

log = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-4
RENORM_TOL = 1e-12


class StepSizeUnderflow(RuntimeError):
    pass


class PositivityLost(RuntimeError):
    pass


class Endpoint(str, enum.Enum):
    SYMMETRIC = "symmetric"
    BROKEN = "broken"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class IntegratorOptions:
    """``method``: ``"bdf"`` (default, implicit; the generator is stiff),
    ``"rk45"`` (Dormand-Prince pair) or ``"rk4"`` (fixed step ``fixed_step``,
    bitwise reproducible).  ``max_step=None`` means 0.1 for the explicit
    methods and 10 for BDF."""

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = None
    t_max: float = 100.0
    record_interval: float = 0.1
    fixed_point_tol: float = 1e-8
    method: str = "bdf"
    fixed_step: float = 1e-3
    stop_records: int = 10
    check_positivity: bool = True

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "t_max", "record_interval", "fixed_point_tol", "fixed_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.method not in ("bdf", "rk45", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def step_cap(self):
        if self.max_step is not None:
            return self.max_step
        return 10.0 if self.method == "bdf" else 0.1


@dataclass
class Trajectory:
    times: np.ndarray
    alphas: np.ndarray
    occupations: np.ndarray
    purities: np.ndarray
    final_rho: np.ndarray
    early_stopped: bool = False
    trace_drift: float = 0.0  # max |Tr rho - 1| seen before renormalization
    renormalizations: int = 0
    n_steps: int = 0
    method: str = "bdf"
    final_rate: float = float("nan")  # ||d rho/dt||_max at the last record
    min_eigenvalues: np.ndarray = field(default=None, repr=False)
    hermiticity: np.ndarray = field(default=None, repr=False)

    @property
    def order_parameters(self):
        return np.abs(self.alphas)

    def rows(self):
        """``(t, re_alpha, im_alpha, n, purity)`` per record."""
        return np.column_stack(
            [self.times, self.alphas.real, self.alphas.imag, self.occupations, self.purities]
        )


class MeanFieldFlow:
    """Right-hand side and Jacobian of the nonlinear mean-field flow."""

    def __init__(self, params, n_levels):
        self.mf = MeanFieldLiouvillian(params, n_levels)
        self.n_levels = self.mf.n_levels
        self.t0 = params.coupling
        self.n_evals = 0

    def alpha(self, y):
        return complex(self.mf.w_a @ y)

    def __call__(self, t, y):
        self.n_evals += 1
        a = self.mf.w_a @ y
        ac = self.mf.w_ad @ y
        out = self.mf.l_sym @ y
        if self.t0:
            out = out + self.t0 * (a * (self.mf.d_plus @ y) + ac * (self.mf.d_minus @ y))
        return out

    def jacobian(self, t, y):
        a = self.mf.w_a @ y
        ac = self.mf.w_ad @ y
        mf = self.mf
        jac = mf.l_sym.copy()
        if not self.t0:
            return jac
        jac.data = jac.data + self.t0 * (a * mf.d_plus.data + ac * mf.d_minus.data)
        u = sp.csr_matrix(np.column_stack([mf.d_plus @ y, mf.d_minus @ y]))
        w = sp.csr_matrix(np.stack([mf.w_a, mf.w_ad]))
        return (jac + self.t0 * (u @ w)).tocsr()


def coherent_initial_state(alpha0, n_levels=fock.DEFAULT_LEVELS, truncation_tol=fock.TRUNCATION_TOL):
    return fock.projector(fock.coherent_state(alpha0, n_levels, truncation_tol))


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


class _Recorder:
    def __init__(self, flow, opts, n):
        self.flow, self.opts, self.n = flow, opts, n
        self.t, self.alpha, self.n_ph, self.p, self.mins, self.herm = [], [], [], [], [], []
        self.quiet = 0
        self.drift = 0.0
        self.renorms = 0
        self.rate = np.nan
        self.y = None

    def __call__(self, t, y):
        """Record the state; returns True when the early-stop rule fires."""
        tr = np.trace(unvec(y, self.n))
        dev = abs(tr - 1.0)
        self.drift = max(self.drift, dev)
        if dev > RENORM_TOL:
            y = y / tr
            self.renorms += 1
            log.debug("trace drift %.2e renormalized at t=%.4g", dev, t)
        rho = unvec(y, self.n)
        herm = np.abs(rho - rho.conj().T).max()
        hrho = 0.5 * (rho + rho.conj().T)
        lam = np.nan
        if self.opts.check_positivity:
            lam = np.linalg.eigvalsh(hrho)[0]
            if lam < -POSITIVITY_TOL:
                raise PositivityLost(f"eigenvalue {lam:.2e} at t={t:.6g}; reduce tolerances or raise N")
        self.t.append(t)
        self.alpha.append(self.flow.alpha(y))
        self.n_ph.append(occupation(hrho))
        self.p.append(purity(hrho))
        self.mins.append(lam)
        self.herm.append(herm)
        self.y = y
        self.rate = float(np.abs(self.flow(t, y)).max())
        self.quiet = self.quiet + 1 if self.rate < self.opts.fixed_point_tol else 0
        return self.quiet >= self.opts.stop_records

    def trajectory(self, stopped, n_steps, method):
        rho = unvec(self.y, self.n).copy()
        return Trajectory(
            times=np.array(self.t),
            alphas=np.array(self.alpha, dtype=complex),
            occupations=np.array(self.n_ph),
            purities=np.array(self.p),
            final_rho=0.5 * (rho + rho.conj().T),
            early_stopped=stopped,
            trace_drift=self.drift,
            renormalizations=self.renorms,
            n_steps=n_steps,
            method=method,
            final_rate=self.rate,
            min_eigenvalues=np.array(self.mins),
            hermiticity=np.array(self.herm),
        )


def evolve(params, rho0, opts=None, n_levels=None):
    """Integrate ``d rho/dt = L(Tr[a rho]) rho`` from ``rho0``.

    Observables are recorded at multiples of ``opts.record_interval``
    (dense output between steps for the adaptive methods).  The run stops
    at ``t_max`` or after ``opts.stop_records`` consecutive records with
    ``||d rho/dt||_max < fixed_point_tol``.
    """
    opts = opts or IntegratorOptions()
    rho0 = np.asarray(rho0, dtype=complex)
    n = rho0.shape[0] if n_levels is None else fock.check_levels(n_levels)
    if rho0.shape != (n, n):
        raise ValueError(f"rho0 has shape {rho0.shape}, expected {(n, n)}")
    check_density_matrix(rho0, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-8)
    flow = MeanFieldFlow(params, n)
    rec = _Recorder(flow, opts, n)
    y = vec(rho0).astype(complex).copy()
    dt_rec = opts.record_interval
    n_rec = int(np.floor(opts.t_max / dt_rec + 1e-9))
    stopped = rec(0.0, y)
    k = 1

    if opts.method == "rk4":
        # fixed step, record points land on the step grid
        sub = max(1, int(np.ceil(dt_rec / opts.fixed_step - 1e-9)))
        h = dt_rec / sub
        steps = 0
        while not stopped and k <= n_rec:
            for _ in range(sub):
                y = _rk4_step(flow, steps * h, y, h)
                steps += 1
                tr = y[:: n + 1].sum()
                if abs(tr - 1.0) > RENORM_TOL:
                    rec.drift = max(rec.drift, abs(tr - 1.0))
                    rec.renorms += 1
                    y = y / tr
            if not np.all(np.isfinite(y)):
                raise StepSizeUnderflow(f"fixed-step RK4 diverged at t={k * dt_rec:.6g}; lower fixed_step")
            stopped = rec(k * dt_rec, y)
            k += 1
        return rec.trajectory(stopped, steps, "rk4")

    if opts.method == "bdf":
        solver = BDF(
            flow, 0.0, y, opts.t_max, max_step=opts.step_cap, rtol=opts.rel_tol,
            atol=opts.abs_tol, jac=flow.jacobian,
        )
    else:
        solver = RK45(
            flow, 0.0, y, opts.t_max, max_step=opts.step_cap, rtol=opts.rel_tol, atol=opts.abs_tol,
        )
    steps = 0
    while not stopped and k <= n_rec:
        msg = solver.step()
        steps += 1
        if solver.status == "failed":
            raise StepSizeUnderflow(f"{opts.method} failed at t={solver.t:.6g}: {msg}")
        interp = None
        while k <= n_rec and k * dt_rec <= solver.t + 1e-12 * max(1.0, solver.t):
            tk = k * dt_rec
            if abs(tk - solver.t) <= 1e-12 * max(1.0, tk):
                yk = solver.y
            else:
                interp = interp or solver.dense_output()
                yk = interp(tk)
            stopped = rec(tk, yk)
            k += 1
            if stopped:
                break
        if solver.status == "finished":
            break
    return rec.trajectory(stopped, steps, opts.method)


def classify_endpoint(traj, threshold=1e-3):
    if not traj.early_stopped:
        return Endpoint.UNDECIDED
    return Endpoint.SYMMETRIC if abs(traj.alphas[-1]) < threshold else Endpoint.BROKEN
