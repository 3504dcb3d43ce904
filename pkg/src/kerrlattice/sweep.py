"""Phase-diagram scans, critical points and exponent fits."""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import fock
from .lindblad import BAND_BOTTOM, ModelParams
from .observables import occupation, purity
from .stability import (
    NoSignChange,
    StationaryModeAmbiguous,
    excitation_spectrum,
)
from .steadystate import (
    DegenerateSteadyState,
    NoConvergence,
    SolverOptions,
    SteadyStateSolver,
    search_branches,
)

__all__ = [
    "CONVERGED",
    "DEGENERATE",
    "UNDECIDED",
    "PHASE_HEADER",
    "PhaseCell",
    "CriticalFit",
    "FitDiverged",
    "Bistability",
    "evaluate_cell",
    "scan_phase_diagram",
    "detect_jc",
    "fit_beta",
    "detect_bistability",
    "write_phase_csv",
    "fmt",
]

log = logging.getLogger(__name__)

CONVERGED = "Converged"
DEGENERATE = "Degenerate"
UNDECIDED = "Undecided"

PHASE_HEADER = [
    "j", "g", "order_parameter", "occupation", "purity",
    "max_im_omega", "argmax_k", "n_branches", "flags",
]


class FitDiverged(RuntimeError):
    pass


def fmt(x):
    """17 significant digits: round-trips every double."""
    return format(float(x), ".17g")


@dataclass
class PhaseCell:
    j: float
    g: float
    order_parameter: float
    occupation: float
    purity: float
    max_im_omega: float
    argmax_k: float
    n_branches: int
    flags: frozenset = frozenset()
    alpha: complex = 0j  # canonical broken-branch alpha (0 if none)

    def row(self):
        return [
            fmt(self.j), fmt(self.g), fmt(self.order_parameter), fmt(self.occupation),
            fmt(self.purity), fmt(self.max_im_omega), fmt(self.argmax_k),
            str(self.n_branches), ";".join(sorted(self.flags)),
        ]


@dataclass
class CriticalFit:
    g: float
    j_c: float
    beta: float  # None when the transition is classified first order
    amplitude: float
    residual: float
    window: tuple
    first_order: bool = False
    onset_ratio: float = float("nan")
    samples: list = field(default_factory=list)  # (J - j_c, |alpha|) pairs


def _base(base, g, delta_mode, delta):
    base = base or ModelParams()
    return replace(base, g=g, delta_mode=delta_mode, delta=delta)


def evaluate_cell(params, opts=None, n_levels=fock.DEFAULT_LEVELS, grid=None, extra_seeds=()):
    """Branch search plus stability of the symmetric state for one parameter point."""
    opts = opts or SolverOptions()
    flags = set()
    nan = float("nan")
    try:
        solver = SteadyStateSolver(params, n_levels)
        found = search_branches(params, opts, extra_seeds=extra_seeds, solver=solver)
    except (DegenerateSteadyState, NoConvergence) as exc:
        log.warning("cell J=%g G=%g: %s", params.j, params.g, exc)
        flag = DEGENERATE if isinstance(exc, DegenerateSteadyState) else UNDECIDED
        return PhaseCell(params.j, params.g, nan, nan, nan, nan, nan, 1, frozenset({flag}))
    branches = found.branches
    flags.add(UNDECIDED if found.failed_seeds else CONVERGED)
    sel = branches[-1]
    try:
        spec = excitation_spectrum(params, grid, n_levels, rho_s=branches[0].rho)
        max_im, argmax_k = spec.max_im, spec.argmax_k
    except StationaryModeAmbiguous as exc:
        log.warning("cell J=%g G=%g: %s", params.j, params.g, exc)
        flags.add(DEGENERATE)
        max_im = argmax_k = nan
    broken = len(branches) == 2
    return PhaseCell(
        j=params.j,
        g=float(np.real(params.g)),
        order_parameter=abs(sel.alpha) if broken else 0.0,
        occupation=occupation(sel.rho),
        purity=purity(sel.rho),
        max_im_omega=max_im,
        argmax_k=argmax_k,
        n_branches=len(branches),
        flags=frozenset(flags),
        alpha=complex(sel.alpha) if broken else 0j,
    )


def _scan_row(args):
    g, j_grid, delta_mode, delta, base, opts, n_levels, grid = args
    cells = []
    warm = ()
    for j in j_grid:
        p = _base(base, g, delta_mode, delta).with_j(j)
        cell = evaluate_cell(p, opts, n_levels, grid, extra_seeds=warm)
        # warm start the next cell from this cell's broken branch
        warm = (cell.alpha,) if cell.alpha != 0 else ()
        cells.append(cell)
    return cells


def scan_phase_diagram(
    j_grid, g_grid, delta_mode=BAND_BOTTOM, opts=None, n_levels=fock.DEFAULT_LEVELS,
    base=None, delta=0.0, grid=None, workers=1,
):
    """Cells ordered with G outer and J inner.

    Rows (fixed G) are the parallel unit; within a row, each cell also seeds
    from its left neighbour's broken branch.  The result does not depend on
    ``workers``.
    """
    j_grid = [float(x) for x in j_grid]
    g_grid = [float(x) for x in g_grid]
    if not j_grid or not g_grid:
        raise ValueError("grids must be nonempty")
    if np.any(np.diff(j_grid) <= 0) or np.any(np.diff(g_grid) <= 0):
        raise ValueError("grids must be strictly ascending")
    opts = opts or SolverOptions()
    tasks = [(g, j_grid, delta_mode, delta, base, opts, n_levels, grid) for g in g_grid]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_row, tasks))
    else:
        rows = [_scan_row(t) for t in tasks]
    return [c for row in rows for c in row]


def write_phase_csv(cells, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PHASE_HEADER)
        for c in cells:
            w.writerow(c.row())


def _broken_alpha(params, opts, n_levels, seeds):
    found = search_branches(params, opts, n_levels, extra_seeds=seeds)
    if len(found.branches) == 2:
        return found.branches[1].alpha
    return None


def detect_jc(
    g, delta_mode=BAND_BOTTOM, j_bracket=(0.05, 1.0), tol=1e-4, opts=None,
    n_levels=fock.DEFAULT_LEVELS, base=None, delta=0.0,
):
    """Bisect J on the appearance of a broken-symmetry branch."""
    opts = opts or SolverOptions()
    lo, hi = map(float, j_bracket)
    p = _base(base, g, delta_mode, delta)
    if _broken_alpha(p.with_j(lo), opts, n_levels, ()) is not None:
        raise NoSignChange(f"broken branch already present at J={lo}")
    a_hi = _broken_alpha(p.with_j(hi), opts, n_levels, ())
    if a_hi is None:
        raise NoSignChange(f"no broken branch at J={hi}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        a = _broken_alpha(p.with_j(mid), opts, n_levels, (a_hi,))
        if a is None:
            lo = mid
        else:
            hi, a_hi = mid, a
    return 0.5 * (lo + hi)


def _golden_min(fun, lo, hi, tol):
    inv = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - inv * (hi - lo), lo + inv * (hi - lo)
    fc, fd = fun(c), fun(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = fun(d)
    return (c, fc) if fc < fd else (d, fd)


def _loglog_fit(js, amps, j_c):
    x = np.log(js - j_c)
    y = np.log(amps)
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    rms = float(np.sqrt(np.mean((design @ coef - y) ** 2)))
    return coef, rms


def fit_beta(
    g, delta_mode=BAND_BOTTOM, j_c_init=None, window_decades=1.5, n_points=25, opts=None,
    n_levels=fock.DEFAULT_LEVELS, base=None, delta=0.0, start=1e-4, first_order_factor=10.0,
):
    """Fit ``|alpha| = A (J - J_c)^beta`` just above the onset.

    ``n_points`` values of ``J - j_c_init`` log-spaced over ``window_decades``
    from ``start``.  ``J_c`` is refined by golden-section search within
    +-5% of ``j_c_init`` (and below the smallest sampled J); ``log A`` and
    ``beta`` come from linear least squares at each trial ``J_c``.

    First-order test: the order parameter at ``j_c_init + start/100`` is
    compared with a ``beta = 1/2`` extrapolation of the window data; more
    than ``first_order_factor`` times larger means a jump, and no beta is
    reported.
    """
    opts = opts or SolverOptions()
    p = _base(base, g, delta_mode, delta)
    if j_c_init is None:
        j_c_init = detect_jc(g, delta_mode, opts=opts, n_levels=n_levels, base=base, delta=delta)
    offsets = np.logspace(np.log10(start), np.log10(start) + window_decades, n_points)
    js = j_c_init + offsets
    amps = []
    seeds = ()
    for j in js[::-1]:  # from deep in the broken phase towards the onset
        a = _broken_alpha(p.with_j(j), opts, n_levels, seeds)
        if a is None:
            raise FitDiverged(f"no broken branch at J={j:.8g} inside the fit window")
        amps.append(abs(a))
        seeds = (a,)
    amps = np.array(amps[::-1])

    on = _broken_alpha(p.with_j(j_c_init + start * 1e-2), opts, n_levels, seeds)
    onset = abs(on) if on is not None else 0.0
    amp_half = np.median(amps / np.sqrt(offsets))
    ratio = onset / (amp_half * np.sqrt(start * 1e-2))
    samples = list(zip(offsets.tolist(), amps.tolist()))
    if ratio > first_order_factor:
        coef, rms = _loglog_fit(js, amps, j_c_init)
        return CriticalFit(
            g, j_c_init, None, float(np.exp(coef[0])), rms, (js[0], js[-1]),
            first_order=True, onset_ratio=float(ratio), samples=samples,
        )

    lo = j_c_init - 0.05 * abs(j_c_init)
    hi = min(j_c_init + 0.05 * abs(j_c_init), js[0] - 1e-3 * offsets[0])
    gtol = 1e-3 * offsets[0]
    jc, rms = _golden_min(lambda c: _loglog_fit(js, amps, c)[1], lo, hi, gtol)
    if min(jc - lo, hi - jc) < 2 * gtol:
        raise FitDiverged(f"residual minimum at the edge of the J_c search interval (J_c={jc:.8g})")
    coef, rms = _loglog_fit(js, amps, jc)
    beta = float(coef[1])
    if not np.isfinite(rms) or beta <= 0:
        raise FitDiverged(f"unphysical fit beta={beta}")
    return CriticalFit(
        g, float(jc), beta, float(np.exp(coef[0])), rms, (js[0], js[-1]),
        onset_ratio=float(ratio), samples=[(j - jc, a) for j, a in zip(js, amps)],
    )


@dataclass
class Bistability:
    n_branches: int
    symmetric_max_im: float
    symmetric_stable: bool
    broken_alpha: complex = 0j

    def __bool__(self):
        return self.n_branches == 2 and self.symmetric_stable


def detect_bistability(params, opts=None, n_levels=fock.DEFAULT_LEVELS, grid=None):
    """Both branches present while the symmetric one is linearly stable."""
    cell = evaluate_cell(params, opts, n_levels, grid)
    return Bistability(
        n_branches=cell.n_branches,
        symmetric_max_im=cell.max_im_omega,
        symmetric_stable=bool(cell.max_im_omega < 0),
        broken_alpha=cell.alpha,
    )

