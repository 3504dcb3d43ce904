"""Command-line entry point.

    kerrlattice <steady|stability|dynamics|sweep|wigner|fit> --config run.toml --out DIR

Each run writes its data files (CSV or JSON), ``meta.json`` and a small
companion ``plot_<command>.py`` into the output directory.  Exit codes:
0 success, 2 configuration error, 3 numerical failure (partial output kept).
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__, fock
from .config import ConfigError, as_complex, load_config
from .dynamics import (
    PositivityLost,
    StepSizeUnderflow,
    classify_endpoint,
    coherent_initial_state,
    evolve,
)
from .observables import default_window, occupation, purity, wigner
from .stability import NoSignChange, StationaryModeAmbiguous, excitation_spectrum
from .steadystate import DegenerateSteadyState, NoConvergence, search_branches
from .sweep import PHASE_HEADER, FitDiverged, detect_jc, fit_beta, fmt, scan_phase_diagram

__all__ = ["main", "BranchUnavailable", "COMMANDS"]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
NUMERICAL_ERRORS = (
    DegenerateSteadyState, NoConvergence, StationaryModeAmbiguous, PositivityLost,
    StepSizeUnderflow, fock.TruncationError, FitDiverged, NoSignChange,
)


class BranchUnavailable(RuntimeError):
    pass


@dataclass
class Table:
    header: list
    rows: list = field(default_factory=list)
    comments: list = field(default_factory=list)  # "# key=value" lines above the header


@dataclass
class Result:
    tables: dict = field(default_factory=dict)  # file stem -> Table
    summary: dict = field(default_factory=dict)  # scalars compared by --check-truncation
    failures: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return fmt(x)
    return str(x)


def _json_value(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def write_table(table, path_stem, fmt_name):
    if fmt_name == "json":
        path = path_stem + ".json"
        payload = {
            "metadata": dict(c.split("=", 1) for c in table.comments),
            "columns": table.header,
            "rows": [[_json_value(v) for v in row] for row in table.rows],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
        return path
    path = path_stem + ".csv"
    with open(path, "w", newline="") as fh:
        for c in table.comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.header)
        for row in table.rows:
            w.writerow([_cell(v) for v in row])
    return path


# --- subcommands -------------------------------------------------------------


def _j_list(values, cfg):
    return [float(j) for j in values] if values else [cfg.model.j]


def run_steady(cfg, n_levels, fixed_step=False):
    params = cfg.model_params()
    opts = cfg.solver_options()
    res = Result()
    t = Table(["j", "g", "branch", "re_alpha", "im_alpha", "n", "purity", "residual", "iterations", "flags"])
    warm = ()
    for j in _j_list(cfg.steady.j_values, cfg):
        p = params.with_j(j)
        try:
            found = search_branches(p, opts, n_levels, extra_seeds=warm)
        except NUMERICAL_ERRORS as exc:
            res.failures.append(f"J={j}: {exc}")
            t.rows.append([j, cfg.model.g, "", None, None, None, None, None, None, "failed"])
            continue
        flag = "undecided" if found.failed_seeds else "converged"
        if found.failed_seeds:
            res.failures.append(f"J={j}: seeds {found.failed_seeds} did not converge")
        for b in found.branches:
            t.rows.append([
                j, cfg.model.g, b.branch.value, b.alpha.real, b.alpha.imag,
                occupation(b.rho), purity(b.rho), b.residual, b.iterations, flag,
            ])
        sel = found.branches[-1]
        warm = (sel.alpha,) if len(found.branches) == 2 else ()
        res.summary[f"abs_alpha[J={j:g}]"] = abs(sel.alpha)
        res.summary[f"n[J={j:g}]"] = occupation(sel.rho)
    res.tables["steady"] = t
    return res


def run_stability(cfg, n_levels, fixed_step=False):
    params = cfg.model_params()
    grid = cfg.momentum_grid()
    res = Result(meta={"stability_formulation": "conjugate-channel"})
    disp = Table(["j", "g", "k", "max_im_at_k"])
    summ = Table(["j", "g", "max_im", "argmax_k"])
    for j in _j_list(cfg.stability.j_values, cfg):
        try:
            spec = excitation_spectrum(
                params.with_j(j), grid, n_levels,
                method=cfg.numerics.stability_method, n_modes=cfg.numerics.n_modes,
            )
        except NUMERICAL_ERRORS as exc:
            res.failures.append(f"J={j}: {exc}")
            summ.rows.append([j, cfg.model.g, None, None])
            continue
        for k, im in zip(spec.k_values, spec.least_stable):
            disp.rows.append([j, cfg.model.g, float(k), float(im)])
        summ.rows.append([j, cfg.model.g, spec.max_im, spec.argmax_k])
        res.summary[f"max_im[J={j:g}]"] = spec.max_im
    res.tables["dispersion"] = disp
    res.tables["summary"] = summ
    return res


def run_dynamics(cfg, n_levels, fixed_step=False):
    params = cfg.model_params()
    iopts = cfg.integrator_options(fixed_step=fixed_step)
    res = Result(meta={"integrator_method": iopts.method})
    ends = Table([
        "idx", "re_alpha0", "im_alpha0", "class", "t_end", "re_alpha", "im_alpha", "n", "purity",
        "early_stopped", "trace_drift", "flags",
    ])
    for idx, a0 in enumerate(cfg.dynamics.alpha0):
        a0 = as_complex(a0)
        try:
            traj = evolve(
                params, coherent_initial_state(a0, n_levels, cfg.numerics.truncation_tol), iopts
            )
        except NUMERICAL_ERRORS as exc:
            res.failures.append(f"alpha0={a0}: {exc}")
            ends.rows.append([idx, a0.real, a0.imag, "", None, None, None, None, None, None, None,
                              type(exc).__name__])
            continue
        cls = classify_endpoint(traj, cfg.dynamics.threshold)
        tt = Table(["t", "re_alpha", "im_alpha", "n", "purity"])
        tt.rows = [list(map(float, r)) for r in traj.rows()]
        res.tables[f"traj_{idx}"] = tt
        a_end = traj.alphas[-1]
        ends.rows.append([
            idx, a0.real, a0.imag, cls.value, float(traj.times[-1]), a_end.real, a_end.imag,
            float(traj.occupations[-1]), float(traj.purities[-1]), traj.early_stopped,
            traj.trace_drift, "",
        ])
        res.summary[f"abs_alpha_end[{idx}]"] = abs(a_end)
        res.summary[f"purity_end[{idx}]"] = float(traj.purities[-1])
    res.tables["endpoints"] = ends
    return res


def _sweep_grids(cfg):
    s = cfg.sweep
    return np.linspace(s.j_min, s.j_max, s.n_j), np.linspace(s.g_min, s.g_max, s.n_g)


def run_sweep(cfg, n_levels, fixed_step=False):
    params = cfg.model_params()
    js, gs = _sweep_grids(cfg)
    res = Result()
    cells = scan_phase_diagram(
        js, gs, params.delta_mode, cfg.solver_options(), n_levels, base=params,
        delta=params.delta, grid=cfg.momentum_grid(), workers=cfg.workers,
    )
    t = Table(list(PHASE_HEADER))
    for c in cells:
        t.rows.append([
            c.j, c.g, c.order_parameter, c.occupation, c.purity, c.max_im_omega, c.argmax_k,
            c.n_branches, ";".join(sorted(c.flags)),
        ])
        if "Converged" not in c.flags:
            res.failures.append(f"cell J={c.j:g} G={c.g:g}: {sorted(c.flags)}")
    res.tables["phase"] = t
    res.summary["n_broken_cells"] = float(sum(c.n_branches == 2 for c in cells))
    res.summary["n_unstable_cells"] = float(sum(c.max_im_omega > 0 for c in cells))
    if cfg.sweep.boundary:
        b = Table(["g", "j_c", "flags"])
        for g in gs:
            try:
                jc = detect_jc(
                    g, params.delta_mode, (cfg.sweep.j_min, cfg.sweep.j_max), cfg.sweep.boundary_tol,
                    cfg.solver_options(), n_levels, base=params, delta=params.delta,
                )
                b.rows.append([g, jc, ""])
                res.summary[f"j_c[G={g:g}]"] = jc
            except NoSignChange as exc:
                b.rows.append([g, None, "no_transition_in_range"])
                log.info("G=%g: %s", g, exc)
        res.tables["boundary"] = b
    return res


def run_wigner(cfg, n_levels, fixed_step=False):
    params = cfg.model_params()
    found = search_branches(params, cfg.solver_options(), n_levels)
    if found.failed_seeds:
        raise NoConvergence(f"seeds {found.failed_seeds} did not converge")
    if cfg.wigner.branch == "broken":
        if len(found.branches) < 2:
            raise BranchUnavailable("no broken-symmetry branch at these parameters")
        b = found.branches[1]
    else:
        b = found.branches[0]
    half = cfg.wigner.half_width or default_window(b.rho)
    xs = np.linspace(-half, half, cfg.wigner.n_points)
    wm = wigner(b.rho, (xs, xs))
    t = Table(["re_z", "im_z", "w"])
    for i, y in enumerate(wm.im_grid):
        for j, x in enumerate(wm.re_grid):
            t.rows.append([float(x), float(y), float(wm.values[i, j])])
    t.comments = [
        f"branch={b.branch.value}",
        f"re_alpha={fmt(b.alpha.real)}",
        f"im_alpha={fmt(b.alpha.imag)}",
        f"half_width={fmt(half)}",
        f"n_points={cfg.wigner.n_points}",
        f"normalization_defect={fmt(wm.normalization_defect)}",
    ]
    res = Result(tables={"wigner": t})
    res.summary["w_max"] = float(wm.values.max())
    res.meta["normalization_defect"] = wm.normalization_defect
    return res


def run_fit(cfg, n_levels, fixed_step=False):
    params = cfg.model_params()
    f = cfg.fit
    opts = cfg.solver_options()
    res = Result()
    t = Table([
        "g", "j_c", "beta", "amplitude", "residual", "window_min", "window_max", "first_order",
        "onset_ratio", "flags",
    ])
    pts = Table(["g", "j_minus_jc", "abs_alpha"])
    for g in f.g_values:
        g = float(g)
        try:
            jc0 = detect_jc(g, params.delta_mode, tuple(f.j_bracket), f.jc_tol, opts, n_levels,
                            base=params, delta=params.delta)
            fit = fit_beta(g, params.delta_mode, jc0, f.window_decades, f.n_points, opts, n_levels,
                           base=params, delta=params.delta, start=f.start)
        except NUMERICAL_ERRORS as exc:
            res.failures.append(f"G={g}: {exc}")
            t.rows.append([g, None, None, None, None, None, None, None, None, type(exc).__name__])
            continue
        t.rows.append([
            g, fit.j_c, fit.beta, fit.amplitude, fit.residual, fit.window[0], fit.window[1],
            fit.first_order, fit.onset_ratio, "",
        ])
        for d, a in fit.samples:
            pts.rows.append([g, d, a])
        res.summary[f"j_c[G={g:g}]"] = fit.j_c
        if fit.beta is not None:
            res.summary[f"beta[G={g:g}]"] = fit.beta
    res.tables["fit"] = t
    res.tables["fit_points"] = pts
    return res


COMMANDS = {
    "steady": run_steady,
    "stability": run_stability,
    "dynamics": run_dynamics,
    "sweep": run_sweep,
    "wigner": run_wigner,
    "fit": run_fit,
}

PLOT_SCRIPTS = {
    "steady": """
d = np.genfromtxt("steady.csv", delimiter=",", names=True, dtype=None, encoding=None)
for br in ("symmetric", "broken"):
    s = d[d["branch"] == br]
    plt.plot(s["j"], np.hypot(s["re_alpha"], s["im_alpha"]) ** 2, "o", label=f"|alpha|^2 {br}")
    plt.plot(s["j"], s["n"], "x", label=f"n {br}")
plt.xlabel("J"); plt.legend()
""",
    "stability": """
d = np.genfromtxt("dispersion.csv", delimiter=",", names=True)
for j in np.unique(d["j"]):
    s = d[d["j"] == j]
    plt.plot(s["k"], s["max_im_at_k"], label=f"J={j:g}")
plt.axhline(0, color="k", lw=0.5); plt.xlabel("k"); plt.ylabel("Im w_k"); plt.legend()
""",
    "dynamics": """
import glob
fig, (ax1, ax2) = plt.subplots(1, 2)
for f in sorted(glob.glob("traj_*.csv")):
    d = np.genfromtxt(f, delimiter=",", names=True)
    ax1.plot(d["re_alpha"], d["im_alpha"])
    ax2.semilogx(d["t"][1:], d["purity"][1:])
ax1.set_xlabel("Re <a>"); ax1.set_ylabel("Im <a>"); ax2.set_xlabel("t"); ax2.set_ylabel("purity")
""",
    "sweep": """
d = np.genfromtxt("phase.csv", delimiter=",", names=True, dtype=None, encoding=None)
js, gs = np.unique(d["j"]), np.unique(d["g"])
op = d["order_parameter"].reshape(len(gs), len(js))
plt.pcolormesh(js, gs, op, shading="nearest")
plt.contour(js, gs, d["max_im_omega"].reshape(len(gs), len(js)), levels=[0], colors="w")
plt.xlabel("J"); plt.ylabel("G"); plt.colorbar(label="|<a>|")
""",
    "wigner": """
d = np.genfromtxt("wigner.csv", delimiter=",", names=True, comments="#")
x, y = np.unique(d["re_z"]), np.unique(d["im_z"])
plt.pcolormesh(x, y, d["w"].reshape(len(y), len(x)), shading="nearest", cmap="RdBu_r")
plt.gca().set_aspect("equal"); plt.xlabel("Re z"); plt.ylabel("Im z"); plt.colorbar(label="W")
""",
    "fit": """
d = np.genfromtxt("fit_points.csv", delimiter=",", names=True)
for g in np.unique(d["g"]):
    s = d[d["g"] == g]
    plt.loglog(s["j_minus_jc"], s["abs_alpha"], "o", label=f"G={g:g}")
plt.xlabel("J - J_c"); plt.ylabel("|<a>|"); plt.legend()
""",
}


def _write_plot_script(out, cmd):
    body = PLOT_SCRIPTS[cmd].strip("\n")
    text = (
        f"# Companion plot for `kerrlattice {cmd}`; run from this directory.\n"
        "import numpy as np\nimport matplotlib.pyplot as plt\n\n"
        f"{body}\nplt.savefig(\"{cmd}.png\", dpi=150)\n"
    )
    with open(os.path.join(out, f"plot_{cmd}.py"), "w") as fh:
        fh.write(text)


def _drift(base, other):
    report = {}
    for key, v in base.items():
        if key in other and math.isfinite(v) and math.isfinite(other[key]):
            report[key] = abs(other[key] - v) / max(abs(v), 1e-12)
    return report


def build_parser():
    ap = argparse.ArgumentParser(prog="kerrlattice", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="TOML run configuration (defaults apply when omitted)")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--workers", type=int, help="worker processes (overrides workers)")
    ap.add_argument("--check-truncation", action="store_true",
                    help="repeat the run with n_levels + 10 and report the relative drift")
    ap.add_argument("--fixed-step", action="store_true",
                    help="fixed-step RK4 integration (bitwise reproducible dynamics)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.output = replace(cfg.output, directory=args.out)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.workers = args.workers
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = cfg.output.directory
    os.makedirs(out, exist_ok=True)
    n = cfg.numerics.n_levels
    run = COMMANDS[args.command]
    t0 = time.time()
    status = EXIT_OK
    meta = {
        "command": args.command,
        "version": __version__,
        "config": cfg.to_dict(),
        "flags": {"check_truncation": args.check_truncation, "fixed_step": args.fixed_step},
    }
    try:
        res = run(cfg, n, args.fixed_step)
    except (BranchUnavailable, *NUMERICAL_ERRORS) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        res = Result(failures=[f"{type(exc).__name__}: {exc}"])
    for stem, table in res.tables.items():
        write_table(table, os.path.join(out, stem), cfg.output.format)
    if res.tables:
        _write_plot_script(out, args.command)

    truncation = None
    if args.check_truncation and res.summary:
        try:
            hi = run(cfg, n + 10, args.fixed_step)
            drift = _drift(res.summary, hi.summary)
            truncation = {
                "n_levels": [n, n + 10],
                "relative_drift": drift,
                "max_relative_drift": max(drift.values()) if drift else None,
            }
        except (BranchUnavailable, *NUMERICAL_ERRORS) as exc:
            truncation = {"n_levels": [n, n + 10], "error": f"{type(exc).__name__}: {exc}"}
    if res.failures:
        status = EXIT_NUMERICAL
        for f in res.failures:
            print(f"failure: {f}", file=sys.stderr)
    meta.update(res.meta)
    meta["truncation"] = truncation
    meta["failures"] = res.failures
    meta["exit_code"] = status
    meta["wall_time_s"] = time.time() - t0
    meta["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(os.path.join(out, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, default=str)
        fh.write("\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
