"""Run configuration: TOML file -> typed, fully resolved settings.

Every key has a default (see ``docs/config.md``); unknown sections or keys
raise ConfigError.
"""

import sys
from dataclasses import asdict, dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import IntegratorOptions
from .lindblad import BAND_BOTTOM, FIXED, ModelParams
from .stability import MomentumGrid
from .steadystate import DEFAULT_SEEDS, SolverOptions

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    delta: float = 0.0
    u: float = 1.0
    g: float = 0.0
    j: float = 0.0
    kappa: float = 1.0
    eta: float = 1.0
    delta_mode: str = FIXED


@dataclass
class NumericsSection:
    n_levels: int = 40
    truncation_tol: float = 1e-8
    n_k: int = 65
    stability_method: str = "arnoldi"
    n_modes: int = 4


@dataclass
class SolverSection:
    mixing: float = 0.5
    max_iter: int = 400
    tol: float = 1e-10
    seeds: list = field(default_factory=lambda: [[s.real, s.imag] for s in DEFAULT_SEEDS])
    newton_fallback: bool = True
    symmetric_threshold: float = 1e-6
    dedupe_tol: float = 1e-6
    stall_window: int = 20
    capture_radius: float = 1e-3


@dataclass
class IntegratorSection:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.0  # 0 selects the method default
    t_max: float = 100.0
    record_interval: float = 0.1
    fixed_point_tol: float = 1e-8
    method: str = "bdf"
    fixed_step: float = 1e-3
    stop_records: int = 10


@dataclass
class SteadySection:
    j_values: list = field(default_factory=list)  # empty: use model.j


@dataclass
class StabilitySection:
    j_values: list = field(default_factory=list)


@dataclass
class DynamicsSection:
    alpha0: list = field(default_factory=lambda: [0.5])  # numbers or [re, im] pairs
    threshold: float = 1e-3


@dataclass
class SweepSection:
    j_min: float = 0.05
    j_max: float = 1.0
    n_j: int = 30
    g_min: float = 0.5
    g_max: float = 8.0
    n_g: int = 30
    boundary: bool = False
    boundary_tol: float = 1e-4


@dataclass
class WignerSection:
    branch: str = "symmetric"
    n_points: int = 101
    half_width: float = 0.0  # 0 selects max(3, 2 sqrt(n))


@dataclass
class FitSection:
    g_values: list = field(default_factory=lambda: [3.0])
    j_bracket: list = field(default_factory=lambda: [0.05, 1.0])
    jc_tol: float = 1e-7
    window_decades: float = 1.5
    n_points: int = 25
    start: float = 1e-4


@dataclass
class OutputSection:
    directory: str = "out"
    format: str = "csv"


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    solver: SolverSection = field(default_factory=SolverSection)
    integrator: IntegratorSection = field(default_factory=IntegratorSection)
    steady: SteadySection = field(default_factory=SteadySection)
    stability: StabilitySection = field(default_factory=StabilitySection)
    dynamics: DynamicsSection = field(default_factory=DynamicsSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    wigner: WignerSection = field(default_factory=WignerSection)
    fit: FitSection = field(default_factory=FitSection)
    output: OutputSection = field(default_factory=OutputSection)
    workers: int = 1

    def to_dict(self):
        return asdict(self)

    # typed views -----------------------------------------------------------
    def model_params(self):
        m = self.model
        return ModelParams(
            delta=m.delta, u=m.u, g=m.g, j=m.j, kappa=m.kappa, eta=m.eta, delta_mode=m.delta_mode
        )

    def solver_options(self):
        s = self.solver
        return SolverOptions(
            mixing=s.mixing, max_iter=s.max_iter, tol=s.tol,
            seeds=tuple(as_complex(x) for x in s.seeds),
            newton_fallback=s.newton_fallback, symmetric_threshold=s.symmetric_threshold,
            dedupe_tol=s.dedupe_tol, stall_window=s.stall_window, capture_radius=s.capture_radius,
        )

    def integrator_options(self, fixed_step=False):
        i = self.integrator
        return IntegratorOptions(
            rel_tol=i.rel_tol, abs_tol=i.abs_tol, max_step=i.max_step or None, t_max=i.t_max,
            record_interval=i.record_interval, fixed_point_tol=i.fixed_point_tol,
            method="rk4" if fixed_step else i.method, fixed_step=i.fixed_step,
            stop_records=i.stop_records,
        )

    def momentum_grid(self):
        return MomentumGrid(n_k=self.numerics.n_k)


def as_complex(x):
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ConfigError(f"complex values are [re, im] pairs, got {x!r}")
        return complex(float(x[0]), float(x[1]))
    return complex(float(x))


_NUMBER = (int, float)


def _coerce(name, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, _NUMBER):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list")
        return value
    raise ConfigError(f"cannot interpret {name}")


def _fill(section_obj, data, prefix):
    known = {f.name: f for f in fields(section_obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {prefix}{key}")
        setattr(section_obj, key, _coerce(prefix + key, getattr(section_obj, key), value))


def _validate(cfg):
    if cfg.model.delta_mode not in (FIXED, BAND_BOTTOM):
        raise ConfigError(f"model.delta_mode must be {FIXED!r} or {BAND_BOTTOM!r}")
    if cfg.output.format not in ("csv", "json"):
        raise ConfigError("output.format must be 'csv' or 'json'")
    if cfg.wigner.branch not in ("symmetric", "broken"):
        raise ConfigError("wigner.branch must be 'symmetric' or 'broken'")
    if cfg.numerics.stability_method not in ("arnoldi", "dense"):
        raise ConfigError("numerics.stability_method must be 'arnoldi' or 'dense'")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    if len(cfg.fit.j_bracket) != 2:
        raise ConfigError("fit.j_bracket must have two entries")
    try:
        cfg.model_params()
        cfg.solver_options()
        cfg.integrator_options()
        cfg.momentum_grid()
        for x in cfg.dynamics.alpha0:
            as_complex(x)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(data):
    """Build a RunConfig from a parsed mapping (e.g. TOML)."""
    cfg = RunConfig()
    for key, value in data.items():
        if key == "workers":
            cfg.workers = _coerce("workers", 1, value)
            continue
        if key not in {f.name for f in fields(cfg)} or not isinstance(value, dict):
            raise ConfigError(f"unknown section or key {key!r}")
        _fill(getattr(cfg, key), value, key + ".")
    _validate(cfg)
    return cfg


def load_config(path=None):
    if path is None:
        return parse_config({})
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)
