"""Run configuration: dataclasses, YAML loading, validation, presets.

Every run is described by one RunConfig tree.  YAML files may specify any
subset of the keys; everything else takes the defaults below.  Validation
collects *all* problems with dotted paths before failing, so a bad config
surfaces completely in one pass.
"""
from __future__ import annotations

import copy
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

ENV_OUTPUT_ROOT = "PVB_OUTPUT_ROOT"


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class GridConfig:
    length: float = 200.0
    npts: int = 1000
    x_min: float | None = None


@dataclass
class BasisConfig:
    alpha: float = 1.0
    sigma_x: float | None = None
    x_offset: float | None = None      # None -> golden-ratio default
    p_offset: float | None = None
    images: int = 3


@dataclass
class ModelConfig:
    kind: str = "he1d"                 # he1d | soft_atom_1e | harmonic
    a0: float = 0.739707902
    q_e: float = -1.0
    m_e: float = 1.0
    nuclear_q: float | None = None
    sop_tol: float | None = None       # None -> W/10 of the active mode
    sop_max_rank: int | None = None
    omega: float = 1.0                 # harmonic test model


@dataclass
class XuvConfig:
    center: float
    amplitude: float = 0.00176
    period: float = 2.07
    sigma: float = 6.207
    scale: float = 1.0


@dataclass
class PulsesConfig:
    nir_enabled: bool = False
    nir_amplitude: float = 0.6627
    nir_period: float = 110.32
    xuv: list = field(default_factory=list)


@dataclass
class EigenSection:
    W: float = 1e-4
    target: int = 0
    wrap_x: bool = False
    stop_threshold: float | None = None
    max_iterations: int = 400
    max_cells: int = 300_000
    dense_cutoff: int = 900
    expand_radius: int = 1


@dataclass
class PropagateSection:
    t0: float = 0.0
    t1: float = 441.28
    dt0: float = 0.05
    W: float = 1e-3
    taylor_order: int = 6
    norm_tol: float = 1e-8
    growth_threshold: float | None = None
    expand_radius: int = 1
    remove_patience: int = 3
    quiet_steps: int = 5
    dt_grow: float = 1.2
    dt_max: float | None = 0.1035      # a twentieth of the attosecond period
    dt_min: float = 1e-8
    wrap_x: bool = True
    max_cells: int = 500_000
    edge_action: str = "abort"
    checkpoint_every: int = 0


@dataclass
class AnalyzeSection:
    x_r: float = 30.0
    axes: str = "pp"                   # two of {x,p}, one per dimension
    filter: str = "double"             # double | none | bound | any-bound
    mode: str = "amplitude"            # amplitude | l2
    input: str | None = None           # state container to analyze


@dataclass
class RunConfig:
    run_name: str = "run"
    mode: str = "eigen"                # eigen|propagate|analyze|oracle-compare|bench|to-matrix
    outdir: str | None = None          # None -> $PVB_OUTPUT_ROOT or ./runs
    threads: int = 1
    strict: bool = False
    resume: bool = False
    cache_dir: str | None = None
    grid: GridConfig = field(default_factory=GridConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pulses: PulsesConfig = field(default_factory=PulsesConfig)
    eigen: EigenSection = field(default_factory=EigenSection)
    propagate: PropagateSection = field(default_factory=PropagateSection)
    analyze: AnalyzeSection = field(default_factory=AnalyzeSection)

    def output_dir(self) -> Path:
        root = self.outdir or os.environ.get(ENV_OUTPUT_ROOT) or "runs"
        return Path(root) / self.run_name


_MODES = {"eigen", "propagate", "analyze", "oracle-compare", "bench", "to-matrix"}


def _convert(val, annotation: str, path: str, problems: list):
    """Coerce scalars to the annotated type.

    YAML 1.1 floats need a decimal point (``1e-8`` reads as a string), so
    numeric fields accept strings and convert by annotation.
    """
    if val is None:
        return None
    ann = annotation or ""
    if "bool" in ann:
        if isinstance(val, bool):
            return val
        if isinstance(val, str) and val.lower() in ("true", "false", "yes", "no", "1", "0"):
            return val.lower() in ("true", "yes", "1")
        problems.append(f"{path}: expected a boolean, got {val!r}")
        return val
    if "float" in ann:
        try:
            return float(val)
        except (TypeError, ValueError):
            problems.append(f"{path}: expected a number, got {val!r}")
            return val
    if "int" in ann:
        try:
            return int(val)
        except (TypeError, ValueError):
            problems.append(f"{path}: expected an integer, got {val!r}")
            return val
    return val


def _fill(cls, data, path, problems):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        problems.append(f"{path}: expected a mapping, got {type(data).__name__}")
        return cls()
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, val in data.items():
        if key not in names:
            problems.append(f"{path}.{key}: unknown key")
            continue
        f = names[key]
        nested = None
        if f.default_factory is not dataclasses.MISSING:
            probe = f.default_factory()
            if dataclasses.is_dataclass(probe):
                nested = type(probe)
        if nested is not None:
            kwargs[key] = _fill(nested, val, f"{path}.{key}", problems)
        elif key == "xuv":
            items = []
            if not isinstance(val, list):
                problems.append(f"{path}.xuv: expected a list")
            else:
                for i, item in enumerate(val):
                    items.append(_fill(XuvConfig, item, f"{path}.xuv[{i}]", problems))
            kwargs[key] = items
        else:
            kwargs[key] = _convert(val, str(f.type), f"{path}.{key}", problems)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        problems.append(f"{path}: {exc}")
        return cls()


def config_from_dict(data: dict) -> RunConfig:
    problems: list[str] = []
    cfg = _fill(RunConfig, data, "config", problems)
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return config_from_dict(data)


def validate(cfg: RunConfig) -> list[str]:
    p = []
    if cfg.mode not in _MODES:
        p.append(f"config.mode: {cfg.mode!r} not one of {sorted(_MODES)}")
    if cfg.grid.length <= 0:
        p.append("config.grid.length: must be positive")
    if cfg.grid.npts < 2:
        p.append("config.grid.npts: need at least 2 points")
    if cfg.basis.alpha <= 0:
        p.append("config.basis.alpha: must be positive")
    if cfg.basis.images < 1:
        p.append("config.basis.images: need at least 1 periodic image")
    if cfg.model.kind not in {"he1d", "soft_atom_1e", "harmonic"}:
        p.append(f"config.model.kind: unknown model {cfg.model.kind!r}")
    if cfg.eigen.W <= 0:
        p.append("config.eigen.W: threshold must be positive")
    if cfg.propagate.W <= 0:
        p.append("config.propagate.W: threshold must be positive")
    if cfg.propagate.t1 < cfg.propagate.t0:
        p.append("config.propagate.t1: end time precedes t0")
    if cfg.propagate.taylor_order < 1:
        p.append("config.propagate.taylor_order: must be >= 1")
    if cfg.propagate.edge_action not in {"abort", "continue"}:
        p.append("config.propagate.edge_action: must be 'abort' or 'continue'")
    if cfg.analyze.mode not in {"amplitude", "l2"}:
        p.append("config.analyze.mode: must be 'amplitude' or 'l2'")
    if cfg.analyze.filter not in {"double", "none", "bound", "any-bound"}:
        p.append("config.analyze.filter: unknown filter")
    if len(cfg.analyze.axes) != 2 or any(a not in "xp" for a in cfg.analyze.axes):
        p.append("config.analyze.axes: two characters from {x,p}")
    if cfg.threads < 1:
        p.append("config.threads: must be >= 1")
    for i, x in enumerate(cfg.pulses.xuv):
        if x.period <= 0:
            p.append(f"config.pulses.xuv[{i}].period: must be positive")
        if x.sigma <= 0:
            p.append(f"config.pulses.xuv[{i}].sigma: must be positive")
    return p


# ---------------------------------------------------------------------------
# presets

def preset_groundstate() -> RunConfig:
    """Helium ground state on the production box, threshold 1e-4."""
    cfg = RunConfig(run_name="he1d-groundstate", mode="eigen")
    cfg.grid = GridConfig(length=200.0, npts=1000)
    cfg.model = ModelConfig(kind="he1d", sop_tol=1e-5)
    cfg.eigen = EigenSection(W=1e-4)
    return cfg


def preset_dynamics_scaled() -> RunConfig:
    """Strong-field double-ionization run, scaled to a 200 a.u. box.

    NIR envelope plus two boosted attosecond pulses, one before and one
    after the NIR peak; the box wraps in x and the momentum rows comfortably
    cover the expected photoelectron momenta.
    """
    cfg = RunConfig(run_name="he1d-dynamics-scaled", mode="propagate")
    cfg.grid = GridConfig(length=200.0, npts=400)
    cfg.model = ModelConfig(kind="he1d", sop_tol=1e-4)
    cfg.eigen = EigenSection(W=1e-3)
    cfg.pulses = PulsesConfig(
        nir_enabled=True,
        xuv=[XuvConfig(center=215.0, scale=50.0),
             XuvConfig(center=255.0, scale=50.0)])
    cfg.propagate = PropagateSection(t0=0.0, t1=280.0, dt0=0.02, W=1e-3,
                                     checkpoint_every=2000)
    cfg.analyze = AnalyzeSection(x_r=30.0, axes="pp", filter="double")
    return cfg


PRESETS = {
    "he1d-paper-groundstate": preset_groundstate,
    "he1d-paper-dynamics-scaled": preset_dynamics_scaled,
}


def preset(name: str) -> RunConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError([f"unknown preset {name!r}; available: {sorted(PRESETS)}"])


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_copy(cfg: RunConfig) -> RunConfig:
    return copy.deepcopy(cfg)


def apply_overrides(cfg: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply ``section.key=value`` overrides (YAML-parsed values)."""
    problems = []
    for pair in pairs:
        if "=" not in pair:
            problems.append(f"override {pair!r}: expected key=value")
            continue
        key, val = pair.split("=", 1)
        parts = key.split(".")
        obj = cfg
        try:
            for part in parts[:-1]:
                obj = getattr(obj, part)
            leaf = parts[-1]
            if not hasattr(obj, leaf):
                raise AttributeError(leaf)
            ann = next((str(f.type) for f in dataclasses.fields(type(obj))
                        if f.name == leaf), "")
            setattr(obj, leaf, _convert(yaml.safe_load(val), ann, key, problems))
        except AttributeError:
            problems.append(f"override {key!r}: no such config field")
    problems += validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg
