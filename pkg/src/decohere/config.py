"""Scenario configuration: strict TOML with line-numbered errors.

Unknown sections or keys are errors, as are wrong types, nonpositive
physical parameters and missing referenced files. Relative file paths are
resolved against the config file's directory.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - depends on interpreter
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, msg: str, line: int | None = None, path: str | None = None):
        where = ""
        if path:
            where = f"{path}:"
        if line:
            where += f"{line}:"
        super().__init__(f"{where} {msg}" if where else msg)
        self.line = line


@dataclass
class SystemConfig:
    hbar: float = 1.0
    d_c: int = 2
    d_e: int | None = None  # optional consistency check against the built bath
    hamiltonian: str = "spin"  # spin | harmonic | tabulated
    mass: float = 1.0
    omega: float = 1.0
    file: str | None = None
    coupling_operator: str = "sz"  # sz | x
    initial: str = "plus"  # plus | gaussian | cat
    x0: float = 0.0
    p0: float = 0.0
    sigma: float | None = None  # default √(ħ/mω)
    separation: float = 6.0
    separation_axis: str = "x"  # x | p


@dataclass
class BathConfig:
    model: str = "none"  # none | spin_modes | oscillator | spectrum | tensor | gas
    temperature: float = 1.0
    frequencies: list = field(default_factory=list)
    couplings: list = field(default_factory=list)
    mode_truncation: int = 4
    form: str = "position_only"
    file: str | None = None
    gxx: float = 0.0
    gxp: float = 0.0
    gpp: float = 0.0
    epsilon: float | None = None
    omega_cutoff: float | None = None


@dataclass
class GridConfig:
    x_min: float = -10.0
    x_max: float = 10.0
    n_x: int = 256
    p_min: float | None = None
    p_max: float | None = None
    n_p: int | None = None

    @property
    def is_lattice(self) -> bool:
        return self.n_p is None


@dataclass
class EvolutionConfig:
    mode: str = "markov_master"
    t_final: float = 1.0
    dt: float = 0.01
    include_hamiltonian_flow: bool = True
    hbar_order: int = 2
    memory_time: float | None = None
    stationary_kernel: bool = False
    sample_every: int = 1


@dataclass
class AnalysisConfig:
    diagnostics: list = field(default_factory=list)  # coeffs | nogo | pointer | timescales
    delta_x: float = 1.0
    nogo_psi: int = 64
    nogo_rho: int = 256
    nogo_dim: int = 64


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_every: int = 0  # 0 = no Wigner snapshots


@dataclass
class GasConfig:
    model: str = "hard_sphere"  # hard_sphere | tabulated
    radius: float = 1.0
    k0: float | None = None
    temperature: float | None = None
    particle_mass: float = 1.0
    flux: float = 1.0
    theta_min: float = 0.0
    table: str | None = None  # two columns: θ, dσ/dΩ
    xi_max: float | None = None
    n_xi: int = 201


SECTIONS = {
    "system": SystemConfig,
    "bath": BathConfig,
    "grid": GridConfig,
    "evolution": EvolutionConfig,
    "analysis": AnalysisConfig,
    "output": OutputConfig,
    "gas": GasConfig,
}

CHOICES = {
    ("system", "hamiltonian"): ("spin", "harmonic", "tabulated"),
    ("system", "coupling_operator"): ("sz", "x"),
    ("system", "initial"): ("plus", "gaussian", "cat"),
    ("system", "separation_axis"): ("x", "p"),
    ("bath", "model"): ("none", "spin_modes", "oscillator", "spectrum", "tensor", "gas"),
    ("bath", "form"): ("position_only", "ladder"),
    ("evolution", "mode"): ("exact_oracle", "retarded_master", "markov_master",
                            "pure_decoherence_closed", "heat_kernel", "finite_difference",
                            "semiclassical"),
    ("gas", "model"): ("hard_sphere", "tabulated"),
}

POSITIVE = {
    ("system", "hbar"), ("system", "d_c"), ("system", "mass"), ("system", "omega"),
    ("system", "sigma"), ("system", "separation"),
    ("bath", "temperature"), ("bath", "mode_truncation"), ("bath", "epsilon"),
    ("bath", "omega_cutoff"),
    ("grid", "n_x"), ("grid", "n_p"),
    ("evolution", "dt"), ("evolution", "memory_time"), ("evolution", "sample_every"),
    ("analysis", "delta_x"), ("analysis", "nogo_psi"), ("analysis", "nogo_rho"),
    ("analysis", "nogo_dim"),
    ("gas", "radius"), ("gas", "k0"), ("gas", "temperature"), ("gas", "particle_mass"),
    ("gas", "flux"), ("gas", "xi_max"), ("gas", "n_xi"),
}

FILE_KEYS = {("system", "file"), ("bath", "file"), ("gas", "table")}


@dataclass
class ScenarioConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    bath: BathConfig = field(default_factory=BathConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    gas: GasConfig = field(default_factory=GasConfig)
    seed: int = 0
    source: str = ""  # path of the config file
    base_dir: str = "."
    raw_text: str = field(default="", repr=False)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def as_dict(self) -> dict:
        d = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        d["seed"] = self.seed
        return d

    @property
    def hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _line_of(text: str, section: str | None, key: str | None) -> int | None:
    """1-based line of `key` inside `[section]` (or of the section header)."""
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        ln = raw.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]", ln)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", ln):
            return i
    return None


def _type_ok(value, annotation: str) -> bool:
    ann = annotation.replace(" ", "")
    if value is None:
        return "None" in ann
    if isinstance(value, bool):
        return ann.startswith("bool")
    if ann.startswith("float"):
        return isinstance(value, (int, float))
    if ann.startswith("int"):
        return isinstance(value, int)
    if ann.startswith("str"):
        return isinstance(value, str)
    if ann.startswith("list"):
        return isinstance(value, list)
    return True


def _build_section(name: str, cls, data: dict, text: str, path: str):
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        line = _line_of(text, name, key)
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{name}]", line, path)
        ann = known[key].type if isinstance(known[key].type, str) else known[key].type.__name__
        if not _type_ok(value, ann):
            raise ConfigError(f"[{name}] {key} has type {type(value).__name__}, expected {ann}",
                              line, path)
        if ann.startswith("float") and isinstance(value, int):
            value = float(value)
        choices = CHOICES.get((name, key))
        if choices and value not in choices:
            raise ConfigError(f"[{name}] {key} = {value!r}; expected one of {', '.join(choices)}",
                              line, path)
        if (name, key) in POSITIVE and value is not None and not value > 0:
            raise ConfigError(f"[{name}] {key} must be positive, got {value}", line, path)
        if isinstance(value, list) and not all(isinstance(v, (int, float, str)) and not isinstance(v, bool)
                                               for v in value):
            raise ConfigError(f"[{name}] {key} must be a flat list", line, path)
        kwargs[key] = value
    return cls(**kwargs)


def parse_config(text: str, path: str = "<string>", base_dir: str = ".") -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None, path) from None
    cfg = ScenarioConfig(source=path, base_dir=base_dir, raw_text=text)
    for key, value in data.items():
        if key == "seed":
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigError("seed must be a nonnegative integer", _line_of(text, None, "seed"), path)
            cfg.seed = value
            continue
        if key not in SECTIONS:
            raise ConfigError(f"unknown section or key {key!r}",
                              _line_of(text, key, None) or _line_of(text, None, key), path)
        if not isinstance(value, dict):
            raise ConfigError(f"{key!r} must be a [section]", _line_of(text, None, key), path)
        setattr(cfg, key, _build_section(key, SECTIONS[key], value, text, path))
    _cross_checks(cfg, text, path)
    return cfg


def _cross_checks(cfg: ScenarioConfig, text: str, path: str):
    for sec, key in FILE_KEYS:
        rel = getattr(getattr(cfg, sec), key)
        if rel is not None and not cfg.resolve(rel).is_file():
            raise ConfigError(f"[{sec}] {key}: file {rel!r} not found", _line_of(text, sec, key), path)
    s, b, g, e = cfg.system, cfg.bath, cfg.grid, cfg.evolution
    if s.hamiltonian == "tabulated" and s.file is None:
        raise ConfigError("[system] hamiltonian = 'tabulated' needs file", _line_of(text, "system", "hamiltonian"), path)
    if b.model == "spectrum" and b.file is None:
        raise ConfigError("[bath] model = 'spectrum' needs file", _line_of(text, "bath", "model"), path)
    if b.model in ("spin_modes", "oscillator") and len(b.frequencies) != len(b.couplings):
        raise ConfigError("[bath] frequencies and couplings differ in length",
                          _line_of(text, "bath", "couplings"), path)
    if b.model in ("spin_modes", "oscillator") and any(w <= 0 for w in b.frequencies):
        raise ConfigError("[bath] frequencies must be positive", _line_of(text, "bath", "frequencies"), path)
    if not g.x_max > g.x_min:
        raise ConfigError("[grid] x_max must exceed x_min", _line_of(text, "grid", "x_max"), path)
    generic = (g.p_min, g.p_max, g.n_p)
    if any(v is not None for v in generic) and any(v is None for v in generic):
        raise ConfigError("[grid] give all of p_min, p_max, n_p or none (lattice)",
                          _line_of(text, "grid", None), path)
    if g.p_min is not None and not g.p_max > g.p_min:
        raise ConfigError("[grid] p_max must exceed p_min", _line_of(text, "grid", "p_max"), path)
    if e.t_final < 0:
        raise ConfigError("[evolution] t_final must be nonnegative", _line_of(text, "evolution", "t_final"), path)
    if e.hbar_order not in (1, 2):
        raise ConfigError("[evolution] hbar_order must be 1 or 2", _line_of(text, "evolution", "hbar_order"), path)
    bad = set(cfg.analysis.diagnostics) - {"coeffs", "nogo", "pointer", "timescales"}
    if bad:
        raise ConfigError(f"[analysis] unknown diagnostics {sorted(bad)}",
                          _line_of(text, "analysis", "diagnostics"), path)
    gas = cfg.gas
    if gas.model == "tabulated" and gas.table is None:
        raise ConfigError("[gas] model = 'tabulated' needs table", _line_of(text, "gas", "model"), path)
    has_gas = _line_of(text, "gas", None) is not None
    if (has_gas or b.model == "gas") and gas.k0 is None and gas.temperature is None:
        raise ConfigError("[gas] needs k0 or temperature", _line_of(text, "gas", None), path)

def load_config(path) -> ScenarioConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {str(p)!r} not found")
    return parse_config(p.read_text(), str(p), str(p.parent))
