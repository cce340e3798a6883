"""Experiment configuration: TOML schema, validation and hashing.

Example::

    [oracle]
    kind = "planted"      # or "external" with command = ["python", "my_oracle.py"]
    d = 12
    n_basins = 4
    noise = 0.0
    seed = 0

    [budget]
    B = 500
    n_init = 100
    batch = 50

    [run]
    seeds = [0, 1, 2]
    methods = ["random", "sa", "qet_qaoa_corr"]
    out = "runs/demo"

    [methods.qet_qaoa_corr]    # optional per-method overrides
    shots = 2000

    [report]
    high_percentile = 75.0
    centroid_samples = 1000
    fidelity_surrogate = "fm"
    fidelity_seed = 0
    tail_seed = 0
"""
from __future__ import annotations

import hashlib
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baselines import BASELINES, GaConfig, SaConfig
from .discovery import QUANTUM_METHODS, DiscoveryConfig

ALL_METHODS = tuple(BASELINES) + tuple(QUANTUM_METHODS)
# discovery fields owned by other sections or fixed by the method id
_DISCOVERY_FIXED = {"budget", "n_init", "batch", "surrogate", "mixer"}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.line = line


@dataclass(frozen=True)
class OracleConfig:
    kind: str = "planted"
    d: int = 12
    n_basins: int = 4
    noise: float = 0.0
    seed: int = 0
    command: tuple[str, ...] = ()
    timeout: float = 60.0


@dataclass(frozen=True)
class BudgetConfig:
    B: int = 1000
    n_init: int = 100
    batch: int = 50


@dataclass(frozen=True)
class ReportConfig:
    high_percentile: float = 75.0
    centroid_samples: int = 1000
    fidelity_surrogate: str = "fm"
    fidelity_seed: int = 0
    tail_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    oracle: OracleConfig = field(default_factory=OracleConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    seeds: tuple[int, ...] = (0,)
    methods: tuple[str, ...] = ALL_METHODS
    overrides: dict = field(default_factory=dict)
    report: ReportConfig = field(default_factory=ReportConfig)
    out: str | None = None

    def semantic_dict(self) -> dict:
        """Everything that affects results (the output directory does not)."""
        doc = asdict(self)
        doc.pop("out")
        doc["oracle"]["command"] = list(self.oracle.command)
        doc["seeds"] = list(self.seeds)
        doc["methods"] = list(self.methods)
        return doc

    def hash(self) -> str:
        text = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def discovery_config(self, method: str) -> DiscoveryConfig:
        return DiscoveryConfig.for_method(method, budget=self.budget.B, n_init=self.budget.n_init,
                                          batch=self.budget.batch, **self.overrides.get(method, {}))


def _line_of(text: str, section: str | None, key: str) -> int | None:
    """Best-effort line number of ``key`` inside ``[section]`` (top level when None)."""
    current = None
    header = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]\s*(#.*)?$")
    for lineno, line in enumerate(text.splitlines(), 1):
        m = header.match(line)
        if m:
            current = m.group(1).replace('"', "").replace(" ", "")
            if section is not None and current == section and key is None:
                return lineno
            continue
        if current == section and re.match(rf"^\s*\"?{re.escape(key)}\"?\s*=", line):
            return lineno
    return None


def _section_line(text: str, section: str) -> int | None:
    for lineno, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*\[\s*{re.escape(section)}\s*\]", line.replace('"', "")):
            return lineno
    return None


def _build(cls, table: dict, section: str, text: str, path: str, allowed=None):
    names = {f.name: f for f in fields(cls)} if allowed is None else allowed
    for key in table:
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]", path, _line_of(text, section, key))
    kwargs = {}
    for key, value in table.items():
        if isinstance(value, dict):
            raise ConfigError(f"[{section}] {key} must be a value, not a table", path,
                              _line_of(text, section, key))
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    if allowed is not None:
        return kwargs
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}", path, _section_line(text, section)) from exc


def _method_options(method: str) -> dict:
    if method in QUANTUM_METHODS:
        return {f.name: f for f in fields(DiscoveryConfig) if f.name not in _DISCOVERY_FIXED}
    if method == "sa":
        return {f.name: f for f in fields(SaConfig)}
    if method in ("ga_explore", "ga_exploit"):
        return {f.name: f for f in fields(GaConfig)}
    return {}


def _type_ok(value, f) -> bool:
    kind = str(f.type)
    if "bool" in kind:
        return isinstance(value, bool)
    if kind.startswith("int"):
        return isinstance(value, int) and not isinstance(value, bool)
    if "float" in kind:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind.startswith("str"):
        return isinstance(value, str)
    return True


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", path, int(m.group(1)) if m else None) from exc

    for key in doc:
        if key not in ("oracle", "budget", "run", "methods", "report"):
            raise ConfigError(f"unknown section or key {key!r}", path,
                              _section_line(text, key) or _line_of(text, None, key))
    oracle = _build(OracleConfig, doc.get("oracle", {}), "oracle", text, path)
    budget = _build(BudgetConfig, doc.get("budget", {}), "budget", text, path)
    report = _build(ReportConfig, doc.get("report", {}), "report", text, path)
    run = doc.get("run", {})
    for key in run:
        if key not in ("seeds", "methods", "out"):
            raise ConfigError(f"unknown key {key!r} in [run]", path, _line_of(text, "run", key))

    anchor = _section_line(text, "oracle")
    if oracle.kind not in ("planted", "external"):
        raise ConfigError(f"oracle kind must be 'planted' or 'external', got {oracle.kind!r}", path,
                          _line_of(text, "oracle", "kind") or anchor)
    if oracle.kind == "external" and not oracle.command:
        raise ConfigError("external oracle needs a command", path, anchor)
    if not 1 <= oracle.d <= 27:
        raise ConfigError(f"d must lie in 1..27, got {oracle.d}", path, _line_of(text, "oracle", "d") or anchor)
    if oracle.kind == "planted" and not (1 <= oracle.n_basins <= 8 and oracle.d >= 8):
        raise ConfigError("planted oracle needs 1 <= n_basins <= 8 and d >= 8", path, anchor)
    if oracle.noise < 0:
        raise ConfigError("noise must be non-negative", path, _line_of(text, "oracle", "noise") or anchor)

    b_anchor = _section_line(text, "budget")
    if budget.B < 1 or budget.n_init < 1 or budget.batch < 1:
        raise ConfigError("B, n_init and batch must be positive", path, b_anchor)
    if budget.B < budget.n_init:
        raise ConfigError(f"B={budget.B} is smaller than n_init={budget.n_init}", path,
                          _line_of(text, "budget", "B") or b_anchor)

    seeds = run.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a nonempty list of non-negative integers", path,
                          _line_of(text, "run", "seeds"))
    methods = run.get("methods", list(ALL_METHODS))
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods must be a nonempty list", path, _line_of(text, "run", "methods"))
    for m in methods:
        if m not in ALL_METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(ALL_METHODS)}", path,
                              _line_of(text, "run", "methods"))
    if len(set(methods)) != len(methods) or len(set(seeds)) != len(seeds):
        raise ConfigError("methods and seeds must not repeat", path, _section_line(text, "run"))

    overrides = {}
    for method, table in doc.get("methods", {}).items():
        section = f"methods.{method}"
        if method not in ALL_METHODS:
            raise ConfigError(f"unknown method section [{section}]", path, _section_line(text, section))
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table", path, _section_line(text, "methods"))
        options = _method_options(method)
        kwargs = _build(None, table, section, text, path, allowed=options)
        for key, value in kwargs.items():
            if not _type_ok(value, options[key]):
                raise ConfigError(f"[{section}] {key} has the wrong type", path, _line_of(text, section, key))
        overrides[method] = kwargs

    out = run.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out must be a string path", path, _line_of(text, "run", "out"))
    cfg = ExperimentConfig(oracle, budget, tuple(seeds), tuple(methods), overrides, report, out)
    for method in cfg.methods:
        try:
            make_method_config(cfg, method)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[methods.{method}] {exc}", path, _section_line(text, f"methods.{method}")) from exc
    return cfg


def make_method_config(cfg: ExperimentConfig, method: str):
    opts = cfg.overrides.get(method, {})
    if method in QUANTUM_METHODS:
        return cfg.discovery_config(method)
    if method == "sa":
        return SaConfig(**opts)
    if method == "ga_explore":
        return GaConfig.explore(**opts)
    if method == "ga_exploit":
        return GaConfig.exploit(**opts)
    return None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    return parse_config(text, str(path))
