"""Experiment configuration: an INI file with one section per module.

Every key must be known; typos are errors rather than silently ignored
hyperparameters. Seeds are not configured per module: all of them derive
from ``[experiment] base_seed``.

Example::

    [experiment]
    output_dir = runs/cora
    num_runs = 10
    base_seed = 0

    [dataset]
    name = cora
    content = data/cora/cora.content
    cites = data/cora/cora.cites

    [walk]
    p = 0.25
    q = 0.25

    [model]
    hidden_dim = 32
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .model import ModelConfig
from .node2vec import WalkConfig
from .numkit import ConfigError
from .transe import KGEConfig


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "cora"
    content: str = ""
    cites: str = ""


@dataclass(frozen=True)
class AttentionConfig:
    mode: str = "joint"
    dim: int = 64
    num_heads: int = 1
    tied_init: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    walk: WalkConfig = field(default_factory=WalkConfig)
    kge: KGEConfig = field(default_factory=KGEConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    name: str = "experiment"
    num_runs: int = 10
    base_seed: int = 0
    fixed_split: bool = False
    deterministic: bool = True
    output_dir: str = "runs"

    def __post_init__(self):
        if self.num_runs < 1:
            raise ConfigError("num_runs must be >= 1")

    def semantic_dict(self) -> dict:
        """Everything that can change a result; output location and threading mode excluded."""
        d = asdict(self)
        d.pop("output_dir")
        d.pop("deterministic")
        d.pop("name")
        for section in ("walk", "kge", "model"):
            d[section].pop("seed", None)
        d["model"].pop("branches")
        d["model"].pop("use_attention")
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def model_config(self, branches, use_attention: bool, seed: int) -> ModelConfig:
        return replace(self.model, branches=tuple(branches), use_attention=use_attention,
                       attention_mode=self.attention.mode, attention_dim=self.attention.dim,
                       num_heads=self.attention.num_heads, attention_tied_init=self.attention.tied_init,
                       seed=seed)


_SECTION_KEYS = {
    "experiment": ("name", "output_dir", "num_runs", "base_seed", "fixed_split", "deterministic"),
    "dataset": tuple(f.name for f in fields(DatasetConfig)),
    "walk": tuple(f.name for f in fields(WalkConfig) if f.name != "seed"),
    "kge": tuple(f.name for f in fields(KGEConfig) if f.name != "seed"),
    "model": tuple(f.name for f in fields(ModelConfig)
                   if f.name not in ("seed", "branches", "use_attention", "attention_mode",
                                     "attention_dim", "num_heads", "attention_tied_init")),
    "attention": tuple(f.name for f in fields(AttentionConfig)),
}


def _convert(raw: str, default, where: str):
    try:
        if isinstance(default, bool):
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def _section_values(parser, section: str, cls) -> dict:
    defaults = cls()
    out = {}
    allowed = _SECTION_KEYS[section]
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ConfigError(f"unknown key [{section}] {key}; allowed: {', '.join(allowed)}")
        out[key] = _convert(raw, getattr(defaults, key), f"[{section}] {key}")
    return out


def load_config(path) -> ExperimentConfig:
    """Parse an INI file; relative dataset/output paths resolve against the file's directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    unknown = set(parser.sections()) - set(_SECTION_KEYS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}; allowed: {sorted(_SECTION_KEYS)}")

    def section(name, cls):
        return _section_values(parser, name, cls) if parser.has_section(name) else {}

    base = path.parent
    dataset = section("dataset", DatasetConfig)
    for key in ("content", "cites"):
        if dataset.get(key):
            dataset[key] = str((base / dataset[key]).resolve()) if not Path(dataset[key]).is_absolute() else dataset[key]
    exp = {}
    if parser.has_section("experiment"):
        defaults = ExperimentConfig()
        for key, raw in parser.items("experiment"):
            if key not in _SECTION_KEYS["experiment"]:
                raise ConfigError(f"unknown key [experiment] {key}; allowed: {', '.join(_SECTION_KEYS['experiment'])}")
            exp[key] = _convert(raw, getattr(defaults, key), f"[experiment] {key}")
    if "output_dir" in exp and not Path(exp["output_dir"]).is_absolute():
        exp["output_dir"] = str((base / exp["output_dir"]).resolve())
    try:
        return ExperimentConfig(
            dataset=DatasetConfig(**dataset),
            walk=WalkConfig(**section("walk", WalkConfig)),
            kge=KGEConfig(**section("kge", KGEConfig)),
            model=ModelConfig(**section("model", ModelConfig)),
            attention=AttentionConfig(**section("attention", AttentionConfig)),
            **exp,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def dump_config(config: ExperimentConfig, path) -> None:
    """Write ``config`` back in the INI format ``load_config`` reads."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["experiment"] = {k: str(getattr(config, k)) for k in _SECTION_KEYS["experiment"]}
    for section in ("dataset", "walk", "kge", "model", "attention"):
        obj = getattr(config, section)
        parser[section] = {k: repr(getattr(obj, k)) if isinstance(getattr(obj, k), float) else str(getattr(obj, k))
                           for k in _SECTION_KEYS[section]}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
