"""YAML run configuration.

A minimal file::

    files:
      a: people_a.csv
      b: people_b.csv
    fields:
      - {name: first, kind: string, cutpoints: [0.05, 0.2, 0.53]}
      - {name: last, kind: string, cutpoints: [0.05, 0.2, 0.53]}
      - {name: year, kind: numeric, cutpoints: [0.5, 2.5, 5]}
    output: out/

Relative paths resolve against the directory holding the config file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .blocking import BlockScheme, FieldBlocking
from .comparison import ConfigurationError, FieldSpec
from .estimator import LossParams
from .model import PriorConfig
from .sampler import SamplerConfig
from .synthetic import SyntheticConfig

_TOP_KEYS = {
    "files", "columns", "id_column", "fields", "preprocess", "blocking", "prior", "sampler", "loss",
    "grid", "truth", "output", "workers", "margins", "figures",
}


@dataclass
class PreprocessConfig:
    """``full_name`` names a raw column split into the ``first``/``last`` fields;
    ``names`` lists fields normalized in place; ``places`` lists fields mapped
    through the gazetteer."""

    full_name: str | None = None
    first: str = "first"
    last: str = "last"
    names: list[str] = field(default_factory=list)
    places: list[str] = field(default_factory=list)
    abbreviations: dict[str, str] = field(default_factory=dict)
    gazetteer: dict[str, str] = field(default_factory=dict)


@dataclass
class RunConfig:
    file_a: Path
    file_b: Path
    fields: list[FieldSpec]
    output: Path
    columns: dict[str, str] = field(default_factory=dict)
    id_column: str | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    blocking: BlockScheme = field(default_factory=BlockScheme.single)
    prior: PriorConfig = field(default_factory=PriorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    loss: LossParams = field(default_factory=LossParams)
    grid: list[LossParams] | None = None
    truth: Path | None = None
    workers: int = 1
    margins: Path | None = None
    figures: bool = True

    def __post_init__(self):
        names = [s.name for s in self.fields]
        if not names:
            raise ConfigurationError("at least one field is required")
        if len(set(names)) != len(names):
            raise ConfigurationError("each field may have only one spec")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        for fb in self.blocking.fields:
            if fb.field not in names:
                raise ConfigurationError(f"blocking field {fb.field!r} is not a compared field")

    def column_for(self, name: str) -> str:
        return self.columns.get(name, name)

    def resolved(self) -> dict[str, Any]:
        """Plain-data view of every setting, defaults included."""
        return {
            "files": {"a": str(self.file_a), "b": str(self.file_b)},
            "columns": {s.name: self.column_for(s.name) for s in self.fields},
            "id_column": self.id_column,
            "fields": [_spec_dict(s) for s in self.fields],
            "preprocess": asdict(self.preprocess),
            "blocking": [{"field": fb.field, "groups": list(fb.groups), "prefixes": list(fb.prefixes),
                          "fallback": fb.fallback} for fb in self.blocking.fields],
            "prior": {"alpha_p": self.prior.alpha_p, "beta_p": self.prior.beta_p,
                      "dirichlet_alpha": None if self.prior.dirichlet_alpha is None
                      else [list(map(float, a)) for a in self.prior.dirichlet_alpha]},
            "sampler": asdict(self.sampler),
            "loss": list(self.loss.as_tuple()),
            "grid": None if self.grid is None else [list(g.as_tuple()) for g in self.grid],
            "truth": None if self.truth is None else str(self.truth),
            "output": str(self.output),
            "workers": self.workers,
            "margins": None if self.margins is None else str(self.margins),
            "figures": self.figures,
        }

    def digest(self) -> str:
        """Hash of the settings that influence results (worker count and output path excluded)."""
        blob = self.resolved()
        for key in ("workers", "output", "figures"):
            blob.pop(key)
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


def _spec_dict(s: FieldSpec) -> dict:
    return {"name": s.name, "kind": s.kind, "cutpoints": list(s.cutpoints),
            "common_values": list(s.common_values), "prefix_weight": s.prefix_weight}


def _path(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"section {key!r} must be a mapping")
    return value


def _build(cls, values: dict, what: str):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigurationError(f"{what}: {exc}") from None


def load_yaml(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    return raw


def _blocking(raw) -> BlockScheme:
    if raw is None or raw == "none" or raw == "single":
        return BlockScheme.single()
    if raw == "default":
        return BlockScheme.default()
    if isinstance(raw, dict) and "default" in raw:
        names = raw["default"] or {}
        return BlockScheme.default(names.get("first", "first"), names.get("last", "last"))
    if isinstance(raw, list):
        fields = []
        for item in raw:
            groups = tuple(item.get("groups", ()))
            prefixes = tuple(item.get("prefixes", ()))
            fields.append(_build(FieldBlocking, {"field": item["field"], "groups": groups, "prefixes": prefixes,
                                                 "fallback": item.get("fallback", "OTHER")}, "blocking"))
        return BlockScheme(tuple(fields))
    raise ConfigurationError("blocking must be 'single', 'default', {default: {...}} or a list of field rules")


def parse_grid(raw) -> list[LossParams] | None:
    if raw is None:
        return None
    if raw == "default":
        from .evaluation import DEFAULT_GRID
        return list(DEFAULT_GRID)
    try:
        return [_triple(g) for g in raw]
    except (TypeError, ValueError):
        raise ConfigurationError("grid must be a list of [fnm, fm1, fm2] triples") from None


def _triple(values) -> LossParams:
    values = [float(v) for v in values]
    if len(values) != 3:
        raise ValueError("need three loss values")
    return LossParams(*values)


def run_config_from_dict(raw: dict, base: Path = Path(".")) -> RunConfig:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
    files = _section(raw, "files")
    if "a" not in files or "b" not in files:
        raise ConfigurationError("files.a and files.b are required")
    if "output" not in raw:
        raise ConfigurationError("output directory is required")
    fields = [_build(FieldSpec, {**f, "cutpoints": tuple(f.get("cutpoints", ())),
                                 "common_values": tuple(f.get("common_values", ()))}, "field")
              for f in raw.get("fields") or []]
    prior = _section(raw, "prior")
    loss = raw.get("loss", [1.0, 1.0, 2.0])
    if isinstance(loss, dict):
        loss = [loss.get("fnm", 1.0), loss.get("fm1", 1.0), loss.get("fm2", 2.0)]
    return RunConfig(
        file_a=_path(base, files["a"]),
        file_b=_path(base, files["b"]),
        fields=fields,
        output=_path(base, raw["output"]),
        columns=dict(raw.get("columns") or {}),
        id_column=raw.get("id_column"),
        preprocess=_build(PreprocessConfig, _section(raw, "preprocess"), "preprocess"),
        blocking=_blocking(raw.get("blocking")),
        prior=_build(PriorConfig, prior, "prior"),
        sampler=_build(SamplerConfig, _section(raw, "sampler"), "sampler"),
        loss=_loss(loss),
        grid=parse_grid(raw.get("grid")),
        truth=_path(base, raw.get("truth")),
        workers=int(raw.get("workers", 1)),
        margins=_path(base, raw.get("margins")),
        figures=bool(raw.get("figures", True)),
    )


def _loss(raw) -> LossParams:
    try:
        return _triple(raw)
    except (TypeError, ValueError):
        raise ConfigurationError("loss must be [fnm, fm1, fm2]") from None


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return run_config_from_dict(load_yaml(path), path.parent)


@dataclass
class SynthJob:
    config: SyntheticConfig
    output: Path


def load_synth_config(path: str | Path) -> SynthJob:
    """``synthetic:`` holds SyntheticConfig fields; ``output`` the target directory."""
    path = Path(path)
    raw = load_yaml(path)
    if "output" not in raw:
        raise ConfigurationError("output directory is required")
    values = dict(_section(raw, "synthetic"))
    for key in ("year_range", "typo_mix"):
        if key in values:
            values[key] = tuple(values[key])
    return SynthJob(_build(SyntheticConfig, values, "synthetic"), _path(path.parent, raw["output"]))
