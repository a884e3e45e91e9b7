"""Run configuration: JSON file plus environment overrides.

Every section is optional and falls back to its defaults, but a section that
is present must list all of its fields; unknown fields are rejected. An
environment variable ``ENSEMBLE_SEG_<SECTION>__<FIELD>`` (or
``ENSEMBLE_SEG_<FIELD>`` for top-level scalars) holding a JSON value
overrides one field, e.g. ``ENSEMBLE_SEG_LESIONWISE__HD95_PENALTY=300``.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .components import Connectivity
from .errors import ConfigError, SegError
from .losses import BlobLossConfig
from .metrics import LesionwiseConfig
from .postprocess import PostprocessConfig
from .ssim import MsSsimConfig
from .volume import BRATS_REGIONS, DEFAULT_N_CLASSES, RegionSpec

ENV_PREFIX = "ENSEMBLE_SEG_"

_SECTIONS = {
    "lesionwise": LesionwiseConfig,
    "postprocess": PostprocessConfig,
    "msssim": MsSsimConfig,
    "blob": BlobLossConfig,
}


@dataclass(frozen=True)
class RunConfig:
    regions: tuple[RegionSpec, ...] = BRATS_REGIONS
    lesionwise: LesionwiseConfig = field(default_factory=LesionwiseConfig)
    postprocess: PostprocessConfig = field(default_factory=PostprocessConfig)
    msssim: MsSsimConfig = field(default_factory=MsSsimConfig)
    blob: BlobLossConfig = field(default_factory=BlobLossConfig)
    workers: int = 1
    n_classes: int = DEFAULT_N_CLASSES

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", field="workers")
        if not 2 <= self.n_classes <= 256:
            raise ConfigError("n_classes must be in [2, 256]", field="n_classes")
        for r in self.regions:
            if max(r.labels) >= self.n_classes:
                raise ConfigError(f"region {r.name!r} uses a label >= n_classes", field="regions")
        self.postprocess.check_classes(self.n_classes)

    def to_dict(self) -> dict:
        def plain(obj):
            out = {}
            for f in dataclasses.fields(obj):
                v = getattr(obj, f.name)
                out[f.name] = v.value if isinstance(v, Connectivity) else (list(v) if isinstance(v, tuple) else v)
            return out

        d = {"regions": [{"name": r.name, "labels": sorted(r.labels)} for r in self.regions]}
        for name in _SECTIONS:
            d[name] = plain(getattr(self, name))
        d["workers"] = self.workers
        d["n_classes"] = self.n_classes
        return d


def _coerce(value, default, where: str):
    if isinstance(default, Connectivity):
        return Connectivity.parse(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean, got {value!r}", field=where)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}", field=where)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}", field=where)
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {value!r}", field=where)
        return tuple(value)
    return value


def _build_section(name: str, raw) -> object:
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object", field=name)
    defaults = cls()
    names = [f.name for f in dataclasses.fields(cls)]
    for key in raw:
        if key not in names:
            raise ConfigError(f"unknown config field {name}.{key}", field=f"{name}.{key}")
    kwargs = {}
    for key in names:
        if key not in raw:
            raise ConfigError(f"missing config field {name}.{key}", field=f"{name}.{key}")
        kwargs[key] = _coerce(raw[key], getattr(defaults, key), f"{name}.{key}")
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{name}: {exc}", field=f"{name}.{exc.field}" if exc.field else name) from exc


def _build_regions(raw) -> tuple[RegionSpec, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("regions: expected a non-empty list", field="regions")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or set(item) != {"name", "labels"}:
            raise ConfigError(f"regions[{i}]: expected exactly the fields name, labels", field=f"regions[{i}]")
        try:
            out.append(RegionSpec(str(item["name"]), frozenset(item["labels"])))
        except (SegError, TypeError) as exc:
            raise ConfigError(f"regions[{i}]: {exc}", field=f"regions[{i}]") from exc
    return tuple(out)


def _apply_env(raw: dict, environ) -> dict:
    raw = json.loads(json.dumps(raw))
    for key, text in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX) :].lower().split("__")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        if len(path) == 1:
            raw[path[0]] = value
        elif len(path) == 2 and path[0] in _SECTIONS:
            section = raw.setdefault(path[0], RunConfig().to_dict()[path[0]])
            section[path[1]] = value
        else:
            raise ConfigError(f"cannot map environment variable {key} to a config field", field=key)
    return raw


def config_from_dict(raw: dict, environ=None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if environ is not None:
        raw = _apply_env(raw, environ)
    allowed = {"regions", "workers", "n_classes", *_SECTIONS}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown config field {key}", field=key)
    kwargs = {}
    if "regions" in raw:
        kwargs["regions"] = _build_regions(raw["regions"])
    for name in _SECTIONS:
        if name in raw:
            kwargs[name] = _build_section(name, raw[name])
    for name in ("workers", "n_classes"):
        if name in raw:
            kwargs[name] = _coerce(raw[name], 1, name)
    return RunConfig(**kwargs)


def load_config(path: str | Path | None, environ=None) -> RunConfig:
    """Load ``path`` (or the defaults when None), applying environment overrides."""
    environ = os.environ if environ is None else environ
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(raw, environ)
