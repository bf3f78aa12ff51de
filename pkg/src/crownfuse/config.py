"""Pipeline configuration: file, environment, and CLI override layering.

Precedence, lowest to highest: built-in defaults, the YAML config file,
``CROWNFUSE_<SECTION>_<KEY>`` environment variables, explicit overrides
(CLI flags). Unknown sections or keys are rejected.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

import yaml

from .features import GaborBankSpec, GreenDominanceSpec
from .integrate import IntegrationConfig
from .wbf import WbfConfig

ENV_PREFIX = "CROWNFUSE_"


@dataclass(frozen=True)
class ProbmapConfig:
    w1: float = 0.5
    w2: float = 0.5
    open_radius: int = 1
    open_iterations: int = 2

    def validate(self) -> None:
        if self.w1 < 0 or self.w2 < 0 or abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ValueError("probmap weights must be >= 0 and sum to 1")
        if self.open_radius < 1 or self.open_iterations < 1:
            raise ValueError("opening radius and iterations must be >= 1")


@dataclass(frozen=True)
class SegmentationConfig:
    th_area: int = 64
    th_dist: float = 8.0

    def validate(self) -> None:
        if self.th_area < 1:
            raise ValueError("th_area must be >= 1")
        if self.th_dist < 1:
            raise ValueError("th_dist must be >= 1")


@dataclass(frozen=True)
class TilingConfig:
    enabled: bool = False
    tile_size: int = 256
    overlap: int = 32

    def validate(self) -> None:
        if self.tile_size < 64:
            raise ValueError("tile_size must be >= 64")
        if not 0 <= self.overlap < self.tile_size:
            raise ValueError("overlap must lie in [0, tile_size)")


@dataclass(frozen=True)
class SynthConfig:
    width: int = 512
    height: int = 512
    n_crowns: int = 12
    radius_min: int = 5
    radius_max: int = 15
    intensity_min: int = 140
    intensity_max: int = 230
    background: tuple[int, int, int] = (96, 104, 92)
    clutter: int = 0
    seed: int = 0
    crowns: tuple[tuple[int, int, int, int], ...] | None = None
    n_models: int = 4
    drop_rate: float = 0.0
    jitter: float = 0.0

    def validate(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("synth dimensions must be >= 1")
        if not 2 <= self.radius_min <= self.radius_max:
            raise ValueError("require 2 <= radius_min <= radius_max")
        if self.n_models < 1:
            raise ValueError("n_models must be >= 1")
        if not 0.0 <= self.drop_rate < 1.0:
            raise ValueError("drop_rate must lie in [0, 1)")
        if not 0.0 <= self.jitter < 0.5:
            raise ValueError("jitter must lie in [0, 0.5)")


@dataclass(frozen=True)
class RuntimeConfig:
    workers: int = 1
    out_dir: str = "out"

    def validate(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    green: GreenDominanceSpec = field(default_factory=GreenDominanceSpec)
    gabor: GaborBankSpec = field(default_factory=GaborBankSpec)
    probmap: ProbmapConfig = field(default_factory=ProbmapConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    wbf: WbfConfig = field(default_factory=WbfConfig)
    integrate: IntegrationConfig = field(default_factory=IntegrationConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    tiling: TilingConfig = field(default_factory=TilingConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)

    def validate(self) -> None:
        self.green.validate()
        self.gabor.validate()
        for section in (self.probmap, self.segmentation, self.wbf, self.integrate,
                        self.synth, self.tiling, self.runtime):
            section.validate()


_SECTION_TYPES = {
    "green": GreenDominanceSpec,
    "gabor": GaborBankSpec,
    "probmap": ProbmapConfig,
    "segmentation": SegmentationConfig,
    "wbf": WbfConfig,
    "integrate": IntegrationConfig,
    "synth": SynthConfig,
    "tiling": TilingConfig,
    "runtime": RuntimeConfig,
}


def _coerce(value, target_type):
    """Best-effort coercion of YAML scalars/lists into dataclass field types."""
    if value is None:
        return None
    if isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def _merge_section(name: str, base_kwargs: dict, updates: dict, origin: str) -> dict:
    cls = _SECTION_TYPES[name]
    known = {f.name for f in fields(cls)}
    for key, value in updates.items():
        if key not in known:
            raise ValueError(f"{origin}: unknown key {name}.{key}")
        base_kwargs[key] = _coerce(value, None)
    return base_kwargs


def _env_overrides(environ) -> dict[str, dict]:
    sections: dict[str, dict] = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        for section in _SECTION_TYPES:
            prefix = section + "_"
            if rest.startswith(prefix):
                key = rest[len(prefix):]
                sections.setdefault(section, {})[key] = yaml.safe_load(raw)
                break
        else:
            raise ValueError(f"unrecognized environment override {name}")
    return sections


def load_config(path=None, environ=None, overrides: dict[str, dict] | None = None) -> PipelineConfig:
    """Build a PipelineConfig from file + environment + explicit overrides.

    ``overrides`` maps section name to a {key: value} dict and wins over
    everything else.
    """
    environ = os.environ if environ is None else environ
    section_kwargs: dict[str, dict] = {name: {} for name in _SECTION_TYPES}
    explicit: dict[str, set] = {name: set() for name in _SECTION_TYPES}

    if path is not None:
        raw = yaml.safe_load(open(path).read())
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: config file must be a mapping of sections")
        for section, values in raw.items():
            if section not in _SECTION_TYPES:
                raise ValueError(f"{path}: unknown config section {section!r}")
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ValueError(f"{path}: section {section!r} must be a mapping")
            _merge_section(section, section_kwargs[section], values, str(path))
            explicit[section].update(values.keys())

    for section, values in _env_overrides(environ).items():
        _merge_section(section, section_kwargs[section], values, "environment")
        explicit[section].update(values.keys())

    if overrides:
        for section, values in overrides.items():
            if section not in _SECTION_TYPES:
                raise ValueError(f"override: unknown config section {section!r}")
            _merge_section(section, section_kwargs[section], values, "override")
            explicit[section].update(values.keys())

    built = {name: _SECTION_TYPES[name](**kwargs) for name, kwargs in section_kwargs.items()}

    # The integration rules recompute the joint map locally; keep its weights
    # in lockstep with the probmap section unless they were set explicitly.
    integrate_cfg = built["integrate"]
    updates = {}
    if "w1" not in explicit["integrate"]:
        updates["w1"] = built["probmap"].w1
    if "w2" not in explicit["integrate"]:
        updates["w2"] = built["probmap"].w2
    if updates:
        built["integrate"] = dataclasses.replace(integrate_cfg, **updates)

    config = PipelineConfig(**built)
    config.validate()
    return config


def parse_set_option(values: tuple[str, ...]) -> dict[str, dict]:
    """Parse repeated ``section.key=value`` override strings."""
    overrides: dict[str, dict] = {}
    for item in values:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValueError(f"--set expects section.key=value, got {item!r}")
        target, raw = item.split("=", 1)
        section, key = target.split(".", 1)
        overrides.setdefault(section, {})[key] = yaml.safe_load(raw)
    return overrides
