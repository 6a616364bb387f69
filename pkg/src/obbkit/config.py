"""Declarative tool configuration (YAML or JSON).

One document covers every subcommand; each reads the sections it needs::

    seed: 0
    trials: 100
    scene: {image_extent: [1024, 1024], n_objects: [10, 30], ...}
    conditions:
      - {kind: camera, parameter: 70, tag: 70m}
    runs:                      # or a single top-level `detector:`
      - name: "10"
        labels: {Epochs: "10"}
        detector: {miss_rate: 0.2, center_jitter_sigma: 3}
    nms: {iou_threshold: 0.5, score_threshold: 0.0, class_aware: true}
    eval: {iou_threshold: 0.5, ap_mode: all}
    csl: {num_classes: 180, window: gaussian, radius: 6}
    table: {layout: columns, corner: Epochs, percent: true}
    metadata: {learning_rate: 0.0032, batch_size: 3}

Values resolve as command-line flags > config file > defaults.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .angle_codec import CslConfig
from .errors import ConfigError
from .synthgen import ConditionEffects, ConditionSpec, DetectorModel, NmsSettings, SceneConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SceneSection(_Strict):
    image_extent: tuple[float, float] = (1024.0, 1024.0)
    n_objects: tuple[int, int] = (10, 30)
    size_range: tuple[float, float] = (20.0, 60.0)
    aspect_range: tuple[float, float] = (0.3, 0.6)
    class_set: list[str] = Field(default_factory=lambda: ["car", "truck", "bus"], min_length=1)
    overlap_policy: float = Field(0.0, ge=0.0, lt=1.0)
    reference_distance: float = Field(70.0, gt=0.0)
    max_retries: int = Field(200, ge=1)

    @model_validator(mode="after")
    def _check(self):
        SceneConfig(**{**self.model_dump(), "class_set": tuple(self.class_set)})
        return self


class ConditionSection(_Strict):
    kind: Literal["camera", "light", "weather", "sensor"]
    parameter: Optional[float] = None
    tag: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        ConditionSpec(self.kind, self.parameter, self.tag)
        return self


class CslSection(_Strict):
    num_classes: int = Field(180, ge=2)
    window: Literal["gaussian", "triangle", "rectangle", "pulse"] = "gaussian"
    radius: float = Field(6.0, ge=0.0)

    @model_validator(mode="after")
    def _check(self):
        CslConfig(**self.model_dump())
        return self


class DetectorSection(_Strict):
    miss_rate: float = Field(0.0, ge=0.0, le=1.0)
    fp_rate: float = Field(0.0, ge=0.0)
    center_jitter_sigma: float = Field(0.0, ge=0.0)
    size_jitter_sigma: float = Field(0.0, ge=0.0)
    angle_jitter_sigma: float = Field(0.0, ge=0.0)
    tp_score_mean: float = Field(1.0, ge=0.0, le=1.0)
    fp_score_mean: float = Field(0.3, ge=0.0, le=1.0)
    score_sigma: float = Field(0.0, ge=0.0)
    class_confusion: float = Field(0.0, ge=0.0, le=1.0)
    #: decode predicted angles through the `csl` codec section
    csl_decode: bool = False

    @model_validator(mode="after")
    def _check(self):
        if self.tp_score_mean < self.fp_score_mean:
            raise ValueError("tp_score_mean must be >= fp_score_mean")
        return self


class RunSection(_Strict):
    name: Optional[str] = None
    labels: dict[str, str] = Field(default_factory=dict)
    detector: DetectorSection = Field(default_factory=DetectorSection)

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        return ", ".join(self.labels.values()) or "default"


class NmsSection(_Strict):
    iou_threshold: float = Field(0.5, ge=0.0, le=1.0)
    score_threshold: float = Field(0.0, ge=0.0, le=1.0)
    class_aware: bool = True


class EvalSection(_Strict):
    iou_threshold: float = Field(0.5, ge=0.0, le=1.0)
    ap_mode: Literal["all", "11pt", "all_points", "eleven_point"] = "all"


class TableSection(_Strict):
    layout: Literal["rows", "columns"] = "columns"
    corner: str = "category"
    percent: bool = False


class EffectsSection(_Strict):
    rain_miss: float = 0.25
    rain_center_jitter: float = 2.0
    rain_angle_jitter: float = 3.0
    light_score_spread: float = 0.3
    light_score_drop: float = 0.2
    sensor_confusion: float = 0.5


class ToolConfig(_Strict):
    seed: int = 0
    trials: int = Field(10, ge=1)
    scene: SceneSection = Field(default_factory=SceneSection)
    conditions: list[ConditionSection] = Field(default_factory=list)
    detector: Optional[DetectorSection] = None
    runs: Optional[list[RunSection]] = None
    nms: NmsSection = Field(default_factory=NmsSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    csl: CslSection = Field(default_factory=CslSection)
    table: TableSection = Field(default_factory=TableSection)
    effects: EffectsSection = Field(default_factory=EffectsSection)
    metadata: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self):
        if self.detector is not None and self.runs is not None:
            raise ValueError("give either `detector` or `runs`, not both")
        if self.runs is not None:
            if not self.runs:
                raise ValueError("`runs` must not be empty")
            names = [r.display_name for r in self.runs]
            if len(set(names)) != len(names):
                raise ValueError(f"run names must be unique, got {names}")
        tags = [ConditionSpec(c.kind, c.parameter, c.tag).label for c in self.conditions]
        if len(set(tags)) != len(tags):
            raise ValueError(f"condition tags must be unique, got {tags}")
        return self

    # -- conversion to domain objects -------------------------------------

    def run_list(self) -> list[RunSection]:
        if self.runs is not None:
            return list(self.runs)
        return [RunSection(name="default", detector=self.detector or DetectorSection())]

    def scene_config(self) -> SceneConfig:
        s = self.scene
        return _domain("scene", SceneConfig, rng_seed=self.seed, image_extent=s.image_extent,
                       n_objects=s.n_objects, size_range=s.size_range, aspect_range=s.aspect_range,
                       class_set=tuple(s.class_set), overlap_policy=s.overlap_policy,
                       reference_distance=s.reference_distance, max_retries=s.max_retries)

    def condition_specs(self) -> list[ConditionSpec]:
        if not self.conditions:
            raise ConfigError("conditions: at least one condition is required")
        return [
            _domain(f"conditions.{i}", ConditionSpec, kind=c.kind, parameter=c.parameter, tag=c.tag)
            for i, c in enumerate(self.conditions)
        ]

    def csl_config(self) -> CslConfig:
        return _domain("csl", CslConfig, **self.csl.model_dump())

    def detector_model(self, run: RunSection, where: str = "detector") -> DetectorModel:
        d = run.detector.model_dump()
        use_csl = d.pop("csl_decode")
        return _domain(where, DetectorModel, angle_codec=self.csl_config() if use_csl else None, **d)

    def nms_settings(self) -> NmsSettings:
        return NmsSettings(**self.nms.model_dump())

    def condition_effects(self) -> ConditionEffects:
        return ConditionEffects(**self.effects.model_dump())


def _domain(where, cls, **kwargs):
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: Any) -> ToolConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config document must be a mapping")
    try:
        return ToolConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None


def load_config(path: str | Path | None) -> ToolConfig:
    """Read a YAML/JSON config file; ``None`` gives all defaults."""
    if path is None:
        return ToolConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return parse_config(data)


def apply_overrides(cfg: ToolConfig, **overrides) -> ToolConfig:
    """Return a copy with dotted-key overrides (``eval.iou_threshold=0.7``) applied.

    ``None`` values mean "flag not given" and are skipped.
    """
    data = cfg.model_dump()
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = value
    # detector/runs exclusivity: drop the unused one before revalidating
    if data.get("detector") is None:
        data.pop("detector", None)
    if data.get("runs") is None:
        data.pop("runs", None)
    return parse_config(data)
