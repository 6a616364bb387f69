"""Box-level synthetic scenes and a parameterized mock detector.

Nothing here renders pixels. A scene is a list of ground-truth oriented
boxes; the mock detector perturbs them (misses, jitter, class confusion,
Poisson false positives) under an acquisition condition, and the sweep
driver runs detect -> NMS -> evaluation per condition.

Condition effects are a documented, tunable mapping (:class:`ConditionEffects`),
not a physical model:

* camera: object sizes scale by ``reference_distance / distance``
* weather (rain intensity 0..1): raises miss rate and center/angle jitter
* light (illumination factor, 1 = balanced): widens and lowers TP scores
  in proportion to ``|1 - factor|``
* sensor (noise level 0..1): raises class confusion
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .angle_codec import CslConfig, decode_angle, encode_csl
from .errors import ConfigError, GenerationError
from .evaluator import EvalReport, GroundTruth, evaluate_image, reduce_images
from .geometry import OrientedBox, rotated_iou
from .nms import Detection, rotated_nms

KINDS = ("camera", "light", "weather", "sensor")

#: documented parameter range per condition kind (inclusive bounds)
PARAMETER_RANGES = {
    "camera": (1e-3, 1e4),  # distance, meters
    "light": (0.0, 2.0),  # illumination factor, 1 = balanced
    "weather": (0.0, 1.0),  # rain intensity, 0 = dry
    "sensor": (0.0, 1.0),  # sensor noise level
}

#: camera distances named in the air / ground ablations, meters
AIR_DISTANCES = (70.0, 163.0, 256.0, 350.0)
GROUND_DISTANCES = (15.0, 35.0, 55.0, 75.0)


def _pair(value, name, cast=float):
    try:
        a, b = value
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a (min, max) pair, got {value!r}") from None
    return cast(a), cast(b)


@dataclass(frozen=True)
class SceneConfig:
    rng_seed: int = 0
    image_extent: tuple[float, float] = (1024.0, 1024.0)
    n_objects: tuple[int, int] = (10, 30)
    #: long-edge length range in pixels at ``reference_distance``
    size_range: tuple[float, float] = (20.0, 60.0)
    #: short/long edge ratio range
    aspect_range: tuple[float, float] = (0.3, 0.6)
    class_set: tuple[str, ...] = ("car", "truck", "bus")
    #: maximum allowed IoU between two ground-truth boxes
    overlap_policy: float = 0.0
    reference_distance: float = 70.0
    max_retries: int = 200

    def __post_init__(self):
        ext = _pair(self.image_extent, "image_extent")
        n_objects = _pair(self.n_objects, "n_objects", int)
        sizes = _pair(self.size_range, "size_range")
        aspect = _pair(self.aspect_range, "aspect_range")
        if not (ext[0] > 0 and ext[1] > 0):
            raise ConfigError(f"image_extent must be positive, got {ext}")
        if not 0 <= n_objects[0] <= n_objects[1]:
            raise ConfigError(f"n_objects must satisfy 0 <= min <= max, got {n_objects}")
        if not 0 < sizes[0] <= sizes[1]:
            raise ConfigError(f"size_range must satisfy 0 < min <= max, got {sizes}")
        if not 0 < aspect[0] <= aspect[1] <= 1:
            raise ConfigError(f"aspect_range must satisfy 0 < min <= max <= 1, got {aspect}")
        if not 0 <= self.overlap_policy < 1:
            raise ConfigError(f"overlap_policy must lie in [0, 1), got {self.overlap_policy}")
        if not self.class_set:
            raise ConfigError("class_set must not be empty")
        if not self.reference_distance > 0:
            raise ConfigError("reference_distance must be positive")
        if self.max_retries < 1:
            raise ConfigError("max_retries must be >= 1")
        object.__setattr__(self, "image_extent", ext)
        object.__setattr__(self, "n_objects", n_objects)
        object.__setattr__(self, "size_range", sizes)
        object.__setattr__(self, "aspect_range", aspect)
        object.__setattr__(self, "class_set", tuple(str(c) for c in self.class_set))
        object.__setattr__(self, "rng_seed", int(self.rng_seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("image_extent", "n_objects", "size_range", "aspect_range", "class_set"):
            d[k] = list(d[k])
        return d


DEFAULT_PARAMETERS = {"camera": 70.0, "light": 1.0, "weather": 0.0, "sensor": 0.0}


@dataclass(frozen=True)
class ConditionSpec:
    kind: str
    parameter: float | None = None
    tag: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown condition kind {self.kind!r}; expected one of {KINDS}")
        p = DEFAULT_PARAMETERS[self.kind] if self.parameter is None else float(self.parameter)
        lo, hi = PARAMETER_RANGES[self.kind]
        if not (math.isfinite(p) and lo <= p <= hi):
            raise ConfigError(f"{self.kind} parameter must lie in [{lo}, {hi}], got {p}")
        object.__setattr__(self, "parameter", p)

    @property
    def label(self) -> str:
        if self.tag:
            return self.tag
        return f"{self.kind}={self.parameter:g}"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "parameter": self.parameter, "tag": self.label}


@dataclass(frozen=True)
class ConditionEffects:
    rain_miss: float = 0.25
    rain_center_jitter: float = 2.0
    rain_angle_jitter: float = 3.0
    light_score_spread: float = 0.3
    light_score_drop: float = 0.2
    sensor_confusion: float = 0.5


@dataclass(frozen=True)
class DetectorModel:
    miss_rate: float = 0.0
    #: expected false positives per scene (Poisson mean)
    fp_rate: float = 0.0
    center_jitter_sigma: float = 0.0
    #: relative (log-normal) size noise
    size_jitter_sigma: float = 0.0
    angle_jitter_sigma: float = 0.0
    tp_score_mean: float = 1.0
    fp_score_mean: float = 0.3
    score_sigma: float = 0.0
    class_confusion: float = 0.0
    #: when set, predicted angles pass through CSL encode/argmax decode
    angle_codec: CslConfig | None = None

    def __post_init__(self):
        for name in ("miss_rate", "class_confusion", "tp_score_mean", "fp_score_mean"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        for name in ("fp_rate", "center_jitter_sigma", "size_jitter_sigma", "angle_jitter_sigma", "score_sigma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.tp_score_mean < self.fp_score_mean:
            # equal-spread clipped normals: TP scores dominate FP scores iff this holds
            raise ConfigError("tp_score_mean must be >= fp_score_mean")

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.angle_codec is not None:
            d["angle_codec"] = self.angle_codec.to_dict()
        return d


def trial_seed(master_seed: int, tag: str, trial: int, stream: str = "scene") -> int:
    """Seed for one trial: a hash of (master seed, condition tag, trial index)."""
    key = f"{int(master_seed)}|{tag}|{int(trial)}|{stream}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def _size_scale(cfg: SceneConfig, cond: ConditionSpec | None) -> float:
    if cond is not None and cond.kind == "camera":
        return cfg.reference_distance / cond.parameter
    return 1.0


def _half_extents(w, h, theta):
    r = math.radians(theta)
    c, s = abs(math.cos(r)), abs(math.sin(r))
    return 0.5 * (w * c + h * s), 0.5 * (w * s + h * c)


def generate_scene(cfg: SceneConfig, cond: ConditionSpec | None = None) -> list[GroundTruth]:
    """Sample non-overlapping ground-truth boxes inside the image extent.

    Object attributes and placements come from separate random streams, so
    changing the camera distance rescales the same objects exactly.
    """
    attr_ss, place_ss = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    attr = np.random.default_rng(attr_ss)
    place = np.random.default_rng(place_ss)
    lo, hi = cfg.n_objects
    n = int(attr.integers(lo, hi + 1))
    scale = _size_scale(cfg, cond)
    width, height = cfg.image_extent
    placed: list[GroundTruth] = []
    for _ in range(n):
        long_edge = attr.uniform(*cfg.size_range) * scale
        short_edge = long_edge * attr.uniform(*cfg.aspect_range)
        theta = attr.uniform(0.0, 180.0)
        label = cfg.class_set[int(attr.integers(len(cfg.class_set)))]
        hx, hy = _half_extents(long_edge, short_edge, theta)
        if 2 * hx > width or 2 * hy > height:
            raise GenerationError(
                f"image_extent {cfg.image_extent} too small for object of size "
                f"{long_edge:.3g}x{short_edge:.3g} (size_range x distance scale {scale:.3g})"
            )
        for _attempt in range(cfg.max_retries):
            box = OrientedBox(place.uniform(hx, width - hx), place.uniform(hy, height - hy), long_edge, short_edge, theta)
            if all(rotated_iou(box, g.box) <= cfg.overlap_policy for g in placed):
                placed.append(GroundTruth(box, label))
                break
        else:
            raise GenerationError(
                f"could not place object {len(placed) + 1} of {n} within overlap_policy="
                f"{cfg.overlap_policy} after max_retries={cfg.max_retries}"
            )
    return placed


class EffectiveModel(NamedTuple):
    miss_rate: float
    center_jitter_sigma: float
    size_jitter_sigma: float
    angle_jitter_sigma: float
    tp_score_mean: float
    fp_score_mean: float
    score_sigma: float
    class_confusion: float


def effective_model(model: DetectorModel, cond: ConditionSpec | None, effects: ConditionEffects = ConditionEffects()) -> EffectiveModel:
    """Apply the condition mapping to a detector model."""
    miss = model.miss_rate
    cj = model.center_jitter_sigma
    aj = model.angle_jitter_sigma
    tp_mean = model.tp_score_mean
    sigma = model.score_sigma
    conf = model.class_confusion
    if cond is not None:
        p = cond.parameter
        if cond.kind == "weather":
            miss += effects.rain_miss * p
            cj += effects.rain_center_jitter * p
            aj += effects.rain_angle_jitter * p
        elif cond.kind == "light":
            dev = abs(1.0 - p)
            sigma += effects.light_score_spread * dev
            tp_mean = max(model.fp_score_mean, tp_mean - effects.light_score_drop * dev)
        elif cond.kind == "sensor":
            conf += effects.sensor_confusion * p
    return EffectiveModel(
        min(miss, 1.0), cj, model.size_jitter_sigma, aj, tp_mean, model.fp_score_mean, sigma, min(conf, 1.0)
    )


def _clip01(x):
    return float(min(1.0, max(0.0, x)))


def mock_detect(
    gts: Sequence[GroundTruth],
    model: DetectorModel,
    cond: ConditionSpec | None = None,
    seed: int = 0,
    scene: SceneConfig | None = None,
    effects: ConditionEffects = ConditionEffects(),
) -> list[Detection]:
    """Simulate detector output for one scene.

    Every random quantity has its own stream and is drawn whether or not it
    is used, so runs that differ in one parameter share all other noise.
    """
    scene = scene or SceneConfig()
    eff = effective_model(model, cond, effects)
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]
    miss_rng, jitter_rng, conf_rng, score_rng, fp_rng = streams
    n = len(gts)
    u_miss = miss_rng.random(n)
    z = jitter_rng.standard_normal((n, 5))
    u_conf = conf_rng.random((n, 2))
    z_score = score_rng.standard_normal(n)
    classes = scene.class_set
    dets = []
    for i, gt in enumerate(gts):
        if u_miss[i] < eff.miss_rate:
            continue
        b = gt.box
        theta = b.theta + eff.angle_jitter_sigma * z[i, 4]
        if model.angle_codec is not None:
            theta = decode_angle(encode_csl(theta % 180.0, model.angle_codec), model.angle_codec)
        box = OrientedBox(
            b.cx + eff.center_jitter_sigma * z[i, 0],
            b.cy + eff.center_jitter_sigma * z[i, 1],
            b.w * math.exp(eff.size_jitter_sigma * z[i, 2]),
            b.h * math.exp(eff.size_jitter_sigma * z[i, 3]),
            theta,
        )
        label = gt.class_id
        if u_conf[i, 0] < eff.class_confusion and len(classes) > 1 and label in classes:
            k = classes.index(label)
            label = classes[(k + 1 + int(u_conf[i, 1] * (len(classes) - 1))) % len(classes)]
        score = _clip01(eff.tp_score_mean + eff.score_sigma * z_score[i])
        dets.append(Detection(box, label, score))
    n_fp = int(fp_rng.poisson(model.fp_rate)) if model.fp_rate > 0 else 0
    if n_fp:
        width, height = scene.image_extent
        scale = _size_scale(scene, cond)
        for _ in range(n_fp):
            long_edge = fp_rng.uniform(*scene.size_range) * scale
            box = OrientedBox(
                fp_rng.uniform(0, width),
                fp_rng.uniform(0, height),
                long_edge,
                long_edge * fp_rng.uniform(*scene.aspect_range),
                fp_rng.uniform(0, 180),
            )
            label = classes[int(fp_rng.integers(len(classes)))]
            score = _clip01(eff.fp_score_mean + eff.score_sigma * fp_rng.standard_normal())
            dets.append(Detection(box, label, score))
    return dets


@dataclass(frozen=True)
class NmsSettings:
    iou_threshold: float = 0.5
    score_threshold: float = 0.0
    class_aware: bool = True


class Trial(NamedTuple):
    image_id: str
    gts: list
    dets: list


def simulate_trial(cfg, cond, model, trial, master_seed, nms=NmsSettings(), effects=ConditionEffects()) -> Trial:
    tag = cond.label
    scene_cfg = replace(cfg, rng_seed=trial_seed(master_seed, tag, trial, "scene"))
    gts = generate_scene(scene_cfg, cond)
    dets = mock_detect(gts, model, cond, trial_seed(master_seed, tag, trial, "detect"), scene_cfg, effects)
    dets = rotated_nms(dets, nms.iou_threshold, nms.score_threshold, nms.class_aware)
    return Trial(f"t{trial:05d}", gts, dets)


def _simulate_chunk(args):
    cfg, cond, model, trials, master_seed, nms, effects = args
    return [simulate_trial(cfg, cond, model, t, master_seed, nms, effects) for t in trials]


def simulate_condition(cfg, cond, model, trials, master_seed=0, nms=NmsSettings(), effects=ConditionEffects(), jobs=1) -> list[Trial]:
    """All trials of one condition, in trial order regardless of ``jobs``."""
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    idx = list(range(trials))
    if jobs <= 1:
        return _simulate_chunk((cfg, cond, model, idx, master_seed, nms, effects))
    chunks = [idx[i::jobs] for i in range(jobs)]
    out: list[Trial] = []
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for part in pool.map(_simulate_chunk, [(cfg, cond, model, c, master_seed, nms, effects) for c in chunks]):
            out.extend(part)
    return sorted(out, key=lambda t: t.image_id)


def evaluate_trials(trials: Sequence[Trial], iou_threshold=0.5, ap_mode="all_points", config=None) -> EvalReport:
    ids = [t.image_id for t in trials]
    per_image = [evaluate_image(t.dets, t.gts, iou_threshold) for t in trials]
    return reduce_images(ids, per_image, iou_threshold, ap_mode, config)


def run_sweep(
    cfg: SceneConfig,
    conditions: Sequence[ConditionSpec],
    model: DetectorModel,
    trials: int,
    master_seed: int = 0,
    nms: NmsSettings = NmsSettings(),
    iou_threshold: float = 0.5,
    ap_mode: str = "all_points",
    effects: ConditionEffects = ConditionEffects(),
    jobs: int = 1,
) -> dict[str, EvalReport]:
    """Evaluate ``model`` under each condition; returns ``{condition tag: report}``.

    Trials of a condition are pooled into one report (each trial is one image).
    """
    if not conditions:
        raise ConfigError("a sweep needs at least one condition")
    labels = [c.label for c in conditions]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"condition tags must be unique, got {labels}")
    out = {}
    for cond in conditions:
        sims = simulate_condition(cfg, cond, model, trials, master_seed, nms, effects, jobs)
        out[cond.label] = evaluate_trials(sims, iou_threshold, ap_mode, {"condition": cond.to_dict()})
    return out
