"""Circular Smooth Label (CSL) angle codec.

Angles in [0, 180) are binned into ``num_classes`` classes. A label spreads
mass over neighbouring classes with a window that wraps around, so the
classes next to 0 and next to 180 are neighbours rather than far apart.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ShapeError

WINDOWS = ("gaussian", "triangle", "rectangle", "pulse")


@dataclass(frozen=True)
class CslConfig:
    num_classes: int = 180
    window: str = "gaussian"
    radius: float = 6.0

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise ConfigError(f"unknown CSL window {self.window!r}; expected one of {WINDOWS}")
        if int(self.num_classes) != self.num_classes or self.num_classes < 2:
            raise ConfigError(f"num_classes must be an integer >= 2, got {self.num_classes}")
        object.__setattr__(self, "num_classes", int(self.num_classes))
        if self.window == "pulse":
            object.__setattr__(self, "radius", 0.0)
        radius = float(self.radius)
        if not math.isfinite(radius) or not 0 <= radius < self.num_classes / 2:
            raise ConfigError(
                f"radius must satisfy 0 <= radius < num_classes/2, got {self.radius}"
            )
        object.__setattr__(self, "radius", radius)

    @property
    def bin_width(self) -> float:
        return 180.0 / self.num_classes

    def to_dict(self) -> dict:
        return asdict(self)


def angular_distance(a: int, b: int, n: int) -> int:
    """Circular distance between class indices ``a`` and ``b`` out of ``n``."""
    d = abs(int(a) - int(b)) % n
    return min(d, n - d)


def angle_to_class(theta: float, num_classes: int) -> int:
    # half-up rounding, not bankers'
    return int(math.floor(theta * num_classes / 180.0 + 0.5)) % num_classes


def window_values(d: np.ndarray, cfg: CslConfig) -> np.ndarray:
    """Window ``g(d)`` for integer distances; 1 at 0, exactly 0 beyond radius."""
    d = np.asarray(d, dtype=np.float64)
    r = cfg.radius
    inside = d <= r
    if cfg.window == "pulse" or r == 0:
        g = (d == 0).astype(np.float64)
    elif cfg.window == "gaussian":
        # sigma = r / 3, written via d / r so tiny radii cannot underflow sigma
        with np.errstate(over="ignore"):
            u = 3.0 * d / r
            g = np.exp(-0.5 * u * u)
    elif cfg.window == "triangle":
        # r + 1 keeps the outermost class inside the window nonzero
        g = 1.0 - d / (r + 1.0)
    else:
        g = np.ones_like(d)
    return np.where(inside, g, 0.0)


def encode_csl(theta: float, cfg: CslConfig | None = None) -> np.ndarray:
    """Smooth label vector of length ``num_classes`` for angle ``theta`` (degrees)."""
    cfg = cfg or CslConfig()
    theta = float(theta)
    if not math.isfinite(theta):
        raise ConfigError(f"angle must be finite, got {theta}")
    n = cfg.num_classes
    k_true = angle_to_class(theta, n)
    k = np.arange(n)
    d = np.abs(k - k_true)
    d = np.minimum(d, n - d)
    return window_values(d, cfg)


def decode_angle(logits, cfg: CslConfig | None = None) -> float:
    """Argmax class times bin width; ties go to the smaller index."""
    cfg = cfg or CslConfig()
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (cfg.num_classes,):
        raise ShapeError(f"expected {cfg.num_classes} logits, got shape {logits.shape}")
    return float(np.argmax(logits)) * cfg.bin_width


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    return z - np.log(np.sum(np.exp(z)))


def csl_loss(logits, target) -> tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against the sum-normalized CSL target.

    Returns ``(loss, grad)`` where ``grad`` is d loss / d logits, i.e.
    ``softmax(logits) - target / target.sum()``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if logits.ndim != 1 or logits.shape != target.shape:
        raise ShapeError(f"logits {logits.shape} and target {target.shape} must be equal 1-D shapes")
    if not (np.all(np.isfinite(logits)) and np.all(np.isfinite(target))):
        raise ShapeError("logits and target must be finite")
    total = target.sum()
    if total <= 0 or np.any(target < 0):
        raise ShapeError("target must be nonnegative with positive mass")
    t_hat = target / total
    logp = log_softmax(logits)
    loss = float(-np.dot(t_hat, logp))
    grad = np.exp(logp) - t_hat
    return max(loss, 0.0), grad
