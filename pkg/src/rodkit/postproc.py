"""Turning predicted ConfMaps into point detections.

Object location similarity (OLS) plays the role IoU plays for boxes:
``exp(-d**2 / (2 * (s * kappa)**2))`` with ``d`` the BEV distance in meters,
``s`` the reference object's range and ``kappa`` a per-class tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_array
from .exceptions import ConfigError, DimensionError, DomainError
from .radar import CLASSES, RadarConfig


@dataclass(frozen=True)
class Detection:
    class_id: str
    range_m: float
    azimuth_rad: float
    confidence: float = 1.0
    frame_index: int = 0

    @property
    def xy(self) -> tuple[float, float]:
        return (self.range_m * math.sin(self.azimuth_rad), self.range_m * math.cos(self.azimuth_rad))

    def to_record(self) -> dict:
        return {"frame": self.frame_index, "class": self.class_id, "range_m": self.range_m,
                "azimuth_rad": self.azimuth_rad, "confidence": self.confidence}

    @classmethod
    def from_record(cls, rec: dict) -> "Detection":
        conf = rec.get("confidence", rec.get("score", 1.0))
        return cls(rec["class"], float(rec["range_m"]), float(rec["azimuth_rad"]),
                   float(conf), int(rec.get("frame", 0)))


def _default_kappa():
    from .crf import DEFAULT_CLASS_PARAMS

    return {c: p.ols_kappa for c, p in DEFAULT_CLASS_PARAMS.items()}


@dataclass(frozen=True)
class OlsParams:
    kappa_per_class: dict = field(default_factory=_default_kappa)

    @classmethod
    def from_class_params(cls, params) -> "OlsParams":
        return cls({c: p.ols_kappa for c, p in params.items()})

    def kappa(self, class_id: str) -> float:
        try:
            return self.kappa_per_class[class_id]
        except KeyError:
            raise ConfigError(f"no OLS kappa for class {class_id!r}") from None


def ols_value(distance_m: float, scale_m: float, kappa: float) -> float:
    if scale_m == 0 or kappa == 0:
        raise DomainError("OLS is undefined for zero object distance or kappa")
    return math.exp(-(distance_m**2) / (2.0 * (scale_m * kappa) ** 2))


def bev_distance(a, b) -> float:
    ax, ay = a.range_m * math.sin(a.azimuth_rad), a.range_m * math.cos(a.azimuth_rad)
    bx, by = b.range_m * math.sin(b.azimuth_rad), b.range_m * math.cos(b.azimuth_rad)
    return math.hypot(ax - bx, ay - by)


def ols(a, b, params: OlsParams) -> float:
    """OLS between ``a`` and the reference point ``b``; ``b`` supplies range and class."""
    return ols_value(bev_distance(a, b), b.range_m, params.kappa(b.class_id))


def find_peaks(conf: np.ndarray, cfg: RadarConfig, min_confidence: float = 0.05,
               frame_index: int = 0) -> list[Detection]:
    """Cells strictly greater than all their in-grid 3x3 neighbors, per channel.

    The zero-range row is never reported: OLS has no scale there.
    """
    if not 0 <= min_confidence < 1:
        raise ConfigError("min_confidence must lie in [0, 1)")
    conf = check_array(conf, "confmap", ndim=3)
    C, R, A = conf.shape
    if (R, A) != cfg.grid_shape:
        raise DimensionError(f"confmap grid {(R, A)} != config grid {cfg.grid_shape}")
    padded = np.pad(conf, ((0, 0), (1, 1), (1, 1)), constant_values=-np.inf)
    strict = np.ones(conf.shape, dtype=bool)
    for dr in (-1, 0, 1):
        for da in (-1, 0, 1):
            if dr or da:
                strict &= conf > padded[:, 1 + dr: 1 + dr + R, 1 + da: 1 + da + A]
    strict &= conf >= min_confidence
    rng_c, az_c = cfg.range_centers(), cfg.azimuth_centers()
    strict &= (rng_c > 0)[None, :, None]
    return [Detection(CLASSES[c], float(rng_c[r]), float(az_c[b]), float(conf[c, r, b]),
                      frame_index)
            for c, r, b in zip(*np.nonzero(strict))]


def _confidence_order(peaks):
    # stable: ties keep their input order
    return sorted(range(len(peaks)), key=lambda i: -peaks[i].confidence)


def l_nms(peaks, params: OlsParams, ols_threshold: float = 0.3) -> list[Detection]:
    """Location-based NMS across all classes.

    Repeatedly keeps the most confident remaining peak and discards every
    remaining peak whose OLS with it exceeds ``ols_threshold``. The kept
    peak provides the range scale and kappa.
    """
    if not 0 < ols_threshold < 1:
        raise ConfigError("ols_threshold must lie in (0, 1)")
    peaks = list(peaks)
    if not peaks:
        return []
    order = _confidence_order(peaks)
    xy = np.array([peaks[i].xy for i in order])
    rng = np.array([peaks[i].range_m for i in order])
    alive = np.ones(len(order), dtype=bool)
    keep = []
    for pos in range(len(order)):
        if not alive[pos]:
            continue
        keep.append(peaks[order[pos]])
        alive[pos] = False
        k = params.kappa(peaks[order[pos]].class_id)
        if rng[pos] == 0:
            raise DomainError("OLS is undefined for a peak at zero range")
        d2 = ((xy[pos + 1:] - xy[pos]) ** 2).sum(axis=1)
        sim = np.exp(-d2 / (2.0 * (rng[pos] * k) ** 2))
        alive[pos + 1:] &= ~(sim > ols_threshold)
    return keep


def merge_confmaps(windows, n_frames: int | None = None) -> np.ndarray:
    """Average overlapping window predictions frame by frame.

    ``windows`` holds ``(start_frame, maps)`` pairs with ``maps`` shaped
    ``(tau, C, R, A)``. Returns ``(n_frames, C, R, A)``.
    """
    windows = [(int(s), np.asarray(m)) for s, m in windows]
    if not windows:
        raise DimensionError("no window predictions to merge")
    inner = windows[0][1].shape[1:]
    if any(m.shape[1:] != inner for _, m in windows):
        raise DimensionError("window predictions have inconsistent shapes")
    if n_frames is None:
        n_frames = max(s + len(m) for s, m in windows)
    acc = np.zeros((n_frames,) + inner)
    cnt = np.zeros(n_frames)
    for s, m in windows:
        if s < 0 or s + len(m) > n_frames:
            raise DimensionError(f"window at {s} of length {len(m)} exceeds {n_frames} frames")
        acc[s: s + len(m)] += m
        cnt[s: s + len(m)] += 1
    if np.any(cnt == 0):
        missing = np.flatnonzero(cnt == 0).tolist()
        raise DimensionError(f"frames not covered by any window: {missing}")
    return acc / cnt[:, None, None, None]


def window_starts(n_frames: int, tau: int, stride: int) -> list[int]:
    """Window start frames that cover ``n_frames`` with step ``stride``.

    A final window aligned to the end is added when the stride grid leaves a tail.
    """
    if stride < 1 or tau < 1:
        raise ConfigError("stride and snippet length must be >= 1")
    if stride > tau:
        raise ConfigError(f"stride {stride} exceeds snippet length {tau}; frames would be skipped")
    if n_frames < tau:
        raise DimensionError(f"sequence of {n_frames} frames is shorter than tau={tau}")
    starts = list(range(0, n_frames - tau + 1, stride))
    if starts[-1] + tau < n_frames:
        starts.append(n_frames - tau)
    return starts
