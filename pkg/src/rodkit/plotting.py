"""Render RAMaps, ConfMaps and detections as 8-bit pixmaps.

Images have one pixel per grid cell. Row 0 is the far end of the range axis
so the radar sits at the bottom edge; columns run left to right in azimuth.
"""

from __future__ import annotations

import numpy as np

from .radar import CLASSES, RadarConfig

CLASS_COLORS = {
    "pedestrian": (255, 64, 64),
    "cyclist": (64, 255, 64),
    "car": (64, 128, 255),
}

# marker offsets per class: plus, cross, hollow square
_MARKERS = {
    "pedestrian": [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1), (-2, 0), (2, 0), (0, -2), (0, 2)],
    "cyclist": [(0, 0), (-1, -1), (1, 1), (-1, 1), (1, -1), (-2, -2), (2, 2), (-2, 2), (2, -2)],
    "car": [(dr, da) for dr in range(-2, 3) for da in range(-2, 3) if max(abs(dr), abs(da)) == 2],
}


def _flip(img):
    return img[::-1]


def ramap_image(cells, dynamic_range_db: float = 40.0) -> np.ndarray:
    """Grayscale ``uint8`` image of ``|cells|`` on a dB scale.

    The brightest cell maps to 255 and anything ``dynamic_range_db`` below it
    maps to 0. An all-zero map renders black.
    """
    mag = np.abs(np.asarray(cells))
    peak = mag.max() if mag.size else 0.0
    if peak <= 0:
        return np.zeros(mag.shape, dtype=np.uint8)
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag / peak)
    scaled = np.clip(1 + db / dynamic_range_db, 0, 1)
    return _flip(np.rint(255 * scaled).astype(np.uint8))


def confmap_image(conf) -> np.ndarray:
    """Color image of a ``(C, R, A)`` ConfMap; each class tints with its color."""
    conf = np.clip(np.asarray(conf, dtype=float), 0, 1)
    rgb = np.zeros(conf.shape[1:] + (3,))
    for c, cls in enumerate(CLASSES[: conf.shape[0]]):
        rgb = np.maximum(rgb, conf[c][..., None] * np.array(CLASS_COLORS[cls]))
    return _flip(np.rint(rgb).astype(np.uint8))


def detection_overlay(cells, detections, cfg: RadarConfig) -> np.ndarray:
    """RAMap backdrop with a class-specific marker at every detection."""
    gray = ramap_image(cells)
    img = np.repeat(gray[..., None], 3, axis=2)
    R, A = gray.shape
    for d in detections:
        r = cfg.bin_of_range(d.range_m)
        b = cfg.bin_of_sin(d.azimuth_rad)
        row = R - 1 - r
        for dr, da in _MARKERS.get(d.class_id, _MARKERS["car"]):
            y, x = row + dr, b + da
            if 0 <= y < R and 0 <= x < A:
                img[y, x] = CLASS_COLORS.get(d.class_id, (255, 255, 255))
    return img
