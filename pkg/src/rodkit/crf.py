"""Camera-radar fusion annotations and ConfMap rendering.

Camera-only (CO) localizations are emulated by perturbing ground truth. They
are turned into per-class Gaussian probability maps over the range-azimuth
grid, multiplied with a radar probability map built from CFAR peaks, and the
peaks of the product become the fused (CRF) annotations. Training targets
are rendered from any annotation list with :func:`gen_confmap`.
"""

from __future__ import annotations

import configparser
import logging
import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_array, check_positive
from .exceptions import ConfigError, DimensionError
from .radar import CLASSES, RadarConfig, azimuth_resolution_at, cfar_detect

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassParams:
    class_id: str
    scale_constant: float
    azimuth_error: float  # variance entry, rad^2
    ols_kappa: float
    confmap_scale: float | None = None

    def __post_init__(self):
        if self.confmap_scale is None:
            object.__setattr__(self, "confmap_scale", self.scale_constant)
        for f in ("scale_constant", "azimuth_error", "ols_kappa", "confmap_scale"):
            check_positive(f, getattr(self, f))


DEFAULT_CLASS_PARAMS = {
    "pedestrian": ClassParams("pedestrian", 0.05, 0.02**2, 0.10),
    "cyclist": ClassParams("cyclist", 0.05, 0.02**2, 0.15),
    "car": ClassParams("car", 0.08, 0.03**2, 0.20),
}


def load_class_params(source) -> dict[str, ClassParams]:
    """Read a ``[class]``-block config (path, text, or ConfigParser)."""
    if isinstance(source, configparser.ConfigParser):
        parser = source
    else:
        parser = configparser.ConfigParser()
        text = str(source)
        if "\n" in text or text.lstrip().startswith("["):
            parser.read_string(text)
        elif not parser.read(text):
            raise ConfigError(f"cannot read class parameter file {text}")
    out = dict(DEFAULT_CLASS_PARAMS)
    for cls in CLASSES:
        if not parser.has_section(cls):
            continue
        sec = parser[cls]
        base = out[cls]
        try:
            out[cls] = ClassParams(
                cls,
                sec.getfloat("scale_constant", base.scale_constant),
                sec.getfloat("azimuth_error", base.azimuth_error),
                sec.getfloat("ols_kappa", base.ols_kappa),
                sec.getfloat("confmap_scale", base.confmap_scale),
            )
        except ValueError as exc:
            raise ConfigError(f"bad value in [{cls}]: {exc}") from exc
    return out


def dump_class_params(params: dict[str, ClassParams]) -> str:
    lines = []
    for cls in CLASSES:
        p = params[cls]
        lines.append(f"[{cls}]")
        for f in fields(p):
            if f.name != "class_id":
                lines.append(f"{f.name} = {getattr(p, f.name)!r}")
        lines.append("")
    return "\n".join(lines)


@dataclass(frozen=True)
class CameraAnnotation:
    class_id: str
    range_m: float
    azimuth_rad: float
    depth_m: float
    depth_confidence: float
    frame_index: int = 0

    def __post_init__(self):
        check_positive("depth_m", self.depth_m)
        if not 0 < self.depth_confidence <= 1:
            raise ConfigError("depth_confidence must lie in (0, 1]")


@dataclass(frozen=True)
class RadarPeak:
    range_m: float
    azimuth_rad: float
    magnitude: float = 1.0


@dataclass(frozen=True)
class Annotation:
    class_id: str
    range_m: float
    azimuth_rad: float
    score: float = 1.0
    frame_index: int = 0
    source: str = "CRF"

    def to_record(self) -> dict:
        return {"frame": self.frame_index, "class": self.class_id, "range_m": self.range_m,
                "azimuth_rad": self.azimuth_rad, "score": self.score, "source": self.source}

    @classmethod
    def from_record(cls, rec: dict, source: str | None = None) -> "Annotation":
        return cls(rec["class"], float(rec["range_m"]), float(rec["azimuth_rad"]),
                   float(rec.get("score", 1.0)), int(rec["frame"]),
                   source or rec.get("source", "GT"))


# -- CO emulation --------------------------------------------------------------

def simulate_co_annotations(truth, noise=(0.05, 0.02, (0.5, 1.0)), rng_seed: int = 0):
    """Emulate monocular camera 3D localization from ground-truth records.

    ``noise`` is ``(range_noise_fraction, azimuth_noise_std, depth_conf_range)``.
    Errors are drawn once per track (records sharing a ``"track"`` key), which
    models the persistent bias of a monocular depth estimate; the range error
    is multiplicative, so its spread grows with distance.
    """
    frac, az_std, (c_lo, c_hi) = noise
    if frac < 0 or az_std < 0:
        raise ConfigError("noise parameters must be non-negative")
    if not 0 < c_lo <= c_hi <= 1:
        raise ConfigError("depth_conf_range must satisfy 0 < lo <= hi <= 1")
    rng = np.random.default_rng(rng_seed)
    draws: dict = {}
    out = []
    for i, rec in enumerate(truth):
        key = rec.get("track", ("record", i))
        if key not in draws:
            draws[key] = (rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), rng.uniform(c_lo, c_hi))
        z_r, z_a, conf = draws[key]
        rng_m = float(rec["range_m"]) * (1.0 + frac * z_r)
        az = float(rec["azimuth_rad"]) + az_std * z_a
        az = min(max(az, -math.pi / 2 + 1e-6), math.pi / 2 - 1e-6)
        rng_m = max(rng_m, 1e-3)
        depth = max(rng_m * math.cos(az), 1e-3)
        out.append(CameraAnnotation(rec["class"], rng_m, az, depth, float(conf),
                                    int(rec["frame"])))
    return out


# -- probability maps ------------------------------------------------------------

def _grid_coords(cfg: RadarConfig):
    return cfg.range_centers()[:, None], cfg.azimuth_centers()[None, :]


def gaussian_log_density(cfg: RadarConfig, mean, var) -> np.ndarray:
    """Unnormalized log of a diagonal bivariate Gaussian over (range, azimuth) cells."""
    rho, theta = _grid_coords(cfg)
    return -0.5 * ((rho - mean[0]) ** 2 / var[0] + (theta - mean[1]) ** 2 / var[1])


def _max_normalized(logd: np.ndarray) -> np.ndarray:
    # exp(E - max E) == density / max density, without underflow
    return np.exp(logd - logd.max())


def camera_prob_map(annos, params: dict[str, ClassParams], cfg: RadarConfig,
                    interpret_as_std: bool = False) -> np.ndarray:
    """Per-class camera probability maps, shape ``(n_classes, range, azimuth)``.

    Each object gets a Gaussian with range variance ``(d * s_cls / c)**2`` and
    azimuth variance ``azimuth_error`` (squared first if ``interpret_as_std``),
    normalized to peak 1 on the grid; objects of a class combine by max.
    """
    out = np.zeros((len(CLASSES),) + cfg.grid_shape)
    for a in annos:
        if a.class_id not in params:
            raise ConfigError(f"no parameters for class {a.class_id!r}")
        p = params[a.class_id]
        az_var = p.azimuth_error**2 if interpret_as_std else p.azimuth_error
        var = ((a.depth_m * p.scale_constant / a.depth_confidence) ** 2, az_var)
        c = CLASSES.index(a.class_id)
        np.maximum(out[c], _max_normalized(gaussian_log_density(cfg, (a.range_m, a.azimuth_rad), var)),
                   out=out[c])
    return out


def radar_prob_map(peaks, cfg: RadarConfig, interpret_as_std: bool = False) -> np.ndarray:
    """Radar probability map, shape ``(range, azimuth)``.

    Covariance is ``diag(range_resolution, azimuth_resolution(theta))`` taken
    literally as variances unless ``interpret_as_std`` is set.
    """
    out = np.zeros(cfg.grid_shape)
    for pk in peaks:
        eps = azimuth_resolution_at(cfg, pk.azimuth_rad)
        var = (cfg.range_resolution_m, eps)
        if interpret_as_std:
            var = (var[0] ** 2, var[1] ** 2)
        np.maximum(out, _max_normalized(gaussian_log_density(cfg, (pk.range_m, pk.azimuth_rad), var)),
                   out=out)
    return out


def fuse(camera: np.ndarray, radar: np.ndarray) -> np.ndarray:
    camera = np.asarray(camera)
    radar = np.asarray(radar)
    if camera.shape[-2:] != radar.shape:
        raise DimensionError(f"camera maps {camera.shape} and radar map {radar.shape} differ")
    return camera * radar


def _local_max_mask(values: np.ndarray) -> np.ndarray:
    return values >= ndimage.maximum_filter(values, size=3, mode="constant", cval=-np.inf)


def detect_annotations(fused: np.ndarray, cfg: RadarConfig, min_confidence: float = 0.3,
                       frame_index: int = 0, source: str = "CRF") -> list[Annotation]:
    """3x3 local maxima of the fused maps, deduplicated within one grid cell.

    Candidates are visited by descending score; one that lies within one cell
    (any class) of an already kept candidate is dropped.
    """
    if not 0 < min_confidence < 1:
        raise ConfigError("min_confidence must lie in (0, 1)")
    fused = check_array(fused, "fused", ndim=3)
    cands = []
    for c in range(fused.shape[0]):
        m = _local_max_mask(fused[c]) & (fused[c] >= min_confidence)
        for r, b in zip(*np.nonzero(m)):
            cands.append((-float(fused[c, r, b]), c, int(r), int(b)))
    cands.sort()
    kept: list[tuple] = []
    for neg, c, r, b in cands:
        if any(abs(r - kr) <= 1 and abs(b - kb) <= 1 for _, _, kr, kb in kept):
            continue
        kept.append((neg, c, r, b))
    rng_c = cfg.range_centers()
    az_c = cfg.azimuth_centers()
    return [Annotation(CLASSES[c], float(rng_c[r]), float(az_c[b]), -neg, frame_index, source)
            for neg, c, r, b in kept]


def peaks_from_cfar(ramap, cfg: RadarConfig, guard=2, train=4, scale=3.0) -> list[RadarPeak]:
    """CFAR detections as metric radar peaks; edge bins at |theta| = pi/2 are dropped."""
    rng_c = cfg.range_centers()
    az_c = cfg.azimuth_centers()
    out = []
    for r, b, mag in cfar_detect(ramap, guard, train, scale):
        if abs(az_c[b]) < math.pi / 2 - 1e-9:
            out.append(RadarPeak(float(rng_c[r]), float(az_c[b]), mag))
    return out


def crf_annotate_frame(ramap, camera_annos, params, cfg: RadarConfig, *, guard=2, train=4,
                       scale=3.0, min_confidence=0.3, interpret_as_std=False,
                       frame_index=0) -> list[Annotation]:
    """Full CRF step for one frame: CFAR peaks, both probability maps, fusion, peaks."""
    peaks = peaks_from_cfar(ramap, cfg, guard, train, scale)
    cam = camera_prob_map(camera_annos, params, cfg, interpret_as_std)
    rad = radar_prob_map(peaks, cfg, interpret_as_std)
    return detect_annotations(fuse(cam, rad), cfg, min_confidence, frame_index, "CRF")


class CRFAnnotator(TransformerMixin, BaseEstimator):
    """Transform RAMap frames plus per-frame camera annotations into CRF annotations.

    ``transform`` takes ``X`` as a complex array ``[frame, range, azimuth]`` and
    ``camera`` as a list (one entry per frame) of :class:`CameraAnnotation` lists.
    """

    def __init__(self, radar_config=None, class_params=None, guard=2, train=4, scale=3.0,
                 min_confidence=0.3, interpret_as_std=False):
        self.radar_config = radar_config
        self.class_params = class_params
        self.guard = guard
        self.train = train
        self.scale = scale
        self.min_confidence = min_confidence
        self.interpret_as_std = interpret_as_std

    def fit(self, X=None, y=None):
        self.config_ = self.radar_config or RadarConfig()
        self.params_ = self.class_params or dict(DEFAULT_CLASS_PARAMS)
        return self

    def transform(self, X, camera=None):
        if not hasattr(self, "config_"):
            self.fit()
        X = np.asarray(X)
        if camera is None or len(camera) != len(X):
            raise DimensionError("camera annotations must be given for every frame")
        return [
            crf_annotate_frame(frame, cam, self.params_, self.config_, guard=self.guard,
                               train=self.train, scale=self.scale,
                               min_confidence=self.min_confidence,
                               interpret_as_std=self.interpret_as_std, frame_index=i)
            for i, (frame, cam) in enumerate(zip(X, camera))
        ]


# -- ConfMaps ------------------------------------------------------------------------

def gen_confmap(annos, params: dict[str, ClassParams], cfg: RadarConfig,
                min_sigma_cells: float = 2.0, return_skipped: bool = False):
    """Render annotations into a ConfMap of shape ``(n_classes, range, azimuth)``.

    Each annotation is snapped to its nearest cell and drawn as an isotropic
    Gaussian in BEV meters with ``sigma = max(min_sigma_cells * range_resolution,
    range * confmap_scale)``, so the annotation cell holds exactly 1. Objects of
    one class combine by max. Annotations outside the grid are skipped.
    """
    out = np.zeros((len(CLASSES),) + cfg.grid_shape)
    rho = cfg.range_centers()[:, None]
    theta = cfg.azimuth_centers()[None, :]
    gx, gy = rho * np.sin(theta), rho * np.cos(theta)
    skipped = 0
    for a in annos:
        cls = a.class_id if hasattr(a, "class_id") else a[0]
        rng_m = a.range_m if hasattr(a, "range_m") else a[1]
        az = a.azimuth_rad if hasattr(a, "azimuth_rad") else a[2]
        if cls not in params:
            raise ConfigError(f"no parameters for class {cls!r}")
        if not (abs(az) <= math.pi / 2 and cfg.in_grid(rng_m, az)):
            skipped += 1
            continue
        r = cfg.bin_of_range(rng_m)
        b = cfg.bin_of_sin(az)
        cx, cy = gx[r, b], gy[r, b]
        sigma = max(min_sigma_cells * cfg.range_resolution_m, rng_m * params[cls].confmap_scale)
        g = np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * sigma**2))
        c = CLASSES.index(cls)
        np.maximum(out[c], g, out=out[c])
    if skipped:
        log.warning("gen_confmap skipped %d annotation(s) outside the grid", skipped)
    return (out, skipped) if return_skipped else out
