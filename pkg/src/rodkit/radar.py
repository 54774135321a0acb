"""FMCW scene synthesis, the RAMap processing chain and CA-CFAR peak detection.

The chain is range FFT over fast-time samples, a coherent mean across chirps
(a DC-selecting low-pass), and a zero-padded, FFT-shifted angle FFT across the
receive antennas. Azimuth bins are uniform in ``sin(theta)``, which is the
native grid of an FFT over a uniform linear array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_array, check_count, check_positive
from .exceptions import ConfigError, DimensionError, DomainError

CLASSES = ("pedestrian", "cyclist", "car")
DIFFICULTIES = ("easy", "medium", "hard")
SPEED_OF_LIGHT = 299_792_458.0

# seed-sequence stream id for static clutter, kept apart from per-frame streams
_CLUTTER_STREAM = 0x7FFF_FFFF


@dataclass(frozen=True)
class RadarConfig:
    samples_per_chirp: int = 128
    chirps_per_frame: int = 4
    num_antennas: int = 8
    range_bins: int = 128
    azimuth_bins: int = 128
    range_resolution_m: float = 0.25
    antenna_spacing_wavelengths: float = 0.5
    frame_rate_hz: float = 30.0
    carrier_frequency_hz: float = 77e9
    chirp_period_s: float = 20e-6

    def __post_init__(self):
        for name in ("samples_per_chirp", "chirps_per_frame", "num_antennas",
                     "range_bins", "azimuth_bins"):
            check_count(name, getattr(self, name))
        for name in ("range_resolution_m", "antenna_spacing_wavelengths", "frame_rate_hz",
                     "carrier_frequency_hz", "chirp_period_s"):
            check_positive(name, getattr(self, name))
        if self.range_bins > self.samples_per_chirp:
            raise ConfigError("range_bins must not exceed samples_per_chirp")
        if self.azimuth_bins < self.num_antennas:
            raise ConfigError("azimuth_bins must be >= num_antennas")

    @property
    def max_range_m(self) -> float:
        return self.range_bins * self.range_resolution_m

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.range_bins, self.azimuth_bins)

    # -- grid coordinates -------------------------------------------------
    def range_centers(self) -> np.ndarray:
        return np.arange(self.range_bins) * self.range_resolution_m

    def azimuth_sines(self) -> np.ndarray:
        """sin(theta) at each FFT-shifted azimuth bin."""
        k = np.arange(self.azimuth_bins) - self.azimuth_bins // 2
        return k / (self.azimuth_bins * self.antenna_spacing_wavelengths)

    def azimuth_centers(self) -> np.ndarray:
        return np.arcsin(np.clip(self.azimuth_sines(), -1.0, 1.0))

    def bin_of_range(self, range_m):
        idx = np.rint(np.asarray(range_m) / self.range_resolution_m).astype(int)
        return idx if idx.ndim else int(idx)

    def bin_of_sin(self, azimuth_rad):
        """Nearest azimuth bin for an angle; inverse of :meth:`azimuth_sines`."""
        pos = (self.azimuth_bins // 2
               + self.azimuth_bins * self.antenna_spacing_wavelengths * np.sin(azimuth_rad))
        idx = np.clip(np.rint(pos), 0, self.azimuth_bins - 1).astype(int)
        return idx if idx.ndim else int(idx)

    def in_grid(self, range_m, azimuth_rad) -> bool:
        r = self.bin_of_range(range_m)
        s = (self.azimuth_bins // 2
             + self.azimuth_bins * self.antenna_spacing_wavelengths * math.sin(azimuth_rad))
        return 0 <= r < self.range_bins and -0.5 <= s < self.azimuth_bins - 0.5


def difficulty_of(num_objects: int, clutter_density: float) -> str:
    if num_objects >= 4 or clutter_density >= 8:
        return "hard"
    if num_objects <= 2 and clutter_density <= 2:
        return "easy"
    return "medium"


@dataclass(frozen=True)
class SceneObject:
    class_id: str
    range_m: float
    azimuth_rad: float
    radial_velocity_mps: float = 0.0
    reflectivity: float = 1.0
    micro_motion_std: float = 0.0

    def __post_init__(self):
        if self.class_id not in CLASSES:
            raise ConfigError(f"unknown class {self.class_id!r}")
        if not abs(self.azimuth_rad) <= math.pi / 2:
            raise ConfigError("azimuth_rad must lie in [-pi/2, pi/2]")
        check_positive("reflectivity", self.reflectivity)
        check_positive("micro_motion_std", self.micro_motion_std, strict=False)
        check_positive("range_m", self.range_m)

    def range_at(self, frame_index: int, frame_rate_hz: float) -> float:
        return self.range_m + self.radial_velocity_mps * frame_index / frame_rate_hz


@dataclass(frozen=True)
class Scene:
    objects: tuple = ()
    clutter_density: float = 0.0
    noise_std: float = 0.0
    num_frames: int = 1
    clutter_amplitude: tuple = (0.1, 0.5)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        lo, hi = self.clutter_amplitude
        if not 0 <= lo <= hi:
            raise ConfigError("clutter_amplitude must satisfy 0 <= lo <= hi")
        check_count("num_frames", self.num_frames)
        check_positive("clutter_density", self.clutter_density, strict=False)
        check_positive("noise_std", self.noise_std, strict=False)

    @property
    def difficulty(self) -> str:
        return difficulty_of(len(self.objects), self.clutter_density)

    def validate(self, cfg: RadarConfig):
        for obj in self.objects:
            if not 0 < obj.range_m < cfg.max_range_m:
                raise ConfigError(
                    f"object range {obj.range_m} outside (0, {cfg.max_range_m})")
        return self

    def truth(self, cfg: RadarConfig) -> list[dict]:
        """Per-frame ground-truth records for objects that are inside the grid."""
        records = []
        for f in range(self.num_frames):
            for track, obj in enumerate(self.objects):
                r = obj.range_at(f, cfg.frame_rate_hz)
                if 0 < r < cfg.max_range_m:
                    records.append({"frame": f, "class": obj.class_id, "range_m": float(r),
                                    "azimuth_rad": float(obj.azimuth_rad), "track": track})
        return records


@dataclass
class RawCube:
    samples: np.ndarray  # complex [chirp, sample, antenna]

    @property
    def shape(self):
        return self.samples.shape

    def check(self, cfg: RadarConfig):
        want = (cfg.chirps_per_frame, cfg.samples_per_chirp, cfg.num_antennas)
        if self.samples.shape != want:
            raise DimensionError(f"raw cube shape {self.samples.shape} != {want}")
        return self


@dataclass
class RAMap:
    cells: np.ndarray  # complex [range_bin, azimuth_bin]
    frame_index: int = 0

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.cells)


def _as_cells(ramap) -> np.ndarray:
    cells = ramap.cells if isinstance(ramap, RAMap) else ramap
    return check_array(cells, "ramap", ndim=2, complex_ok=True)


# -- synthesis ---------------------------------------------------------------

def scene_clutter(scene: Scene, cfg: RadarConfig, rng_seed: int,
                  fov_rad: float = math.pi / 3):
    """Static clutter scatterers of a scene: (range_m, sin_az, amplitude, phase) arrays.

    The count is Poisson with mean ``clutter_density``; amplitudes are uniform
    in ``clutter_amplitude`` times the strongest object reflectivity. The draw
    depends only on ``rng_seed``, so clutter stays put across frames.
    """
    rng = np.random.default_rng([rng_seed, _CLUTTER_STREAM])
    n = rng.poisson(scene.clutter_density) if scene.clutter_density > 0 else 0
    ref = max((o.reflectivity for o in scene.objects), default=1.0)
    ranges = rng.uniform(1.0, cfg.max_range_m - cfg.range_resolution_m, n)
    sines = rng.uniform(-math.sin(fov_rad), math.sin(fov_rad), n)
    amps = rng.uniform(*scene.clutter_amplitude, n) * ref
    phases = rng.uniform(0, 2 * math.pi, n)
    return ranges, sines, amps, phases


def synth_raw_frame(scene: Scene, cfg: RadarConfig, frame_index: int = 0,
                    rng_seed: int = 0) -> RawCube:
    """Synthesize one frame of beat-signal samples, indexed [chirp, sample, antenna].

    Each reflector contributes a complex sinusoid whose fast-time frequency is
    ``range / range_resolution`` bins, whose antenna phase progression is
    ``2*pi*d*sin(theta)`` and whose chirp phase advances with radial velocity.
    Complex noise has ``E|n|^2 = noise_std**2``.
    """
    scene.validate(cfg)
    K, N, M = cfg.chirps_per_frame, cfg.samples_per_chirp, cfg.num_antennas
    rng = np.random.default_rng([rng_seed, frame_index])
    lam = cfg.wavelength_m

    ranges, sines, chirp_terms = [], [], []
    k = np.arange(K)
    for obj in scene.objects:
        jitter = rng.normal(0.0, obj.micro_motion_std, K) if obj.micro_motion_std > 0 else np.zeros(K)
        r = obj.range_at(frame_index, cfg.frame_rate_hz)
        if not 0 < r < cfg.max_range_m:
            continue
        phase0 = 4 * math.pi * r / lam
        dphase = 4 * math.pi * obj.radial_velocity_mps * cfg.chirp_period_s / lam
        chirp_terms.append(obj.reflectivity * np.exp(1j * (phase0 + k * dphase + jitter)))
        ranges.append(r)
        sines.append(math.sin(obj.azimuth_rad))

    c_r, c_s, c_a, c_p = scene_clutter(scene, cfg, rng_seed)
    for r, s, a, p in zip(c_r, c_s, c_a, c_p):
        chirp_terms.append(np.full(K, a * np.exp(1j * p)))
        ranges.append(r)
        sines.append(s)

    samples = np.zeros((K, N, M), dtype=np.complex128)
    if ranges:
        ranges = np.asarray(ranges)
        sines = np.asarray(sines)
        fast = np.exp(2j * np.pi * np.outer(ranges / cfg.range_resolution_m, np.arange(N)) / N)
        ant = np.exp(2j * np.pi * cfg.antenna_spacing_wavelengths * np.outer(sines, np.arange(M)))
        samples += np.einsum("sk,sn,sm->knm", np.asarray(chirp_terms), fast, ant)
    if scene.noise_std > 0:
        noise = rng.standard_normal((K, N, M)) + 1j * rng.standard_normal((K, N, M))
        samples += noise * (scene.noise_std / math.sqrt(2))
    return RawCube(samples)


# -- processing chain ----------------------------------------------------------

def range_fft(raw, cfg: RadarConfig) -> np.ndarray:
    """FFT along fast time, truncated to the first ``range_bins`` bins.

    Returns a complex grid indexed [chirp, range_bin, antenna].
    """
    samples = raw.samples if isinstance(raw, RawCube) else np.asarray(raw)
    want = (cfg.chirps_per_frame, cfg.samples_per_chirp, cfg.num_antennas)
    if samples.shape != want:
        raise DimensionError(f"raw cube shape {samples.shape} != {want}")
    return np.fft.fft(samples, axis=1)[:, : cfg.range_bins, :]


def lowpass_chirps(range_data: np.ndarray, cfg: RadarConfig | None = None) -> np.ndarray:
    """Coherent mean across chirps: keeps only the zero-Doppler component."""
    range_data = np.asarray(range_data)
    if range_data.ndim != 3:
        raise DimensionError("expected [chirp, range_bin, antenna] input")
    if cfg is not None and range_data.shape[2] != cfg.num_antennas:
        raise DimensionError("antenna axis does not match config")
    return range_data.mean(axis=0)


def angle_fft(rx_data: np.ndarray, cfg: RadarConfig, frame_index: int = 0) -> RAMap:
    rx_data = np.asarray(rx_data)
    if rx_data.ndim != 2 or rx_data.shape[1] != cfg.num_antennas:
        raise DimensionError(
            f"expected [range_bin, {cfg.num_antennas}] input, got {rx_data.shape}")
    spec = np.fft.fftshift(np.fft.fft(rx_data, n=cfg.azimuth_bins, axis=1), axes=1)
    return RAMap(spec, frame_index)


def raw_to_ramap(raw, cfg: RadarConfig, frame_index: int = 0) -> RAMap:
    return angle_fft(lowpass_chirps(range_fft(raw, cfg), cfg), cfg, frame_index)


def synth_sequence(scene: Scene, cfg: RadarConfig, rng_seed: int = 0) -> np.ndarray:
    """RAMaps for every frame of a scene, complex array [frame, range, azimuth]."""
    return np.stack([
        raw_to_ramap(synth_raw_frame(scene, cfg, f, rng_seed), cfg, f).cells
        for f in range(scene.num_frames)
    ])


class RAMapTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer from raw cubes ``[n, chirp, sample, antenna]`` to RAMaps."""

    def __init__(self, radar_config: RadarConfig | None = None):
        self.radar_config = radar_config

    def fit(self, X, y=None):
        self.config_ = self.radar_config or RadarConfig()
        return self

    def transform(self, X):
        cfg = getattr(self, "config_", None) or self.radar_config or RadarConfig()
        X = np.asarray(X)
        if X.ndim == 3:
            X = X[None]
        return np.stack([raw_to_ramap(cube, cfg, i).cells for i, cube in enumerate(X)])


# -- CFAR ------------------------------------------------------------------------

def _box_sums(a: np.ndarray, half: int) -> np.ndarray:
    """Sum of ``a`` over the (2*half+1)^2 window at each cell, truncated at edges."""
    R, A = a.shape
    ii = np.zeros((R + 1, A + 1))
    ii[1:, 1:] = a.cumsum(0).cumsum(1)
    r = np.arange(R)
    c = np.arange(A)
    r0 = np.clip(r - half, 0, R)[:, None]
    r1 = np.clip(r + half + 1, 0, R)[:, None]
    c0 = np.clip(c - half, 0, A)[None, :]
    c1 = np.clip(c + half + 1, 0, A)[None, :]
    return ii[r1, c1] - ii[r0, c1] - ii[r1, c0] + ii[r0, c0]


def cfar_noise_level(mag: np.ndarray, guard: int = 2, train: int = 4) -> np.ndarray:
    """Mean magnitude of the rectangular training ring around each cell."""
    outer = guard + train
    ones = np.ones_like(mag, dtype=float)
    ring_sum = _box_sums(mag, outer) - _box_sums(mag, guard)
    ring_cnt = _box_sums(ones, outer) - _box_sums(ones, guard)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(ring_cnt > 0.5, ring_sum / np.maximum(ring_cnt, 1), 0.0)


def cfar_detect(ramap, guard: int = 2, train: int = 4, scale: float = 3.0):
    """2D cell-averaging CFAR on RAMap magnitude.

    A cell is reported when its magnitude exceeds ``scale`` times the mean of
    its training ring and it is a maximum of its 3x3 neighborhood. Returns a
    list of ``(range_bin, azimuth_bin, magnitude)`` sorted by descending magnitude.
    """
    if not scale > 1:
        raise ConfigError(f"CFAR scale must be > 1, got {scale}")
    check_count("guard", guard, 0)
    check_count("train", train, 1)
    mag = np.abs(_as_cells(ramap))
    noise = cfar_noise_level(mag, guard, train)
    local_max = mag >= ndimage.maximum_filter(mag, size=3, mode="constant", cval=-np.inf)
    hit = (mag > scale * noise) & local_max
    rs, bs = np.nonzero(hit)
    order = np.lexsort((bs, rs, -mag[rs, bs]))
    return [(int(rs[i]), int(bs[i]), float(mag[rs[i], bs[i]])) for i in order]


class CFARDetector(BaseEstimator):
    """Estimator wrapper around :func:`cfar_detect` for use on RAMap stacks."""

    def __init__(self, guard=2, train=4, scale=3.0):
        self.guard = guard
        self.train = train
        self.scale = scale

    def fit(self, X=None, y=None):
        if not self.scale > 1:
            raise ConfigError("scale must be > 1")
        return self

    def predict(self, X):
        X = np.asarray(X)
        if X.ndim == 2:
            return cfar_detect(X, self.guard, self.train, self.scale)
        return [cfar_detect(frame, self.guard, self.train, self.scale) for frame in X]


def azimuth_resolution_at(cfg: RadarConfig, azimuth_rad: float) -> float:
    """Uniform-linear-array beamwidth 1 / (N d cos(theta)) in radians."""
    if not abs(azimuth_rad) < math.pi / 2:
        raise DomainError("azimuth must satisfy |theta| < pi/2")
    return 1.0 / (cfg.num_antennas * cfg.antenna_spacing_wavelengths * math.cos(azimuth_rad))


# -- random scenes -------------------------------------------------------------

@dataclass(frozen=True)
class ClassProfile:
    reflectivity: tuple[float, float]
    micro_motion_std: float
    speed: tuple[float, float]


DEFAULT_PROFILES = {
    "pedestrian": ClassProfile((0.6, 0.9), 1.2, (0.5, 1.5)),
    "cyclist": ClassProfile((1.1, 1.5), 0.6, (2.0, 4.0)),
    "car": ClassProfile((2.2, 3.0), 0.0, (3.0, 6.0)),
}


@dataclass(frozen=True)
class SimulatorSettings:
    noise_std: float = 1.0
    num_frames: int = 32
    fov_rad: float = math.pi / 3
    min_range_m: float = 2.0
    min_separation_m: float = 2.5
    profiles: dict = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    clutter_amplitude: tuple = (0.3, 1.0)


_DIFFICULTY_DRAWS = {
    # (object counts, clutter density interval)
    "easy": ((1, 2), (0.0, 2.0)),
    "medium": ((2, 3), (3.0, 7.0)),
    "hard": ((4, 5), (8.0, 12.0)),
}


def random_scene(cfg: RadarConfig, difficulty: str, rng: np.random.Generator,
                 settings: SimulatorSettings | None = None, max_tries: int = 200) -> Scene:
    """Draw a random scene whose difficulty bucket is ``difficulty``.

    Objects move radially; trajectories are kept inside the grid and apart
    from each other for the whole sequence.
    """
    if difficulty not in _DIFFICULTY_DRAWS:
        raise ConfigError(f"unknown difficulty {difficulty!r}")
    s = settings or SimulatorSettings()
    counts, (c_lo, c_hi) = _DIFFICULTY_DRAWS[difficulty]
    n_obj = int(rng.integers(counts[0], counts[1] + 1))
    clutter = float(rng.uniform(c_lo, c_hi))
    duration = (s.num_frames - 1) / cfg.frame_rate_hz
    lo, hi = s.min_range_m, cfg.max_range_m - 2 * cfg.range_resolution_m

    objects: list[SceneObject] = []
    tries = 0
    while len(objects) < n_obj:
        tries += 1
        if tries > max_tries * n_obj:
            raise ConfigError("could not place objects; grid too small for scene settings")
        cls = CLASSES[int(rng.integers(len(CLASSES)))]
        prof = s.profiles[cls]
        speed = rng.uniform(*prof.speed) * rng.choice([-1.0, 1.0])
        travel = speed * duration
        r_lo, r_hi = max(lo, lo - travel), min(hi, hi - travel)
        if r_hi <= r_lo:
            continue
        r0 = float(rng.uniform(r_lo, r_hi))
        az = float(math.asin(rng.uniform(-math.sin(s.fov_rad), math.sin(s.fov_rad))))
        cand = SceneObject(cls, r0, az, float(speed), float(rng.uniform(*prof.reflectivity)),
                           prof.micro_motion_std)
        if all(_min_gap(cand, o, duration) >= s.min_separation_m for o in objects):
            objects.append(cand)
    return Scene(tuple(objects), clutter, s.noise_std, s.num_frames, tuple(s.clutter_amplitude))


def _min_gap(a: SceneObject, b: SceneObject, duration: float) -> float:
    gaps = []
    for t in np.linspace(0.0, duration, 5):
        ra = a.range_m + a.radial_velocity_mps * t
        rb = b.range_m + b.radial_velocity_mps * t
        dx = ra * math.sin(a.azimuth_rad) - rb * math.sin(b.azimuth_rad)
        dy = ra * math.cos(a.azimuth_rad) - rb * math.cos(b.azimuth_rad)
        gaps.append(math.hypot(dx, dy))
    return min(gaps)
