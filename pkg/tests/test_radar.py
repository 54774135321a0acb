import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import naive_dft
from rodkit.exceptions import ConfigError, DimensionError, DomainError
from rodkit.radar import (
    CFARDetector,
    RAMapTransformer,
    RadarConfig,
    Scene,
    SceneObject,
    angle_fft,
    azimuth_resolution_at,
    cfar_detect,
    difficulty_of,
    lowpass_chirps,
    random_scene,
    range_fft,
    raw_to_ramap,
    synth_raw_frame,
    synth_sequence,
)

DESK = RadarConfig(samples_per_chirp=64, range_bins=64, azimuth_bins=64)


def _single(cfg, r, az, refl=1.0):
    return Scene((SceneObject("car", r, az, 0.0, refl, 0.0),))


def test_config_invariants():
    cfg = RadarConfig()
    assert cfg.max_range_m == cfg.range_bins * cfg.range_resolution_m
    with pytest.raises(ConfigError):
        RadarConfig(samples_per_chirp=16, range_bins=32)
    with pytest.raises(ConfigError):
        RadarConfig(num_antennas=16, azimuth_bins=8)
    with pytest.raises(ConfigError):
        RadarConfig(range_resolution_m=0.0)


def test_scene_object_validation():
    with pytest.raises(ConfigError):
        SceneObject("truck", 5.0, 0.0)
    with pytest.raises(ConfigError):
        SceneObject("car", 5.0, 0.0, reflectivity=0.0)
    with pytest.raises(ConfigError):
        Scene((SceneObject("car", 40.0, 0.0),)).validate(DESK)


def test_range_fft_peak_at_bin_40():
    cfg = RadarConfig()
    raw = synth_raw_frame(_single(cfg, 10.0, 0.0), cfg)
    rd = range_fft(raw, cfg)
    peaks = np.abs(rd).argmax(axis=1)
    assert np.all(peaks == 40)


def test_coherent_superposition_doubles_magnitude():
    cfg = DESK
    one = raw_to_ramap(synth_raw_frame(_single(cfg, 6.0, 0.2), cfg), cfg).magnitude
    scene2 = Scene((SceneObject("car", 6.0, 0.2), SceneObject("car", 6.0, 0.2)))
    two = raw_to_ramap(synth_raw_frame(scene2, cfg), cfg).magnitude
    np.testing.assert_allclose(two, 2 * one, rtol=1e-12, atol=1e-12)


def test_range_fft_single_tone():
    cfg = DESK
    n = np.arange(cfg.samples_per_chirp)
    k = 13
    tone = np.exp(2j * np.pi * k * n / cfg.samples_per_chirp)
    raw = np.broadcast_to(tone[None, :, None], (4, 64, 8)).copy()
    out = np.abs(range_fft(raw, cfg))
    assert np.all(out.argmax(axis=1) == k)
    mask = np.ones(64, bool)
    mask[k] = False
    assert np.max(out[:, mask, :]) < 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_range_fft_matches_naive_dft(seed):
    cfg = RadarConfig(samples_per_chirp=32, range_bins=24, azimuth_bins=32)
    r = np.random.default_rng(seed)
    raw = r.normal(size=(4, 32, 8)) + 1j * r.normal(size=(4, 32, 8))
    got = range_fft(raw, cfg)
    ref = np.moveaxis(naive_dft(np.moveaxis(raw, 1, -1)), -1, 1)[:, :24, :]
    assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_angle_fft_matches_naive_dft(seed):
    cfg = DESK
    r = np.random.default_rng(seed)
    rx = r.normal(size=(64, 8)) + 1j * r.normal(size=(64, 8))
    got = angle_fft(rx, cfg).cells
    ref = np.fft.fftshift(naive_dft(rx, cfg.azimuth_bins), axes=1)
    assert np.max(np.abs(got - ref)) / np.max(np.abs(ref)) < 1e-6


def test_range_fft_inverse_roundtrip():
    cfg = DESK
    r = np.random.default_rng(5)
    raw = r.normal(size=(4, 64, 8)) + 1j * r.normal(size=(4, 64, 8))
    back = np.fft.ifft(range_fft(raw, cfg), axis=1)
    assert np.max(np.abs(back - raw)) / np.max(np.abs(raw)) < 1e-6


def test_lowpass_is_chirp_mean():
    r = np.random.default_rng(2)
    x = r.normal(size=(4, 16, 8)) + 1j * r.normal(size=(4, 16, 8))
    assert np.array_equal(lowpass_chirps(x), x.mean(axis=0))
    with pytest.raises(DimensionError):
        lowpass_chirps(x[0])


def test_angle_fft_boresight_center_bin():
    cfg = DESK
    m = raw_to_ramap(synth_raw_frame(_single(cfg, 8.0, 0.0), cfg), cfg).magnitude
    assert np.unravel_index(m.argmax(), m.shape)[1] == cfg.azimuth_bins // 2


@pytest.mark.parametrize("az", [-0.9, -0.5, -0.1, 0.3, 0.7, 1.0])
def test_angle_fft_matches_bin_of_sin(az):
    cfg = DESK
    m = raw_to_ramap(synth_raw_frame(_single(cfg, 8.0, az), cfg), cfg).magnitude
    b = np.unravel_index(m.argmax(), m.shape)[1]
    assert abs(b - cfg.bin_of_sin(az)) <= 1


def test_signal_chain_oracle_100_scenes():
    cfg = DESK
    r = np.random.default_rng(99)
    t0 = time.perf_counter()
    hits = 0
    for _ in range(100):
        rng_m = r.uniform(1.0, cfg.max_range_m - 1.0)
        az = math.asin(r.uniform(-0.85, 0.85))
        m = raw_to_ramap(synth_raw_frame(_single(cfg, rng_m, az), cfg), cfg).magnitude
        rb, ab = np.unravel_index(m.argmax(), m.shape)
        hits += abs(rb - rng_m / cfg.range_resolution_m) <= 1 and abs(ab - cfg.bin_of_sin(az)) <= 1
    assert hits == 100
    assert time.perf_counter() - t0 < 10


def test_determinism_bit_identical():
    cfg = DESK
    scene = random_scene(cfg, "hard", np.random.default_rng(3))
    a = synth_raw_frame(scene, cfg, 2, rng_seed=17).samples
    b = synth_raw_frame(scene, cfg, 2, rng_seed=17).samples
    assert a.tobytes() == b.tobytes()


def _exhaustive_cfar(mag, guard, train, scale):
    """Direct window scan with truncated rings, used as an oracle."""
    R, A = mag.shape
    out = []
    for r in range(R):
        for a in range(A):
            tot = cnt = 0
            for i in range(r - guard - train, r + guard + train + 1):
                for j in range(a - guard - train, a + guard + train + 1):
                    if not (0 <= i < R and 0 <= j < A):
                        continue
                    if abs(i - r) <= guard and abs(j - a) <= guard:
                        continue
                    tot += mag[i, j]
                    cnt += 1
            noise = tot / cnt if cnt else 0.0
            neigh = mag[max(r - 1, 0): r + 2, max(a - 1, 0): a + 2]
            if mag[r, a] > scale * noise and mag[r, a] >= neigh.max():
                out.append((r, a))
    return sorted(out)


def test_cfar_matches_exhaustive_scan():
    cfg = DESK
    scene = Scene((SceneObject("car", 4.0, -0.4), SceneObject("cyclist", 9.0, 0.1, reflectivity=1.3),
                   SceneObject("pedestrian", 13.0, 0.5, reflectivity=0.8)), noise_std=0.05)
    m = raw_to_ramap(synth_raw_frame(scene, cfg, rng_seed=1), cfg)
    got = sorted((r, b) for r, b, _ in cfar_detect(m))
    assert got == _exhaustive_cfar(m.magnitude, 2, 4, 3.0)
    for obj in scene.objects:
        rb, ab = cfg.bin_of_range(obj.range_m), cfg.bin_of_sin(obj.azimuth_rad)
        assert any(abs(r - rb) <= 1 and abs(b - ab) <= 1 for r, b in got)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_cfar_scale_invariant(k, seed):
    r = np.random.default_rng(seed)
    m = np.abs(r.normal(size=(24, 24))) + 0.01
    m[5, 7] += 10
    base = [(a, b) for a, b, _ in cfar_detect(m)]
    scaled = [(a, b) for a, b, _ in cfar_detect(m * k)]
    assert base == scaled


def test_cfar_rejects_bad_scale():
    with pytest.raises(ConfigError):
        cfar_detect(np.ones((8, 8)), scale=1.0)


def test_azimuth_resolution():
    cfg = RadarConfig()
    assert azimuth_resolution_at(cfg, 0.0) == pytest.approx(0.25, abs=1e-15)
    grid = np.linspace(0, 1.5, 40)
    vals = [azimuth_resolution_at(cfg, t) for t in grid]
    assert np.all(np.diff(vals) > 0)
    wide = RadarConfig(num_antennas=16)
    assert azimuth_resolution_at(wide, 0.0) == pytest.approx(0.125)
    with pytest.raises(DomainError):
        azimuth_resolution_at(cfg, math.pi / 2)


def test_difficulty_thresholds():
    assert difficulty_of(2, 2.0) == "easy"
    assert difficulty_of(4, 0.0) == "hard"
    assert difficulty_of(1, 8.0) == "hard"
    assert difficulty_of(3, 1.0) == "medium"


@pytest.mark.parametrize("diff", ["easy", "medium", "hard"])
def test_random_scene_bucket(diff):
    for seed in range(10):
        s = random_scene(DESK, diff, np.random.default_rng(seed))
        assert s.difficulty == diff
        s.validate(DESK)


def test_sequence_shape_and_estimators():
    cfg = RadarConfig(samples_per_chirp=32, range_bins=32, azimuth_bins=32)
    scene = Scene((SceneObject("car", 3.0, 0.1, 1.0),), num_frames=3)
    seq = synth_sequence(scene, cfg)
    assert seq.shape == (3, 32, 32)
    cubes = np.stack([synth_raw_frame(scene, cfg, f).samples for f in range(3)])
    tr = RAMapTransformer(cfg)
    assert tr.get_params() == {"radar_config": cfg}
    np.testing.assert_allclose(tr.fit_transform(cubes), seq)
    det = CFARDetector().fit()
    assert len(det.predict(seq)) == 3
