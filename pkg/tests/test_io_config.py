import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rodkit import io
from rodkit.config import PipelineConfig, PostprocConfig, load_config
from rodkit.exceptions import ConfigError
from rodkit.nn import InputNorm, ModelSpec, build_model
from rodkit.plotting import confmap_image, detection_overlay, ramap_image
from rodkit.postproc import Detection


@settings(max_examples=25, deadline=None)
@given(arrays(np.complex64, st.tuples(st.integers(1, 3), st.integers(1, 6), st.integers(1, 6)),
              elements=st.complex_numbers(max_magnitude=1e6, allow_nan=False, width=64)))
def test_ramap_roundtrip_bit_identical(tmp_path_factory, z):
    path = tmp_path_factory.mktemp("r") / "ramaps.bin"
    io.write_ramaps(path, z)
    back = io.read_ramaps(path)
    assert back.dtype == np.complex64
    assert back.tobytes() == z.tobytes()


def test_ramap_header_layout(tmp_path):
    z = np.arange(6, dtype=np.float32).reshape(1, 2, 3) * (1 + 2j)
    io.write_ramaps(tmp_path / "a.bin", z)
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw[:4] == b"RODR"
    assert np.frombuffer(raw[4:20], "<u4").tolist() == [1, 1, 2, 3]
    body = np.frombuffer(raw[20:], "<f4")
    assert body[:4].tolist() == [0.0, 0.0, 1.0, 2.0]
    (tmp_path / "b.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ConfigError):
        io.read_ramaps(tmp_path / "b.bin")
    (tmp_path / "c.bin").write_bytes(raw[:-4])
    with pytest.raises(ConfigError):
        io.read_ramaps(tmp_path / "c.bin")


def test_jsonl_roundtrip(tmp_path):
    recs = [{"frame": 0, "class": "car", "range_m": 1.5, "azimuth_rad": -0.1, "confidence": 0.4}]
    io.write_jsonl(tmp_path / "d.jsonl", recs)
    assert io.read_jsonl(tmp_path / "d.jsonl") == recs


@pytest.mark.parametrize("variant", ["CDC", "HG", "HGwI"])
def test_checkpoint_roundtrip(tmp_path, variant):
    spec = ModelSpec(variant, base_channels=4, snippet_len=16)
    m = build_model(spec, 3)
    m.input_norm = InputNorm("dataset-std", 0.1, 2.0)
    path = tmp_path / "m.rodw"
    io.save_checkpoint(path, m)
    assert path.read_bytes()[:4] == b"RODW"
    back = io.load_checkpoint(path)
    assert back.spec == spec
    assert back.input_norm == m.input_norm
    assert list(back) == list(m)
    assert all(np.array_equal(back[k], m[k]) for k in m)
    with pytest.raises(ConfigError):
        io.load_checkpoint(path, ModelSpec("CDC", base_channels=8))


def test_checkpoint_trailing_bytes(tmp_path):
    m = build_model(ModelSpec(base_channels=2, snippet_len=4))
    path = tmp_path / "m.rodw"
    io.save_checkpoint(path, m, spec_sidecar=False)
    with open(path, "ab") as fh:
        fh.write(b"\0")
    with pytest.raises(ConfigError):
        io.read_checkpoint_tensors(path)
    with pytest.raises(ConfigError):
        io.load_checkpoint(path)


def test_pnm_roundtrip(tmp_path):
    g = np.arange(12, dtype=np.uint8).reshape(3, 4)
    io.write_pgm(tmp_path / "g.pgm", g)
    assert np.array_equal(io.read_pnm(tmp_path / "g.pgm"), g)
    c = np.arange(36, dtype=np.uint8).reshape(3, 4, 3)
    io.write_ppm(tmp_path / "c.ppm", c)
    assert (tmp_path / "c.ppm").read_bytes().startswith(b"P6\n4 3\n255\n")
    assert np.array_equal(io.read_pnm(tmp_path / "c.ppm"), c)


def test_plot_images():
    assert np.all(ramap_image(np.zeros((8, 8), complex)) == 0)
    z = np.full((8, 8), 1e-6, complex)
    z[2, 3] = 1.0
    img = ramap_image(z)
    assert img[8 - 1 - 2, 3] == 255 and img.max() == 255 and img[0, 0] == 0
    conf = np.zeros((3, 8, 8))
    conf[2, 1, 1] = 1.0
    rgb = confmap_image(conf)
    assert tuple(rgb[6, 1]) == (64, 128, 255)
    from rodkit.radar import RadarConfig

    cfg = RadarConfig(samples_per_chirp=16, range_bins=16, azimuth_bins=16)
    over = detection_overlay(np.zeros((16, 16)), [Detection("pedestrian", 2.0, 0.0)], cfg)
    assert tuple(over[16 - 1 - 8, 8]) == (255, 64, 64)


def test_default_config():
    cfg = load_config()
    assert cfg == PipelineConfig()
    assert cfg.radar.grid_shape == (64, 64)
    assert cfg.stride == cfg.model.snippet_len
    assert (cfg.train.epochs, cfg.train.batch_size, cfg.head_prior) == (20, 1, 0.01)
    assert len(cfg.data_hash()) == 16


def test_config_roundtrip_through_ini():
    text = """
[radar]
range_bins = 32
samples_per_chirp = 32
azimuth_bins = 32
[simulate]
clutter_amplitude = 0.2, 0.6
num_frames = 16
[model]
variant = hgwi
[train]
epochs = 3
head_prior = 0.02
[postproc]
stride = 4
[car]
ols_kappa = 0.25
"""
    cfg = load_config(text)
    assert cfg.radar.grid_shape == (32, 32)
    assert cfg.simulate.clutter_amplitude == (0.2, 0.6)
    assert cfg.model.variant == "HGwI"
    assert cfg.train.epochs == 3 and cfg.head_prior == 0.02
    assert cfg.stride == 4
    assert cfg.classes["car"].ols_kappa == 0.25
    again = load_config(cfg.to_ini())
    assert again == cfg
    off = load_config("[train]\nhead_prior = none\n")
    assert off.head_prior is None and load_config(off.to_ini()) == off


def test_config_file_path(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[annotate]\nmin_confidence = 0.2\n")
    assert load_config(str(p)).annotate.min_confidence == 0.2
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"))


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[radar]\nwarp = 9\n",
    "[radar]\nrange_bins = many\n",
    "[radar]\nrange_bins = 30\nsamples_per_chirp = 30\nazimuth_bins = 32\n",
    "[simulate]\nnum_frames = 4\n",
    "[postproc]\nstride = 40\n",
    "[train]\noptimizer = lbfgs\n",
    "[annotate]\ninterpret_as_std = maybe\n",
    "not an ini",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        load_config(text + ("\n" if "\n" not in text else ""))


def test_data_hash_scope():
    a = load_config()
    b = load_config("[train]\nepochs = 2\n")
    c = load_config("[simulate]\nnoise_std = 0.5\n")
    assert a.data_hash() == b.data_hash() != c.data_hash()
    with pytest.raises(ConfigError):
        PostprocConfig(ols_threshold=0.0)
    json.dumps(a.to_ini())
