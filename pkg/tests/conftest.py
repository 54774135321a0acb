import numpy as np
import pytest

from rodkit.radar import RadarConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running end-to-end checks")


@pytest.fixture
def small_cfg():
    return RadarConfig(samples_per_chirp=32, range_bins=32, azimuth_bins=32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def naive_dft(x, n=None):
    """O(n^2) DFT along the last axis, used as an independent oracle."""
    x = np.asarray(x, dtype=complex)
    m = x.shape[-1]
    n = n or m
    k = np.arange(n)[:, None]
    t = np.arange(m)[None, :]
    basis = np.exp(-2j * np.pi * k * t / n)
    return x @ basis.T
