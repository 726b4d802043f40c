import numpy as np
import pytest

from telemafuse.features import FeatureMatrix
from telemafuse.ingest import CHANNELS, BinaryLabel, TripStream


def make_stream(n, rate=1, trip="T1", driver="D1", label=BinaryLabel.MALE, seed=0, t0=0.0):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(n, len(CHANNELS)))
    values[:, 0] = np.abs(values[:, 0]) + 30.0
    values[:, 6] = rng.uniform(0, 359, size=n)
    t = t0 + np.arange(n) / rate
    return TripStream(trip, driver, label, rate, t, values)


def gaussian_matrix(n=500, n_features=4, shift=3.0, seed=7, drivers=None):
    """Two Gaussian blobs, class 1 shifted by ``shift`` in every coordinate."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, n_features)) + shift * y[:, None]
    names = [f"f{j}" for j in range(n_features)]
    drivers = drivers or [f"D{i % 50:03d}" for i in range(n)]
    return FeatureMatrix(X, y, names, [f"T{i:04d}" for i in range(n)], drivers)


@pytest.fixture
def blobs():
    return gaussian_matrix()
