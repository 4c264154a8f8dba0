import numpy as np
import pytest

from degindex.basis import build_sensor_bases
from degindex.exposure import ModelParams, UnitRecord


def make_unit(rng, n_cycles=40, p=3, unit_id=1, status=0, trend=True):
    cycles = np.arange(1, n_cycles + 1, dtype=float)
    signals = rng.normal(size=(n_cycles, p))
    if trend:
        signals += np.linspace(0, 1, n_cycles)[:, None] * rng.normal(size=p)
    return UnitRecord(unit_id=unit_id, cycles=cycles, signals=signals,
                      event_time=float(n_cycles), status=status)


def make_dataset(rng, n_units=8, n_cycles=40, p=3, failed_frac=0.5):
    units = []
    for i in range(n_units):
        status = 1 if i < int(round(failed_frac * n_units)) else 0
        units.append(make_unit(rng, n_cycles=n_cycles, p=p, unit_id=i + 1, status=status))
    return units


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset(rng):
    units = make_dataset(rng)
    bases = build_sensor_bases(units, 2)
    return units, bases


def random_params(rng, bases, sigma=None, alpha=None):
    beta = [rng.normal(scale=2.0, size=b.spec.m) for b in bases]
    return ModelParams(beta=beta,
                       sigma=float(rng.uniform(0.05, 1.0)) if sigma is None else sigma,
                       alpha=float(np.exp(5.0)) if alpha is None else alpha)
