"""Shared fixtures: tiny networks, toy datasets and run configs."""

import json

import numpy as np
import pytest

from seal_kd.core.data import Dataset, SyntheticSpec
from seal_kd.core.snn import DenseLayer, LIFParams, SpikingNet


def numeric_grad(fn, x, step=1e-5):
    """Central differences of a numpy scalar function."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for i in range(x.size):
        shifted = x.copy().reshape(-1)
        shifted[i] += step
        plus = fn(shifted.reshape(x.shape))
        shifted[i] -= 2 * step
        minus = fn(shifted.reshape(x.shape))
        flat[i] = (plus - minus) / (2 * step)
    return grad


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def firing_net():
    """D=3, one hidden layer of 5 neurons that fires at mixed rates, C=3, T=3."""
    gen = np.random.default_rng(7)
    hidden = DenseLayer(gen.uniform(-0.6, 0.6, size=(3, 5)), np.array([1.3, 0.2, 0.9, 1.6, 0.7]))
    readout = DenseLayer(gen.uniform(-1.0, 1.0, size=(5, 3)), np.zeros(3))
    return SpikingNet([hidden, readout], timesteps=3, lif=LIFParams())


@pytest.fixture
def separable_data():
    """Two classes split along the first feature."""
    gen = np.random.default_rng(3)
    n = 60
    labels = np.repeat([0, 1], n // 2)
    first = np.where(labels == 0, gen.uniform(0.0, 0.35, n), gen.uniform(0.65, 1.0, n))
    features = np.column_stack([first, gen.uniform(0.0, 1.0, n)])
    train = Dataset(features, labels, "train", 2)
    test_first = np.where(labels == 0, gen.uniform(0.0, 0.35, n), gen.uniform(0.65, 1.0, n))
    test = Dataset(np.column_stack([test_first, gen.uniform(0.0, 1.0, n)]), labels, "test", 2)
    return train, test


@pytest.fixture
def small_spec():
    return SyntheticSpec(classes=3, dim=8, samples_per_class=40, test_samples_per_class=20, spread=0.05, seed=0)


@pytest.fixture
def tiny_config(tmp_path):
    """Write a fast run config and return its path."""
    def _write(**overrides):
        config = {
            "seed": 3,
            "data": {"classes": 3, "dim": 4, "samples_per_class": 12, "test_samples_per_class": 6},
            "network": {"hidden": [6], "timesteps": 2},
            "teacher": {"hidden": [8], "epochs": 3, "batch_size": 8},
            "plan": {"epochs": 2, "batch_size": 8, "checkpoint_every": 1},
            "diagnostics": {"samples": 2},
            "output": {"directory": str(tmp_path / "run")},
        }
        for section, values in overrides.items():
            if isinstance(values, dict):
                config.setdefault(section, {}).update(values)
            else:
                config[section] = values
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        return path
    return _write
