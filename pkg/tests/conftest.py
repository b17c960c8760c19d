from __future__ import annotations

import numpy as np
import pytest

from leakscope.synth import generate_dataset, standard_scenario
from leakscope.traces import ChannelSpec, Dataset, Trace


def make_dataset(n_classes=3, per_class=4, n_channels=2, n_samples=16, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    channels = [ChannelSpec(f"c{i}") for i in range(n_channels)]
    labels = [f"k{j}" for j in range(n_classes)]
    traces = [
        Trace(rng.standard_normal((n_channels, n_samples)) + j, 100.0, labels[j])
        for j in range(n_classes)
        for _ in range(per_class)
    ]
    return Dataset(channels, labels, traces, 100.0)


@pytest.fixture
def tiny():
    return make_dataset()


@pytest.fixture(scope="session")
def small_scenario_ds():
    return generate_dataset(standard_scenario(traces_per_class=12, n_uninformative=1, n_samples=64, seed=3))
