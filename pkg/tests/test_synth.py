from __future__ import annotations

import numpy as np
import pytest

from leakscope.errors import InvalidConfig, ShiftOutOfRange
from leakscope.synth import (
    ScenarioConfig,
    SyntheticChannelConfig,
    apply_time_shift,
    generate_dataset,
    load_scenario,
    redundant_scenario,
    standard_scenario,
)
from leakscope.traces import Trace, dataset_to_text


def test_zero_noise_zero_shift_degeneracy():
    cfg = ScenarioConfig(
        2, 5, 40, [SyntheticChannelConfig("a", "informative", "burst", 0.0), SyntheticChannelConfig("b", "informative", "step", 0.0)]
    )
    ds = generate_dataset(cfg)
    for idx in ds.class_indices().values():
        first = ds.traces[idx[0]].values
        for i in idx[1:]:
            assert np.array_equal(ds.traces[i].values, first)


def test_same_seed_same_bytes():
    cfg = standard_scenario(traces_per_class=5, n_uninformative=1, seed=9)
    assert dataset_to_text(generate_dataset(cfg)) == dataset_to_text(generate_dataset(cfg))
    assert dataset_to_text(generate_dataset(cfg.replace(seed=10))) != dataset_to_text(generate_dataset(cfg))


def test_adding_a_channel_leaves_existing_ones_untouched():
    base = standard_scenario(traces_per_class=4, seed=2)
    more = base.replace(channels=base.channels + (SyntheticChannelConfig("extra", "uninformative"),))
    a, b = generate_dataset(base), generate_dataset(more)
    for ta, tb in zip(a.traces, b.traces):
        assert np.array_equal(ta.values, tb.values[:-1])


def test_uninformative_channel_has_no_class_signal():
    cfg = ScenarioConfig(3, 200, 30, [SyntheticChannelConfig("u", "uninformative", noise_std=1.0)], seed=1)
    ds = generate_dataset(cfg)
    means = [np.mean([ds.traces[i].values for i in idx]) for idx in ds.class_indices().values()]
    assert max(means) - min(means) < 0.05


def test_shapes_and_labels():
    ds = generate_dataset(standard_scenario(n_classes=4, traces_per_class=3, n_samples=50))
    assert len(ds) == 12 and ds.n_samples == 50 and list(ds.labels) == [f"class_{k}" for k in range(4)]


def test_template_group_shares_templates():
    cfg = redundant_scenario(n_groups=1, traces_per_class=3, seed=0)
    noiseless = cfg.replace(channels=[c.__class__(**{**c.__dict__, "noise_std": 0.0}) for c in cfg.channels], max_shift_fraction=0.0)
    ds = generate_dataset(noiseless)
    t = ds.traces[0].values
    assert np.array_equal(t[0], t[1])


def test_config_validation_and_round_trip(tmp_path):
    with pytest.raises(InvalidConfig):
        ScenarioConfig(1, 5, 10, [SyntheticChannelConfig("a")])
    with pytest.raises(InvalidConfig):
        SyntheticChannelConfig("a", pattern_kind="zigzag")
    with pytest.raises(InvalidConfig):
        ScenarioConfig(2, 5, 10, [SyntheticChannelConfig("a"), SyntheticChannelConfig("a")])
    cfg = standard_scenario(n_uninformative=2)
    import json

    (tmp_path / "s.json").write_text(json.dumps(cfg.to_dict()))
    assert load_scenario(tmp_path / "s.json") == cfg


def test_shift_identity_and_definition():
    t = Trace([[1.0, 2.0, 3.0, 4.0]], 1.0, "a")
    assert np.array_equal(apply_time_shift(t, 0).values, t.values)
    assert apply_time_shift(t, 1).values.tolist() == [[4.0, 1.0, 2.0, 3.0]]
    with pytest.raises(ShiftOutOfRange):
        apply_time_shift(t, 4)


def test_shift_group_property():
    n = 7
    t = Trace([np.arange(n, dtype=float)], 1.0, "a")
    cur = t
    for _ in range(n):
        cur = apply_time_shift(cur, n - 1)
    # n*(n-1) is a multiple of n
    assert np.array_equal(cur.values, t.values)
