from __future__ import annotations

import numpy as np
import pytest

from leakscope.analysis import PipelineConfig
from leakscope.defenses import (
    DefenseSpec,
    add_gaussian_noise,
    apply_defense,
    channel_stds,
    evaluate_defense,
    hold_period,
    reduce_frequency,
)
from leakscope.errors import InvalidConfig
from leakscope.synth import generate_dataset, standard_scenario
from leakscope.traces import SplitSpec, Trace


def test_hold_arithmetic():
    t = Trace([[1.0, 2.0, 3.0, 4.0]], 4.0, "a")
    assert reduce_frequency(t, 2.0).values.tolist() == [[1.0, 1.0, 3.0, 3.0]]


def test_five_hz_blocks():
    assert hold_period(100.0, 5.0) == 20
    t = Trace([np.arange(100.0)], 100.0, "a")
    out = reduce_frequency(t, 5.0).values[0]
    for start in range(0, 100, 20):
        assert (out[start : start + 20] == start).all()
    assert out.shape == (100,)


@pytest.mark.parametrize("cap", [100.0, 150.0, 1e6])
def test_cap_at_or_above_rate_is_identity(cap):
    t = Trace(np.random.default_rng(0).standard_normal((2, 30)), 100.0, "a")
    assert reduce_frequency(t, cap).values.tobytes() == t.values.tobytes()


def test_noise_identity_and_determinism():
    t = Trace(np.random.default_rng(0).standard_normal((2, 30)), 100.0, "a")
    stats = [1.0, 2.0]
    assert add_gaussian_noise(stats, t, 0.0, 1).values.tobytes() == t.values.tobytes()
    a = add_gaussian_noise(stats, t, 0.5, 1, 3)
    b = add_gaussian_noise(stats, t, 0.5, 1, 3)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.values.tobytes() != add_gaussian_noise(stats, t, 0.5, 1, 4).values.tobytes()


def test_noise_scale_follows_channel_std():
    t = Trace(np.zeros((2, 20000)), 100.0, "a")
    out = add_gaussian_noise([1.0, 4.0], t, 0.5, 0).values
    np.testing.assert_allclose(out.std(axis=1), [0.5, 2.0], rtol=0.03)


def test_noise_independent_of_order():
    ds = generate_dataset(standard_scenario(traces_per_class=3, n_samples=40))
    stats = channel_stds(ds)
    spec = DefenseSpec("gaussian_noise", sigma=0.3, seed=2)
    whole = apply_defense(ds, spec, stats)
    single = add_gaussian_noise(stats, ds.traces[5], 0.3, 2, 5)
    assert whole.traces[5].values.tobytes() == single.values.tobytes()


def test_spec_validation():
    with pytest.raises(InvalidConfig):
        DefenseSpec("frequency_cap")
    with pytest.raises(InvalidConfig):
        DefenseSpec("gaussian_noise", sigma=-1)
    with pytest.raises(InvalidConfig):
        DefenseSpec("jamming", sigma=1)
    with pytest.raises(InvalidConfig):
        apply_defense(generate_dataset(standard_scenario(traces_per_class=2, n_samples=20)), DefenseSpec("gaussian_noise", sigma=1.0))


def test_empty_defense_list_and_identity_rows():
    ds = generate_dataset(standard_scenario(traces_per_class=10, n_samples=48, noise_std=0.8))
    cfg = PipelineConfig(L=200, d=20)
    assert [n for n, _ in evaluate_defense(ds, [], cfg)] == ["clean"]
    rows = evaluate_defense(ds, [DefenseSpec("gaussian_noise", sigma=0.0), DefenseSpec("frequency_cap", cap_hz=100.0)], cfg)
    assert rows[1][1] == rows[0][1] and rows[2][1] == rows[0][1]
    assert len(evaluate_defense(ds, [DefenseSpec("gaussian_noise", sigma=s) for s in (0, 0.1, 0.25, 0.5)], cfg)) == 5


def test_half_sigma_noise_degrades_every_seed():
    # two informative channels at noise 0.7 leave room below the clean accuracy
    for seed in range(5):
        ds = generate_dataset(standard_scenario(n_informative=2, noise_std=0.7, seed=seed))
        cfg = PipelineConfig(L=2000, d=100, seed=seed, split=SplitSpec(0.8, seed))
        (_, clean), (_, noisy) = evaluate_defense(ds, [DefenseSpec("gaussian_noise", sigma=0.5, seed=seed)], cfg)
        assert noisy < clean
