from __future__ import annotations

import numpy as np
import pytest

from leakscope import analysis
from leakscope.analysis import (
    PipelineConfig,
    run_analysis,
    run_exclusion_study,
    save_report,
    select_channels,
    select_for_dataset,
    sweep_dataset_size,
)
from leakscope.discovery import ChannelDatabase, ChannelDescriptor, EventSpec
from leakscope.errors import AdapterInvalidSubset, EmptyDatabase, NothingLeftAfterExclusion
from leakscope.synth import ScenarioConfig, SyntheticChannelConfig, generate_dataset, redundant_scenario, standard_scenario
from leakscope.traces import SplitSpec, Trace, split_indices

FAST = PipelineConfig(L=300, d=40)


def db_of(ids, origin="seed"):
    db = ChannelDatabase()
    for c in ids:
        db.add(ChannelDescriptor(c, f"api_{c}").accepted(1.0), origin)
    return db


def greedy_oracle(accs, corr, k, penalty=0.5):
    """Exhaustive replay of the greedy rule: try every candidate at every step."""
    chosen = []
    ids = list(accs)
    for _ in range(k):
        scores = {c: accs[c] - penalty * max([corr.get(frozenset((c, s)), 0.0) for s in chosen] or [0.0]) for c in ids if c not in chosen}
        best = max(scores.values())
        chosen.append(next(c for c in ids if c in scores and scores[c] == best))
    return chosen


def test_greedy_selection_example():
    accs = {"A": 0.9, "B": 0.85, "C": 0.6}
    corr = {"A": {"B": 0.99, "C": 0.05}, "B": {"C": 0.05}}
    got = select_channels(None, db_of("ABC"), 2, per_channel_acc=accs, correlation=corr)
    assert set(got) == {"A", "C"}
    flat = {frozenset(("A", "B")): 0.99, frozenset(("A", "C")): 0.05, frozenset(("B", "C")): 0.05}
    assert set(greedy_oracle(accs, flat, 2)) == set(got)
    mat = np.array([[1, 0.99, 0.05], [0.99, 1, 0.05], [0.05, 0.05, 1]])
    assert select_channels(None, db_of("ABC"), 2, per_channel_acc=accs, correlation=mat) == ["A", "C"]


def test_selection_k_covers_all_and_errors():
    db = db_of(["z", "a", "m"])
    assert select_channels(None, db, 5) == ["z", "a", "m"]
    with pytest.raises(EmptyDatabase):
        select_channels(None, ChannelDatabase(), 2)

    class Bad:
        def select(self, event, candidates, k):
            return ["not_there"]

    with pytest.raises(AdapterInvalidSubset):
        select_channels(EventSpec("e", 2), db, 2, selector=Bad())

    class Good:
        def select(self, event, candidates, k):
            return ["m", "z"]

    assert select_channels(EventSpec("e", 2), db, 2, selector=Good()) == ["z", "m"]


def test_end_to_end_small(small_scenario_ds):
    rep = run_analysis(small_scenario_ds, small_scenario_ds.channel_ids, FAST, "evt")
    assert rep.overall_accuracy >= 0.9
    assert rep.provenance["n_train"] + rep.provenance["n_test"] == len(small_scenario_ds)
    assert sum(map(sum, rep.confusion_counts)) == rep.provenance["n_test"]
    assert rep.r_effective == min(40, rep.provenance["n_train"] - 1)
    assert "overall accuracy" in rep.table()


def test_report_determinism(tmp_path, small_scenario_ds):
    for name in ("a", "b"):
        save_report(run_analysis(small_scenario_ds, ["inf_0", "inf_2"], FAST), tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_fits_only_see_training_rows(monkeypatch, small_scenario_ds):
    seen = {}
    real_pca, real_fit = analysis.fit_pca, analysis.fit_context

    def spy_pca(features, d):
        seen["pca_rows"] = len(features)
        return real_pca(features, d)

    def spy_fit(spec, train, label_set=None):
        seen["ctx_rows"] = len(train)
        return real_fit(spec, train, label_set)

    monkeypatch.setattr(analysis, "fit_pca", spy_pca)
    monkeypatch.setattr(analysis, "fit_context", spy_fit)
    rep = run_analysis(small_scenario_ds, small_scenario_ds.channel_ids, FAST)
    assert seen["pca_rows"] == seen["ctx_rows"] == rep.provenance["n_train"]


def test_test_traces_cannot_move_the_fit(tmp_path, small_scenario_ds):
    ds = small_scenario_ds
    _, test_idx = split_indices(ds, FAST.split)
    junk = list(ds.traces)
    for i in test_idx:
        junk[i] = Trace(np.full_like(ds.traces[i].values, 1e3), ds.sample_rate_hz, ds.traces[i].label)
    run_analysis(ds, ds.channel_ids, FAST, save_projection_to=tmp_path / "p1", save_kernels_to=tmp_path / "k1")
    run_analysis(ds.with_traces(junk), ds.channel_ids, FAST, save_projection_to=tmp_path / "p2", save_kernels_to=tmp_path / "k2")
    assert (tmp_path / "p1").read_bytes() == (tmp_path / "p2").read_bytes()
    assert (tmp_path / "k1").read_bytes() == (tmp_path / "k2").read_bytes()


def test_identical_classes_are_at_chance():
    accs = []
    for seed in range(10):
        cfg = ScenarioConfig(2, 20, 64, [SyntheticChannelConfig("a", "informative", "burst")], max_shift_fraction=0.2, seed=seed, identical_classes=True)
        accs.append(run_analysis(generate_dataset(cfg), ["a"], PipelineConfig(L=200, d=20, seed=seed, split=SplitSpec(0.8, seed))).overall_accuracy)
    assert abs(np.mean(accs) - 0.5) <= 0.15


def test_exclusion_unset_and_filter(small_scenario_ds):
    ds = small_scenario_ds
    db = db_of(["inf_0", "inf_1"], "seed")
    for c in ("inf_2", "inf_3"):
        db.add(ChannelDescriptor(c, f"api_{c}").accepted(0.9), "discovered")
    a, b = run_exclusion_study(ds, db, FAST, None, k=2)
    assert a.to_dict() == b.to_dict()
    full, filtered = run_exclusion_study(ds, db, FAST, "seed", k=2)
    assert not set(filtered.selected_channels) & {"inf_0", "inf_1"}
    with pytest.raises(NothingLeftAfterExclusion):
        run_exclusion_study(ds, db_of(["inf_0"]), FAST, "seed")


def test_redundant_scenario_exclusion_gap():
    ds = generate_dataset(redundant_scenario(n_groups=3, traces_per_class=15, seed=4))
    db = ChannelDatabase()
    for c in ds.channel_ids:
        db.add(ChannelDescriptor(c, f"api_{c}").accepted(1.0), "seed" if c.startswith("seed") else "discovered")
    full, filtered = run_exclusion_study(ds, db, FAST, "seed", k=3)
    assert all(c.startswith("disc") for c in filtered.selected_channels)
    assert full.overall_accuracy - filtered.overall_accuracy <= 0.10


def test_selection_skips_the_idle_channel():
    ds = generate_dataset(standard_scenario(traces_per_class=20, n_informative=3, n_uninformative=2, n_samples=64, seed=1))
    chosen = select_for_dataset(ds, db_of(ds.channel_ids), FAST, k=3)
    assert chosen == ["inf_0", "inf_1", "inf_2"]


def test_sweep_rows_and_minimum_split():
    scen = standard_scenario(traces_per_class=12, n_informative=2, n_samples=48, seed=0)
    rows = sweep_dataset_size(scen, [12, 2, 6], PipelineConfig(L=200, d=20))
    assert [n for n, _ in rows] == [2, 6, 12]
    assert all(0 <= a <= 1 for _, a in rows)


def test_sweep_trend_with_slack():
    gaps = []
    for seed in range(5):
        scen = standard_scenario(seed=seed)
        rows = dict(sweep_dataset_size(scen, [10, 50], PipelineConfig(L=1000, d=100, seed=seed, split=SplitSpec(0.8, seed))))
        gaps.append(rows[50] - rows[10])
    assert min(gaps) >= -0.05
