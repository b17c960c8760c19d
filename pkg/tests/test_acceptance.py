"""Exit criteria 1-8.

Each ``criterion_N`` returns ``(ok, detail)`` and is timed against its
budget.  Under pytest every criterion is its own test and prints one
``PASS``/``FAIL`` line; ``python3 tests/test_acceptance.py`` prints the
same lines without pytest.
"""

from __future__ import annotations

import contextlib
import io
import json
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from leakscope.adapters import ScriptedProposer, load_script
from leakscope.analysis import PipelineConfig, run_analysis, run_exclusion_study
from leakscope.cli import main as cli_main
from leakscope.defenses import DefenseSpec, evaluate_defense
from leakscope.discovery import (
    ChannelDatabase,
    ChannelDescriptor,
    DiscoveryConfig,
    EventSpec,
    check_distinguishability,
    load_kb,
    run_discovery,
    save_database,
)
from leakscope.pca import fit_pca
from leakscope.replay import fixture_path
from leakscope.rocket import generate_kernels, naive_convolve, transform_values
from leakscope.synth import generate_dataset, load_scenario, redundant_scenario, standard_scenario
from leakscope.traces import SplitSpec, datasets_identical, load_dataset, save_dataset

SEEDS = range(5)


def _timed(budget_s, fn):
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    if elapsed >= budget_s:
        ok = False
        detail += f"; took {elapsed:.1f}s >= {budget_s}s budget"
    return ok, f"{detail} [{elapsed:.1f}s]"


# 1 ---------------------------------------------------------------------------


def criterion_1():
    records = load_script(fixture_path("gemini80.jsonl"))
    kb = load_kb(fixture_path("gemini80_kb.json"))
    event = EventSpec(**json.loads(fixture_path("gemini80_event.json").read_text()))
    calibration = generate_dataset(load_scenario(fixture_path("gemini80_calibration.scenario.json")))
    result = run_discovery(event, kb, ChannelDatabase(), ScriptedProposer(records), config=DiscoveryConfig(), calibration=calibration)
    rep = result.report()
    t = rep["tallies"]
    rhos = [b["acceptance_rate"] for b in rep["batches"]]
    first_low = next(i for i, r in enumerate(rhos) if r < 0.2) if any(r < 0.2 for r in rhos) else None
    ok = (
        (t["BER"], t["SE"], t["LD"], t["CD"]) == (7, 3, 30, 1)
        and rep["accepted"] == 39
        and rep["total_proposals"] == 80
        and first_low == len(rhos) - 1
    )
    return ok, f"BER={t['BER']} SE={t['SE']} LD={t['LD']} CD={t['CD']} accepted={rep['accepted']} stop at batch {len(rhos) - 1} (rho={rhos[-1]})"


# 2 ---------------------------------------------------------------------------


def criterion_2():
    rng = np.random.default_rng(2024)
    worst = 0.0
    ppv_mismatch = 0
    for i in range(200):
        n = int(rng.integers(7, 160))
        bank = generate_kernels.__wrapped__(1, 1, n, 10_000 + i, False)
        series = rng.standard_normal(n) * rng.uniform(0.1, 50) + rng.uniform(-5, 5)
        kernel = bank.kernels[0]
        resp = naive_convolve(kernel, series)
        want_ppv, want_max = sum(r > 0 for r in resp) / len(resp), max(resp)
        got_ppv, got_max = transform_values(bank, series[None, None, :])[0]
        ppv_mismatch += got_ppv != want_ppv
        worst = max(worst, abs(got_max - want_max) / max(abs(want_max), 1e-300))
    ok = ppv_mismatch == 0 and worst <= 1e-9
    return ok, f"200 pairs, PPV mismatches={ppv_mismatch}, worst max rel err={worst:.2e}"


# 3 ---------------------------------------------------------------------------


def criterion_3():
    rng = np.random.default_rng(7)
    worst_comp = worst_var = worst_orth = 0.0
    for _ in range(50):
        n, p = int(rng.integers(2, 11)), int(rng.integers(1, 7))
        X = rng.standard_normal((n, p)) * rng.uniform(0.5, 3, p)
        d = int(rng.integers(1, p + 1))
        proj = fit_pca(X, d)
        Xc = X - X.mean(axis=0)
        w, v = np.linalg.eigh(Xc.T @ Xc / (n - 1))
        order = np.argsort(w)[::-1]
        w, v = w[order], v[:, order]
        r = proj.r_effective
        worst_var = max(worst_var, np.abs(proj.explained_variance - w[:r]).max())
        for j in range(r):
            # a component is only defined up to sign when its eigenvalue is simple
            if np.min(np.abs(np.delete(w, j) - w[j]), initial=np.inf) < 1e-6:
                continue
            c = proj.components[j]
            worst_comp = max(worst_comp, min(np.abs(c - v[:, j]).max(), np.abs(c + v[:, j]).max()))
        worst_orth = max(worst_orth, np.abs(proj.components @ proj.components.T - np.eye(r)).max())
    ok = worst_comp <= 1e-6 and worst_var <= 1e-6 and worst_orth <= 1e-8
    return ok, f"50 matrices, component err={worst_comp:.1e}, variance err={worst_var:.1e}, orthonormality err={worst_orth:.1e}"


# 4 ---------------------------------------------------------------------------


def criterion_4():
    rows = []
    for s in SEEDS:
        ds = generate_dataset(standard_scenario(seed=s))
        cfg = PipelineConfig(seed=s, split=SplitSpec(0.8, s))
        acc = run_analysis(ds, ds.channel_ids, cfg).overall_accuracy
        raw = run_analysis(ds, ds.channel_ids, replace(cfg, features="raw")).overall_accuracy
        rows.append((acc, raw))
    ok = all(a >= 0.95 and a > r for a, r in rows)
    return ok, "seed acc/raw: " + ", ".join(f"{a:.3f}/{r:.3f}" for a, r in rows)


# 5 ---------------------------------------------------------------------------


def criterion_5():
    wrong = []
    worst_pass = 1.0
    worst_ld = 0.0
    for K in (6, 10):
        for s in SEEDS:
            ds = generate_dataset(standard_scenario(n_classes=K, traces_per_class=10, n_informative=3, n_uninformative=3, n_samples=64, seed=s))
            event = EventSpec("ld", K)
            for cid in ds.channel_ids:
                acc, verdict = check_distinguishability(ChannelDescriptor(cid, f"api_{cid}"), event, ds, DiscoveryConfig(seed=s))
                informative = cid.startswith("inf")
                if informative:
                    worst_pass = min(worst_pass, acc * K)
                else:
                    worst_ld = max(worst_ld, acc * K)
                if (verdict == "pass") != informative:
                    wrong.append(f"K={K} seed={s} {cid} acc={acc:.3f} {verdict}")
    detail = f"min informative acc*K={worst_pass:.2f}, max uninformative acc*K={worst_ld:.2f} (threshold 2)"
    return not wrong, detail + ("; wrong: " + "; ".join(wrong) if wrong else "")


# 6 ---------------------------------------------------------------------------


def criterion_6():
    rows = []
    ok = True
    for s in SEEDS:
        ds = generate_dataset(redundant_scenario(seed=s))
        db = ChannelDatabase()
        for cid in ds.channel_ids:
            db.add(ChannelDescriptor(cid, f"api_{cid}").accepted(1.0), "seed" if cid.startswith("seed") else "discovered")
        cfg = PipelineConfig(seed=s, split=SplitSpec(0.8, s))
        full, filtered = run_exclusion_study(ds, db, cfg, "seed", k=4)
        leaked = [c for c in filtered.selected_channels if db.origin_of(c) == "seed"]
        gap = full.overall_accuracy - filtered.overall_accuracy
        ok &= not leaked and gap <= 0.10
        rows.append(f"{full.overall_accuracy:.3f}->{filtered.overall_accuracy:.3f}" + (f" seed-origin {leaked}" if leaked else ""))
    return ok, "all->filtered: " + ", ".join(rows)


# 7 ---------------------------------------------------------------------------

SIGMAS = (0.0, 0.1, 0.25, 0.5)
CAPS = (100.0, 50.0, 20.0, 5.0)
SLACK = 0.03


def _non_increasing(seq, slack):
    return all(b <= a + slack for a, b in zip(seq, seq[1:]))


def criterion_7():
    noise_curves, cap_curves = [], []
    exact = True
    for s in SEEDS:
        ds = generate_dataset(standard_scenario(n_informative=2, noise_std=0.7, seed=s))
        cfg = PipelineConfig(L=2000, d=100, seed=s, split=SplitSpec(0.8, s))
        defenses = [DefenseSpec("gaussian_noise", sigma=x, seed=s) for x in SIGMAS]
        defenses += [DefenseSpec("frequency_cap", cap_hz=c, seed=s) for c in CAPS]
        rows = [a for _, a in evaluate_defense(ds, defenses, cfg)]
        clean, noise, caps = rows[0], rows[1:5], rows[5:]
        exact &= noise[0] == clean and caps[0] == clean
        noise_curves.append(noise)
        cap_curves.append(caps)
    mean_noise = np.mean(noise_curves, axis=0)
    mean_caps = np.mean(cap_curves, axis=0)
    per_seed_bad = sum(not _non_increasing(c, SLACK) for c in noise_curves + cap_curves)
    ok = exact and _non_increasing(mean_noise, SLACK) and _non_increasing(mean_caps, SLACK)
    detail = (
        f"mean noise {np.round(mean_noise, 3).tolist()}, mean cap {np.round(mean_caps, 3).tolist()}, "
        f"identity rows exact={exact}, per-seed curves outside slack={per_seed_bad}/10"
    )
    return ok, detail


# 8 ---------------------------------------------------------------------------


def criterion_8():
    problems = []
    with tempfile.TemporaryDirectory() as tmp, contextlib.redirect_stdout(io.StringIO()):
        d = Path(tmp)
        scen = standard_scenario(traces_per_class=8, n_uninformative=1, n_samples=40)
        (d / "scen.json").write_text(json.dumps(scen.to_dict()))
        ds = generate_dataset(scen)
        save_dataset(ds, d / "ds.jsonl")
        if not datasets_identical(ds, load_dataset(d / "ds.jsonl")):
            problems.append("dataset round trip")
        db = ChannelDatabase.from_seed([ChannelDescriptor("inf_0", "a0"), ChannelDescriptor("inf_1", "a1")])
        db.add(ChannelDescriptor("inf_2", "a2").accepted(0.9), "discovered")
        save_database(db, d / "db.jsonl")
        (d / "dsw.json").write_text(json.dumps({"dataset": "ds.jsonl", "defenses": [{"kind": "gaussian_noise", "sigma": 0.25}], "pipeline": {"L": 200, "d": 20}}))
        F = fixture_path
        fast = ["--L", "200", "--d", "20"]
        cal = str(d / "cal.jsonl")
        runs = {
            "synth": ["synth", "--config", f"{d}/scen.json", "--seed", "1"],
            "kernels": ["kernels", "--in", f"{d}/ds.jsonl", "--L", "50", "--seed", "2"],
            "extract": ["extract", "--in", f"{d}/ds.jsonl", "--L", "50", "--seed", "2"],
            "reduce": ["reduce", "--in", f"{d}/extract.ref", "--d", "5"],
            "classify": ["classify", "--train", f"{d}/reduce.ref", "--test", f"{d}/reduce.ref"],
            "validate": ["validate", "--in", f"{d}/ds.jsonl"],
            "select": ["select", "--db", f"{d}/db.jsonl", "--in", f"{d}/ds.jsonl", "--k", "2", "--seed", "0"],
            "analyze": ["analyze", "--in", f"{d}/ds.jsonl", "--channels", "inf_0,inf_1", "--seed", "7", *fast],
            "exclusion": ["exclusion", "--in", f"{d}/ds.jsonl", "--db", f"{d}/db.jsonl", "--exclude", "seed", "--k", "1", "--seed", "0", *fast],
            "sweep": ["sweep", "--config", f"{d}/scen.json", "--sizes", "4,8", "--seed", "0", *fast],
            "defend": ["defend", "--kind", "freq", "--param", "20", "--in", f"{d}/ds.jsonl", "--seed", "3"],
            "defense-sweep": ["defense-sweep", "--config", f"{d}/dsw.json", "--seed", "0"],
            "discover": [
                "discover", "--proposer", f"scripted:{F('gemini80.jsonl')}", "--event", str(F("gemini80_event.json")),
                "--kb", str(F("gemini80_kb.json")), "--calibration", cal, "--seed", "0",
            ],
        }
        if cli_main(["synth", "--config", str(F("gemini80_calibration.scenario.json")), "--seed", "80", "--out", cal]) != 0:
            problems.append("calibration synth")
        for name, argv in runs.items():
            codes = [cli_main(argv + ["--out", f"{d}/{name}.{tag}"]) for tag in ("ref", "again")]
            if codes != [0, 0]:
                problems.append(f"{name} exit {codes}")
            elif (d / f"{name}.ref").read_bytes() != (d / f"{name}.again").read_bytes():
                problems.append(f"{name} differs")
    return not problems, f"{len(runs)} subcommands re-run byte-identically, dataset round trip bit-exact" if not problems else "; ".join(problems)


CRITERIA = [
    (1, "discovery replay", criterion_1, 5),
    (2, "kernel-feature oracle", criterion_2, 10),
    (3, "PCA oracle", criterion_3, 5),
    (4, "shift-robust end-to-end", criterion_4, 180),
    (5, "LD gate soundness", criterion_5, 60),
    (6, "exclusion study", criterion_6, 180),
    (7, "defense monotonicity", criterion_7, 300),
    (8, "determinism and format", criterion_8, 60),
]


def _line(num, name, ok, detail):
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num} {name}: {detail}"


@pytest.mark.acceptance
@pytest.mark.parametrize("num,name,fn,budget", CRITERIA, ids=[f"c{c[0]}" for c in CRITERIA])
def test_criterion(num, name, fn, budget, capsys):
    ok, detail = _timed(budget, fn)
    with capsys.disabled():
        print("\n" + _line(num, name, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, name, fn, budget in CRITERIA:
        ok, detail = _timed(budget, fn)
        failed += not ok
        print(_line(num, name, ok, detail), flush=True)
    raise SystemExit(1 if failed else 0)
