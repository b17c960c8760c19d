"""``leakscope`` command-line entry point.

Exit codes: 0 success, 1 validation or data error (including bad flags),
2 adapter or I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import _util
from .errors import DataError, LeakscopeError

log = logging.getLogger("leakscope")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _pipeline_flags(p, seed_required=True):
    p.add_argument("--L", type=int, default=10_000, help="number of random kernels (default 10000)")
    p.add_argument("--d", type=int, default=250, help="PCA dimensions (default 250)")
    p.add_argument("--alpha", type=float, default=0.8, help="train fraction per class (default 0.8)")
    p.add_argument("--backend", default="nearest_centroid", help="nearest_centroid | knn | ridge | external_bridge")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="backend parameter (repeatable)")
    p.add_argument("--no-normalize", action="store_true", help="skip per-channel z-normalization")
    p.add_argument("--features", default="rocket", choices=["rocket", "raw"])


def _common(p, seed_required: bool):
    p.add_argument("--seed", type=int, required=seed_required, help="random seed" + (" (required)" if seed_required else " (unused)"))
    p.add_argument("--out", required=True, help="output path")


def _param_value(text: str):
    import json

    try:
        return json.loads(text)
    except ValueError:
        return text


def _pipeline_config(args):
    from .analysis import PipelineConfig
    from .classify import ClassifierBackendSpec
    from .traces import SplitSpec

    params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise DataError(f"--param expects KEY=VALUE, got {item!r}")
        params[key] = _param_value(value)
    return PipelineConfig(
        L=args.L,
        d=args.d,
        split=SplitSpec(args.alpha, args.seed),
        backend=ClassifierBackendSpec(args.backend, params),
        normalize_per_channel=not args.no_normalize,
        seed=args.seed,
        features=args.features,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="leakscope", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset from a scenario config")
    p.add_argument("--config", required=True)
    _common(p, True)

    p = sub.add_parser("kernels", help="generate and save a kernel bank")
    p.add_argument("--L", type=int, default=10_000)
    p.add_argument("--in", dest="inp", help="dataset to take channel count and length from")
    p.add_argument("--n-channels", type=int)
    p.add_argument("--series-length", type=int)
    p.add_argument("--no-normalize", action="store_true")
    _common(p, True)

    p = sub.add_parser("extract", help="kernel features for every trace of a dataset")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--kernels", help="saved kernel bank (otherwise generated from --L/--seed)")
    p.add_argument("--L", type=int, default=10_000)
    p.add_argument("--channels", help="comma-separated channel ids to keep")
    _common(p, True)

    p = sub.add_parser("reduce", help="fit PCA on a feature file (or apply a saved projection)")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--d", type=int, default=250)
    p.add_argument("--apply", help="saved projection to apply instead of fitting")
    p.add_argument("--save-projection")
    _common(p, False)

    p = sub.add_parser("classify", help="fit a context feature file and score a test feature file")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--backend", default="nearest_centroid")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    _common(p, False)

    p = sub.add_parser("discover", help="run the propose-verify channel discovery loop")
    p.add_argument("--event", required=True, help="event spec JSON")
    p.add_argument("--kb", required=True, help="knowledge base JSON")
    p.add_argument("--seed-db", help="seed channel database (.jsonl)")
    p.add_argument("--proposer", required=True, help="scripted:<path> | queue:<dir> | http(s)://...")
    p.add_argument("--verifier", help="http(s)://... | scripted:<path>")
    p.add_argument("--calibration", help="training-only calibration dataset")
    p.add_argument("--B", type=int, default=10)
    p.add_argument("--tau-dist", type=float, default=2.0)
    p.add_argument("--tau-stop", type=float, default=0.2)
    p.add_argument("--max-batches", type=int, default=20)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--report", help="write tallies and batch statistics here")
    _common(p, True)

    p = sub.add_parser("select", help="choose a compact channel subset for an event")
    p.add_argument("--db", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--k", type=int, default=6)
    p.add_argument("--alpha", type=float, default=0.8)
    _common(p, True)

    p = sub.add_parser("analyze", help="end-to-end leakage analysis on selected channels")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--channels", help="comma-separated channel ids (default: all)")
    p.add_argument("--event-id", default="")
    p.add_argument("--save-kernels")
    p.add_argument("--save-projection")
    p.add_argument("--emit-plot-data", help="per-class accuracy as x y lines")
    _pipeline_flags(p)
    _common(p, True)

    p = sub.add_parser("exclusion", help="compare all-origin and origin-filtered analyses")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--exclude", choices=["seed", "discovered"])
    p.add_argument("--k", type=int, default=6)
    _pipeline_flags(p)
    _common(p, True)

    p = sub.add_parser("sweep", help="accuracy versus traces per class")
    p.add_argument("--config", required=True, help="scenario config")
    p.add_argument("--sizes", default="10,20,30,40,50")
    p.add_argument("--emit-plot-data")
    _pipeline_flags(p)
    _common(p, True)

    p = sub.add_parser("defend", help="apply a countermeasure to a dataset")
    p.add_argument("--kind", required=True, choices=["freq", "noise"])
    p.add_argument("--param", type=float, required=True, help="cap in Hz (freq) or sigma (noise)")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--alpha", type=float, default=0.8, help="split used for clean training statistics")
    _common(p, True)

    p = sub.add_parser("defense-sweep", help="accuracy under a list of countermeasures")
    p.add_argument("--config", required=True, help="JSON with dataset|scenario, defenses, pipeline")
    p.add_argument("--emit-plot-data")
    _common(p, True)

    p = sub.add_parser("validate", help="check a dataset file")
    p.add_argument("--in", dest="inp", required=True)
    _common(p, False)
    return parser


# -- handlers ------------------------------------------------------------------


def _synth(args):
    from .synth import generate_dataset, load_scenario
    from .traces import save_dataset

    cfg = load_scenario(args.config).replace(seed=args.seed)
    ds = generate_dataset(cfg)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} traces x {ds.n_channels} channels to {args.out}")


def _kernels(args):
    from .rocket import generate_kernels, save_kernels
    from .traces import load_dataset

    if args.inp:
        ds = load_dataset(args.inp)
        n_ch, length = ds.n_channels, ds.n_samples
    else:
        if args.n_channels is None or args.series_length is None:
            raise DataError("kernels needs --in or both --n-channels and --series-length")
        n_ch, length = args.n_channels, args.series_length
    bank = generate_kernels(args.L, n_ch, length, args.seed, not args.no_normalize)
    save_kernels(bank, args.out)
    print(f"wrote {len(bank)} kernels to {args.out}")


def _extract(args):
    from .rocket import generate_kernels, load_kernels, save_features, transform_dataset
    from .traces import load_dataset

    ds = load_dataset(args.inp)
    if args.channels:
        ds = ds.select_channels(args.channels.split(","))
    bank = load_kernels(args.kernels) if args.kernels else generate_kernels(args.L, ds.n_channels, ds.n_samples, args.seed)
    fm = transform_dataset(bank, ds)
    save_features(fm, args.out)
    print(f"wrote {len(fm)} x {fm.feature_dim} features to {args.out}")


def _reduce(args):
    from .pca import fit_pca, load_projection, project, save_projection
    from .rocket import load_features, save_features

    fm = load_features(args.inp)
    proj = load_projection(args.apply) if args.apply else fit_pca(fm, args.d)
    if proj.notice:
        print(f"notice: {proj.notice}")
    if args.save_projection:
        save_projection(proj, args.save_projection)
    save_features(project(proj, fm), args.out)
    print(f"wrote {len(fm)} x {proj.r_effective} reduced features to {args.out}")


def _classify(args):
    from .classify import ClassifierBackendSpec, accuracy, close, fit_context, predict
    from .rocket import load_features

    params = {}
    for item in args.param:
        key, _, value = item.partition("=")
        params[key] = _param_value(value)
    train, test = load_features(args.train), load_features(args.test)
    clf = fit_context(ClassifierBackendSpec(args.backend, params), train)
    try:
        dists = predict(clf, test)
        acc = accuracy(clf, test)
    finally:
        close(clf)
    _util.write_json(
        args.out,
        {
            "accuracy": acc,
            "labels": list(clf.label_set),
            "predictions": [{"argmax": d.argmax_label, "probabilities": list(d.probabilities)} for d in dists],
        },
    )
    print(f"accuracy {acc:.4f} on {len(test)} rows")


def _discover(args):
    from dataclasses import replace

    from .adapters import make_proposer, make_verifier
    from .discovery import ChannelDatabase, DiscoveryConfig, load_database, load_event, load_kb, run_discovery, save_database
    from .traces import load_dataset

    event = load_event(args.event)
    if args.calibration:
        event = replace(event, calibration_dataset_path=args.calibration)
    kb = load_kb(args.kb)
    seed_db = load_database(args.seed_db) if args.seed_db else ChannelDatabase()
    config = DiscoveryConfig(
        batch_size_B=args.B, tau_dist=args.tau_dist, tau_stop=args.tau_stop, max_batches=args.max_batches, seed=args.seed
    )
    calibration = load_dataset(event.calibration_dataset_path) if event.calibration_dataset_path else None
    result = run_discovery(
        event, kb, seed_db, make_proposer(args.proposer, args.timeout), make_verifier(args.verifier, args.timeout), config, calibration
    )
    save_database(result.database, args.out)
    report = result.report()
    if args.report:
        _util.write_json(args.report, report)
    t = report["tallies"]
    print(f"{'BER':>4} {'SE':>4} {'LD':>4} {'CD':>4} {'SEM':>4} {'accepted':>9} {'proposals':>10}")
    print(f"{t['BER']:>4} {t['SE']:>4} {t['LD']:>4} {t['CD']:>4} {t['SEM']:>4} {report['accepted']:>9} {report['total_proposals']:>10}")
    print(report["stop_reason"])


def _select(args):
    from .analysis import PipelineConfig, select_for_dataset
    from .discovery import load_database
    from .traces import SplitSpec, load_dataset

    config = PipelineConfig(split=SplitSpec(args.alpha, args.seed), seed=args.seed)
    chosen = select_for_dataset(load_dataset(args.inp), load_database(args.db), config, k=args.k)
    _util.write_json(args.out, {"selected_channels": chosen})
    print("selected: " + ", ".join(chosen))


def _analyze(args):
    from .analysis import emit_plot_data, run_analysis, save_report
    from .traces import load_dataset

    ds = load_dataset(args.inp)
    channels = args.channels.split(",") if args.channels else ds.channel_ids
    report = run_analysis(ds, channels, _pipeline_config(args), args.event_id, args.save_kernels, args.save_projection)
    save_report(report, args.out)
    if args.emit_plot_data:
        emit_plot_data([(str(k), v) for k, v in report.per_class_accuracy.items()], args.emit_plot_data)
    print(report.table())


def _exclusion(args):
    from .analysis import run_exclusion_study
    from .discovery import load_database
    from .traces import load_dataset

    rep_all, rep_filtered = run_exclusion_study(
        load_dataset(args.inp), load_database(args.db), _pipeline_config(args), args.exclude, k=args.k
    )
    _util.write_json(args.out, {"all": rep_all.to_dict(), "filtered": rep_filtered.to_dict(), "excluded_origin": args.exclude})
    print(f"{'run':<10} {'accuracy':>9}  channels")
    print(f"{'all':<10} {rep_all.overall_accuracy:>9.4f}  {', '.join(rep_all.selected_channels)}")
    print(f"{'filtered':<10} {rep_filtered.overall_accuracy:>9.4f}  {', '.join(rep_filtered.selected_channels)}")


def _sweep(args):
    from .analysis import emit_plot_data, sweep_dataset_size
    from .synth import load_scenario

    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError as exc:
        raise DataError(f"--sizes must be comma-separated integers: {exc}") from exc
    scenario = load_scenario(args.config).replace(seed=args.seed)
    rows = sweep_dataset_size(scenario, sizes, _pipeline_config(args))
    _util.write_json(args.out, {"rows": [{"N": n, "accuracy": a} for n, a in rows]})
    if args.emit_plot_data:
        emit_plot_data(rows, args.emit_plot_data)
    print(f"{'N':>4} {'accuracy':>9}")
    for n, a in rows:
        print(f"{n:>4} {a:>9.4f}")


def _defend(args):
    from .defenses import DefenseSpec, apply_defense, channel_stds
    from .traces import SplitSpec, load_dataset, save_dataset, split_indices

    ds = load_dataset(args.inp)
    if args.kind == "freq":
        spec = DefenseSpec("frequency_cap", cap_hz=args.param, seed=args.seed)
        stats = None
    else:
        spec = DefenseSpec("gaussian_noise", sigma=args.param, seed=args.seed)
        train_idx, _ = split_indices(ds, SplitSpec(args.alpha, args.seed))
        stats = channel_stds(ds.subset(train_idx))
    save_dataset(apply_defense(ds, spec, stats), args.out)
    print(f"applied {spec.name} to {len(ds)} traces")


def _defense_sweep(args):
    from .analysis import PipelineConfig, emit_plot_data
    from .defenses import DefenseSpec, evaluate_defense
    from .synth import ScenarioConfig, generate_dataset
    from .traces import load_dataset

    cfg = _util.read_json(args.config)
    if not isinstance(cfg, dict):
        raise DataError("defense-sweep config must be a JSON object")
    if "dataset" in cfg:
        ds = load_dataset(Path(args.config).parent / cfg["dataset"])
    elif "scenario" in cfg:
        ds = generate_dataset(ScenarioConfig.from_dict({**cfg["scenario"], "seed": args.seed}))
    else:
        raise DataError("defense-sweep config needs 'dataset' or 'scenario'")
    pipe = dict(cfg.get("pipeline", {}))
    pipe["seed"] = args.seed
    pipe["split"] = {"ratio_alpha": pipe.get("split", {}).get("ratio_alpha", 0.8), "seed": args.seed}
    config = PipelineConfig.from_dict(pipe)
    try:
        defenses = [DefenseSpec(**{"seed": args.seed, **d}) for d in cfg.get("defenses", [])]
    except TypeError as exc:
        raise DataError(f"bad defense entry: {exc}") from exc
    rows = evaluate_defense(ds, defenses, config, cfg.get("channels"))
    _util.write_json(args.out, {"rows": [{"defense": n, "accuracy": a} for n, a in rows]})
    if args.emit_plot_data:
        emit_plot_data(rows, args.emit_plot_data)
    print(f"{'defense':<28} {'accuracy':>9}")
    for n, a in rows:
        print(f"{n:<28} {a:>9.4f}")


def _validate(args):
    import json

    from .traces import ChannelSpec, parse_header, validate_trace

    lines = [ln for ln in _util.read_text(args.inp).splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{args.inp}: empty file")
    header = parse_header(lines[0])
    channels = [ChannelSpec(**c) for c in header["channels"]]
    problems = []
    for i, line in enumerate(lines[1:]):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append({"trace": i, "problems": [f"invalid JSON: {exc}"]})
            continue
        found = validate_trace(rec, channels) if isinstance(rec, dict) else ["record is not an object"]
        if isinstance(rec, dict) and rec.get("label") not in header["labels"]:
            found.append(f"label {rec.get('label')!r} not in header labels")
        if found:
            problems.append({"trace": i, "problems": found})
    _util.write_json(args.out, {"file": str(args.inp), "n_traces": len(lines) - 1, "problems": problems})
    if problems:
        for p in problems:
            print(f"trace {p['trace']}: " + "; ".join(p["problems"]), file=sys.stderr)
        raise DataError(f"{len(problems)} invalid trace(s), first at trace index {problems[0]['trace']}")
    print(f"{args.inp}: {len(lines) - 1} traces, valid")


HANDLERS = {
    "synth": _synth,
    "kernels": _kernels,
    "extract": _extract,
    "reduce": _reduce,
    "classify": _classify,
    "discover": _discover,
    "select": _select,
    "analyze": _analyze,
    "exclusion": _exclusion,
    "sweep": _sweep,
    "defend": _defend,
    "defense-sweep": _defense_sweep,
    "validate": _validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        HANDLERS[args.command](args)
    except LeakscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
