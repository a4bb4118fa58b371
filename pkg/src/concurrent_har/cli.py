"""Command-line entry point: ``concurrent-har <subcommand> [options]``.

Every subcommand accepts ``--seed``, ``--config`` (a JSON file) and
``--out`` (output directory).  The config file may hold one section per
concern, e.g.::

    {"model": {"preset": "desk_multimodal", "n_activities": 6},
     "preprocess": {"band_shape": "hamming", "channels": "stack"},
     "plan": {"epochs": 20, "lr": 0.003},
     "composite": {"n_train": 5000},
     "synth": {"snr": 6.0}}

Explicit flags override config values, which override built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, HarError

log = logging.getLogger("concurrent_har")


def _read_config(path):
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object of sections")
    return cfg


def _section(args, name):
    sec = args.config_data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return dict(sec)


def _apply(obj, overrides, what):
    names = {f.name for f in fields(obj)}
    unknown = set(overrides) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    return replace(obj, **overrides)


def _flags(args, mapping):
    """Flag values the user actually gave, renamed to dataclass fields."""
    return {dest: getattr(args, flag) for flag, dest in mapping.items() if getattr(args, flag) is not None}


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_config(args, default_preset):
    from .model.config import NetworkConfig

    sec = _section(args, "model")
    if getattr(args, "preset", None):
        sec = {"preset": args.preset, **{k: v for k, v in sec.items() if k != "preset"}}
    sec.setdefault("preset", default_preset)
    return NetworkConfig.from_dict(sec)


def _progress(epoch, loss, elapsed):
    print(f"epoch {epoch}\tloss {loss:.6f}\t{elapsed:.1f}s", flush=True)


# -- subcommands ----------------------------------------------------------------------


def cmd_memreport(args):
    from .memcalc import estimate_memory

    config = _model_config(args, "trauma35")
    report = estimate_memory(config, convention=args.convention)
    out = _out(args)
    text = report.to_text()
    (out / "memreport.txt").write_text(text)
    (out / "memreport.csv").write_text(report.to_csv())
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(args):
    from .checks import OP_CASES, check_lstm, check_model, check_op

    results = []
    for name in OP_CASES:
        results.extend(check_op(name, args.seed + k, args.bits) for k in range(args.seeds_per_op))
    results.append(check_lstm(args.seed, args.bits))
    results.append(check_model(args.seed, args.bits, seconds=args.seconds))
    lines = []
    by_name = {}
    for r in results:
        by_name.setdefault(r.name, []).append(r)
    for name, rs in by_name.items():
        ok = all(r.passed for r in rs)
        worst = max(r.max_rel_error for r in rs)
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name:24s} {sum(r.checked for r in rs):6d} entries  "
                     f"max rel err {worst:.2e}")
        for r in rs:
            for key, idx, a, n, err in r.failures[:3]:
                lines.append(f"      {key}[{idx}]: analytic {a:.6e} numeric {n:.6e} rel {err:.2e}")
    failed = [r for r in results if not r.passed]
    worst = max(r.max_rel_error for r in results)
    if failed:
        lines.append(f"gradcheck: {len(failed)} of {len(results)} checks FAILED at {args.bits}-bit")
    else:
        lines.append(f"gradcheck: all {len(results)} checks pass at {args.bits}-bit "
                     f"(max relative error {worst:.2e}, tolerance 1e-4)")
    text = "\n".join(lines) + "\n"
    (_out(args) / "gradcheck.txt").write_text(text)
    sys.stdout.write(text)
    return 1 if failed else 0


def cmd_synth(args):
    from .data.synth import SyntheticCaseSpec, synth_cases, trauma_like
    from .metrics import concurrency_profile
    from .training import save_cases

    sec = _section(args, "synth")
    base = trauma_like() if args.profile == "trauma-like" else SyntheticCaseSpec()
    spec = _apply(base, sec, "synth")
    spec = replace(spec, **_flags(args, {"length": "length", "activities": "n_activities", "snr": "snr"}),
                   seed=args.seed)
    spec.validate()
    out = _out(args)
    cases = synth_cases(spec, args.cases)
    save_cases(out / "cases", cases)
    g = np.concatenate([c.labels for c in cases]).T
    prof = concurrency_profile(g)
    with open(out / "concurrency.txt", "w") as fh:
        fh.write("k\tseconds\tfraction\n")
        for row in prof.histogram_rows():
            fh.write(f"{row[0]}\t{row[1]}\t{row[2]:.6f}\n")
    print(f"wrote {len(cases)} cases of {spec.length} s to {out / 'cases'}; "
          f"{prof.fraction_at_least(2):.1%} of seconds have >= 2 concurrent activities")
    return 0


def cmd_preprocess(args):
    from .data.ingest import read_depth_raw, read_rfid_log, read_wav
    from .preprocess import DepthTransformer, MfscTransformer, RssMapTransformer, group_by_second, load_geometry
    from .training import CaseSequence, save_case

    sec = _section(args, "preprocess")
    streams = {}
    if args.depth:
        rec = read_depth_raw(args.depth)
        size = args.depth_size or sec.get("depth_size", 256)
        frames = DepthTransformer(size=size, max_range=rec.max_range).transform(rec.per_second())
        streams["depth"] = (rec.start, frames)
    if args.audio:
        clip = read_wav(args.audio)
        side = args.audio_size or sec.get("audio_size", 64)
        maps = MfscTransformer(sample_rate=clip.rate, channels=sec.get("channels", "mono"),
                               band_shape=sec.get("band_shape", "triangle"),
                               presented_shape=(side, side)).transform(clip.samples)
        streams["audio"] = (args.audio_start, maps)
    if args.rfid:
        reads = read_rfid_log(args.rfid)
        lo, buckets = group_by_second(reads)
        geometry = load_geometry(args.geometry) if args.geometry else None
        streams["rss"] = (lo, RssMapTransformer(geometry=geometry).fit().transform(buckets))
    if not streams:
        raise ConfigError("give at least one of --depth, --audio, --rfid")

    start = max(s for s, _ in streams.values())
    stop = min(s + len(a) for s, a in streams.values())
    if stop <= start:
        raise ConfigError(f"the streams share no whole second (latest start {start}, earliest end {stop})")
    inputs = {m: a[start - s : stop - s] for m, (s, a) in streams.items()}
    labels = np.zeros((stop - start, 0), np.uint8)
    if args.labels:
        labels = _read_labels(args.labels, start, stop)
    case = CaseSequence(args.case_id, inputs, labels, start)
    out = _out(args)
    save_case(out / f"{case.case_id}.npz", case)
    shapes = ", ".join(f"{m} {tuple(a.shape[1:])}" for m, a in inputs.items())
    print(f"case {case.case_id}: seconds {start}..{stop - 1}; {shapes}")
    return 0


def _read_labels(path, start, stop):
    """``second<TAB>b1 b2 ...`` rows; every second in [start, stop) is required."""
    from .errors import FormatError

    rows = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"line {lineno}: expected 'second<TAB>bits'", path=path)
            rows[int(parts[0])] = [int(b) for b in parts[1].split()]
    missing = [s for s in range(start, stop) if s not in rows]
    if missing:
        raise FormatError(f"no labels for seconds {missing[:5]}", path=path)
    return np.array([rows[s] for s in range(start, stop)], np.uint8)


def _plan(args):
    from .training import plan_from_dict

    sec = _section(args, "plan")
    if args.plan_preset:
        sec["preset"] = args.plan_preset
    sec.update(_flags(args, {"epochs": "epochs", "lr": "lr", "minibatch": "minibatch_seconds",
                             "batch_cases": "batch_cases", "split": "split_fraction"}))
    sec["seed"] = args.seed
    return plan_from_dict(sec)


def cmd_train(args):
    from .model.network import build_network
    from .training import load_cases, split_cases, train

    plan = _plan(args)
    cases = load_cases(args.cases)
    config = _model_config(args, "desk_multimodal")
    if config.n_activities != cases[0].n_activities:
        config = config.with_activities(cases[0].n_activities)
        log.info("activity count set to %d from the case labels", config.n_activities)
    out = _out(args)
    train_set, test_set = split_cases(cases, plan.split_fraction, plan.seed)
    (out / "split.json").write_text(json.dumps({"seed": plan.seed, "train": [c.case_id for c in train_set],
                                                "test": [c.case_id for c in test_set]}, indent=1))
    model = build_network(config, seed=args.seed, dtype=np.float64 if args.float64 else np.float32)
    result = train(model, train_set, plan, out_dir=out, resume_from=args.resume,
                   progress=None if args.quiet else _progress)
    final = result.epoch_losses[-1] if result.epoch_losses else float("nan")
    print(f"trained {len(train_set)} cases for {plan.epochs} epochs; final loss {final:.6f}; "
          f"checkpoint {out / 'final.ckpt'}")
    return 0


def cmd_evaluate(args):
    from .metrics import metric_report, stack_predictions, write_metrics
    from .training import evaluate, load_cases, load_model, write_predictions, write_truth

    model, meta, _ = load_model(args.checkpoint)
    split = Path(args.split) if args.split else Path(args.checkpoint).parent / "split.json"
    ids = None
    if split.exists() and not args.all_cases:
        ids = json.loads(split.read_text())["test"]
        log.info("evaluating the %d held-out cases listed in %s", len(ids), split)
    cases = load_cases(args.cases, ids)
    preds = evaluate(model, cases, window_seconds=args.window)
    out = _out(args)
    write_predictions(out / "predictions.txt", preds)
    write_truth(out / "truth.txt", preds)
    report = metric_report(*stack_predictions(preds), extra={"checkpoint": str(args.checkpoint)})
    write_metrics(out / "metrics.txt", report)
    print(_summary_line(report))
    return 0


def _summary_line(report):
    return (f"accuracy {report.xnor_accuracy:.4f}  exact_match {report.exact_match_accuracy:.4f}  "
            f"mAP {report.map:.4f} ({report.map_defined}/{report.n_activities} activities)  "
            f"seconds {report.n_seconds}")


def cmd_metrics(args):
    from .metrics import metric_report, stack_predictions, write_metrics
    from .training import read_predictions

    preds = read_predictions(args.predictions, args.truth)
    report = metric_report(*stack_predictions(preds))
    write_metrics(_out(args) / "metrics.txt", report)
    print(_summary_line(report))
    return 0


def _composite_experiment(args):
    from .experiments import CompositeExperiment

    exp = _apply(CompositeExperiment(), _section(args, "composite"), "composite")
    given = _flags(args, {"dataset": "dataset", "data_dir": "data_dir", "epochs": "epochs",
                          "train_count": "n_train", "test_count": "n_test", "batch_cases": "batch_cases",
                          "lr": "lr"})
    if getattr(args, "labels", None) is not None:
        given["labeled"] = args.labels
    if args.grid:
        try:
            given["grid"] = tuple(int(v) for v in args.grid.lower().split("x"))
        except ValueError:
            raise ConfigError(f"--grid must look like 2x3, got {args.grid!r}") from None
    if args.repeats:
        given["distinct"] = False
    return replace(exp, **given, seed=args.seed).validate()


def cmd_composite(args):
    from .experiments import run_composite

    exp = _composite_experiment(args)
    out = _out(args)
    report = run_composite(exp, out, progress=None if args.quiet else _progress)
    print(_summary_line(report) + f"  wall {report.extra['wall_seconds']:.0f}s")
    print(f"metrics written to {out / 'metrics.txt'}")
    return 0


def cmd_sweep(args):
    from .experiments import label_subset_sweep

    exp = _composite_experiment(args)
    try:
        sizes = [int(v) for v in args.sizes.split(",")]
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    out = _out(args)
    rows = label_subset_sweep(exp, sizes, out, budget_seconds=args.budget_seconds,
                              progress=None if args.quiet else _progress)
    for r in rows:
        if r["status"] == "ok":
            print(f"labels {r['labels']:4d}  accuracy {r['accuracy']:.4f}  mAP {r['mAP']:.4f}")
        else:
            print(f"labels {r['labels']:4d}  {r['status']}")
    print(f"table written to {out / 'sweep.csv'}")
    return 0


# -- parser ---------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--config", help="JSON config file with per-subcommand sections")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress details")
    common.add_argument("-q", "--quiet", action="store_true", help="no per-epoch lines")

    ap = argparse.ArgumentParser(prog="concurrent-har", description="Concurrent activity recognition toolkit.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=fn)
        return p

    p = add("preprocess", cmd_preprocess, "turn raw sensor streams into a per-second case file")
    p.add_argument("--depth", help="depth recording (DEPTHRAW format)")
    p.add_argument("--audio", help="WAV recording")
    p.add_argument("--audio-start", type=int, default=0, help="second at which the WAV starts")
    p.add_argument("--rfid", help="RFID log (timestamp,tag_id,antenna_id,rss_dbm)")
    p.add_argument("--geometry", help="antenna geometry JSON")
    p.add_argument("--labels", help="per-second labels: second<TAB>bits")
    p.add_argument("--case-id", default="case")
    p.add_argument("--depth-size", type=int, help="depth frame side after resizing (default 256)")
    p.add_argument("--audio-size", type=int, help="MFSC map side (default 64)")

    p = add("synth", cmd_synth, "generate synthetic multimodal cases")
    p.add_argument("--cases", type=int, default=10)
    p.add_argument("--length", type=int)
    p.add_argument("--activities", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--profile", choices=["default", "trauma-like"], default="default")

    p = add("train", cmd_train, "train a model on case files, split by case")
    p.add_argument("--cases", required=True, help="directory of case .npz files")
    p.add_argument("--preset", help="model preset (default desk_multimodal)")
    p.add_argument("--plan-preset", choices=["desk", "paper-faithful"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--minibatch", type=int, help="seconds per truncated-BPTT window")
    p.add_argument("--batch-cases", type=int)
    p.add_argument("--split", type=float, help="training fraction of cases (default 0.8)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--float64", action="store_true")

    p = add("evaluate", cmd_evaluate, "write predictions for held-out cases")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--split", help="split.json from training (default: next to the checkpoint)")
    p.add_argument("--all-cases", action="store_true", help="ignore the split and evaluate every case")
    p.add_argument("--window", type=int, default=60)

    p = add("metrics", cmd_metrics, "score a prediction file against a truth file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)

    p = add("memreport", cmd_memreport, "per-layer memory table")
    p.add_argument("--preset", help="model preset (default trauma35)")
    p.add_argument("--convention", choices=["auto", "paper", "structural"], default="auto")

    p = add("gradcheck", cmd_gradcheck, "finite-difference check of every op and the model")
    p.add_argument("--bits", type=int, choices=[64], default=64)
    p.add_argument("--seeds-per-op", type=int, default=3)
    p.add_argument("--seconds", type=int, default=2)

    for name, fn, help_ in (("composite", cmd_composite, "composite-image experiment: make, train, evaluate"),
                            ("sweep", cmd_sweep, "label-subset sweep over composite experiments")):
        p = add(name, fn, help_)
        p.add_argument("--dataset", choices=["mnist", "cifar100"])
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--epochs", type=int)
        p.add_argument("--train-count", type=int)
        p.add_argument("--test-count", type=int)
        p.add_argument("--batch-cases", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--grid", help="rows x cols, e.g. 2x3")
        p.add_argument("--repeats", action="store_true", help="allow tiles to share a class")
        if name == "composite":
            p.add_argument("--labels", type=int, help="label only this many classes")
        else:
            p.add_argument("--sizes", default="10,50,100")
            p.add_argument("--budget-seconds", type=float)
    return ap


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    tick = time.perf_counter()
    try:
        args.config_data = _read_config(args.config)
        code = args.func(args)
    except (HarError, OSError, ValueError, KeyError) as exc:
        name = type(exc).__name__
        print(f"error: {args.command}: {name}: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - tick)
    return code


if __name__ == "__main__":
    sys.exit(main())
