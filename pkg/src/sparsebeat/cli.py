"""``sparsebeat`` command-line interface.

Subcommands: ``ingest`` (records -> beat cache), ``train`` (cache -> class
dictionary), ``classify`` (two dictionaries + beats -> decision CSV) and
``experiment`` (full split/screen/learn/classify protocol over several seeds).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from sparsebeat import evaluate, ingest, modelio
from sparsebeat.beats import concatenate
from sparsebeat.classify import ClassifierModel, Criterion, classify_batch, write_decisions_csv
from sparsebeat.dictlearn import LearnConfig, learn
from sparsebeat.pursuit import Algorithm
from sparsebeat.screen import apply_screening, screen_training_set
from sparsebeat.wavedict import WaveletDictConfig, build_wavelet_dictionary

log = logging.getLogger("sparsebeat")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker processes for per-beat work (default: available cores)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")


def _add_pursuit(p: argparse.ArgumentParser, default_alg: str = "mp") -> None:
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=default_alg,
                   help=f"greedy pursuit (default: {default_alg})")
    p.add_argument("--prdn", type=_positive_float, default=9.0,
                   help="target prdn in percent for every approximation (default: 9)")


def _add_screening(p: argparse.ArgumentParser, per_class: bool = False) -> None:
    if per_class:
        p.add_argument("--screen-mult-n", type=float, default=3.0,
                       help="screening window half-width in std for class N (default: 3)")
        p.add_argument("--screen-mult-v", type=float, default=2.0,
                       help="screening window half-width in std for class V (default: 2)")
    else:
        p.add_argument("--screen-mult", type=float, default=None,
                       help="reject beats with k outside mean +/- s*std (default: 2 for V, else 3)")
    p.add_argument("--screen-prdn", type=_positive_float, default=9.0,
                   help="prdn used for screening approximations (default: 9)")
    p.add_argument("--screen-algorithm", choices=[a.value for a in Algorithm], default="oomp",
                   help="pursuit used for screening (default: oomp)")
    p.add_argument("--no-screen", action="store_true", help="skip outlier screening")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsebeat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="segment annotated records into a beat cache")
    p.add_argument("--record-dir", type=Path, required=True, help="directory holding the record files")
    p.add_argument("--records", nargs="+", required=True, help="record ids, e.g. 100 101")
    p.add_argument("--out-cache", type=Path, required=True, help="beat cache file to write")
    p.add_argument("--channel", type=int, default=0, help="signal channel to segment (default: 0)")
    p.add_argument("--csv-fallback", action="store_true",
                   help="read <id>.csv / <id>_ann.csv when binary files are missing")
    p.add_argument("--sampling-rate", type=_positive_float, default=360.0,
                   help="sampling rate assumed for CSV signals (default: 360)")
    _add_common(p)

    p = sub.add_parser("train", help="screen and learn one class dictionary")
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--class", dest="label", required=True, help="class label to learn, e.g. N or V")
    _add_pursuit(p)
    p.add_argument("--atoms", type=_positive_int, default=512, help="dictionary size M (default: 512)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=_positive_int, default=20, help="outer iterations (default: 20)")
    p.add_argument("--tol", type=_positive_float, default=1e-3,
                   help="stop when the Frobenius change falls below tol*||D0||_F (default: 1e-3)")
    _add_screening(p)
    p.add_argument("--out-model", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("classify", help="classify beats with two class dictionaries")
    p.add_argument("--model-a", type=Path, required=True)
    p.add_argument("--model-b", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cache", type=Path, help="beat cache to classify")
    src.add_argument("--record", help="record id to ingest and classify (needs --record-dir)")
    p.add_argument("--record-dir", type=Path)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default="III")
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=None,
                   help="pursuit (default: the one the models were learned with)")
    p.add_argument("--prdn", type=_positive_float, default=None,
                   help="target prdn (default: the one the models were learned with)")
    p.add_argument("--out-csv", type=Path, required=True)
    _add_common(p)

    p = sub.add_parser("experiment", help="run the Test I / Test II protocol over several seeds")
    p.add_argument("--cache", type=Path, required=True)
    p.add_argument("--design", choices=["test1", "test2"], default="test1")
    _add_pursuit(p)
    p.add_argument("--criterion", choices=[c.value for c in Criterion], default="III")
    p.add_argument("--atoms", type=_positive_int, default=512)
    p.add_argument("--max-iter", type=_positive_int, default=20)
    p.add_argument("--tol", type=_positive_float, default=1e-3)
    p.add_argument("--seeds", type=_positive_int, default=5, help="number of seeds (default: 5)")
    p.add_argument("--seed", type=int, default=0, help="first seed; seeds are seed..seed+k-1")
    _add_screening(p, per_class=True)
    p.add_argument("--out-report", type=Path, required=True, help="JSON report; the table goes to stdout")
    _add_common(p)
    return parser


def _snapshot(args: argparse.Namespace) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("verbose", "func"):
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _echo_config(args) -> dict:
    snap = _snapshot(args)
    print("config: " + json.dumps(snap, sort_keys=True), file=sys.stderr)
    return snap


def cmd_ingest(args) -> int:
    snap = _echo_config(args)
    cfg = ingest.SegmentationConfig(channel=args.channel)
    sets, failed = [], []
    for rid in args.records:
        try:
            record, anns = ingest.load_record(args.record_dir, rid, args.csv_fallback, args.sampling_rate)
            beats, stats = ingest.segment_beats(record, anns, cfg)
        except (OSError, ValueError) as exc:
            failed.append(rid)
            print(f"record {rid}: skipped ({exc})", file=sys.stderr)
            continue
        sets.append(beats)
        counts = " ".join(f"{k}={stats.kept.get(k, 0)}" for k in ("N", "V"))
        print(f"{rid}: {counts} boundary_skipped={stats.skipped_boundary} other={stats.skipped_other}")
    if not sets:
        print("no record could be ingested", file=sys.stderr)
        return EXIT_FAIL
    total = concatenate(sets)
    ingest.write_beat_cache(args.out_cache, total)
    Path(str(args.out_cache) + ".config.json").write_text(
        json.dumps({"cli": snap, "failed_records": failed}, indent=2) + "\n"
    )
    counts = total.class_counts()
    print(f"total: {' '.join(f'{k}={counts.get(k, 0)}' for k in ('N', 'V'))} -> {args.out_cache}")
    if failed:
        print(f"{len(failed)} of {len(args.records)} records failed: {' '.join(failed)}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    if args.screen_mult is None:
        args.screen_mult = 2.0 if args.label == "V" else 3.0
    snap = _echo_config(args)
    beats = ingest.read_beat_cache(args.cache).of_class(args.label)
    if beats.size == 0:
        print(f"class {args.label!r} not present in {args.cache}", file=sys.stderr)
        return EXIT_FAIL
    screening = None
    if not args.no_screen:
        wdict = build_wavelet_dictionary(WaveletDictConfig(signal_length=beats.n_q))
        report = screen_training_set(beats, wdict, args.screen_prdn, args.screen_mult,
                                     args.screen_algorithm, n_jobs=args.threads)
        beats = apply_screening(beats, report)
        screening = {"mean_k": report.mean_k, "std_k": report.std_k,
                     "rejected": int(report.rejected.size), "rejection_fraction": report.rejection_fraction}
        print(f"screening: mean k {report.mean_k:.2f}, std {report.std_k:.2f}, "
              f"rejected {report.rejected.size} ({report.rejection_fraction:.2f}%)", file=sys.stderr)
    cfg = LearnConfig(m=args.atoms, algorithm=args.algorithm, prdn_target=args.prdn,
                      max_outer_iterations=args.max_iter, tol=args.tol, seed=args.seed)
    dictionary, trace = learn(beats, cfg, n_jobs=args.threads)
    modelio.save_dictionary(args.out_model, dictionary.with_label(args.label), args.algorithm,
                            args.prdn, trace, {"cli": snap, "learn": cfg.to_dict(), "screening": screening})
    print(f"learned {dictionary.m} atoms in {len(trace)} iterations"
          f"{' (converged)' if trace.converged else ''} -> {args.out_model}")
    if trace.diagnostic:
        print(f"warning: {trace.diagnostic}", file=sys.stderr)
    return EXIT_OK


def cmd_classify(args) -> int:
    snap = _echo_config(args)
    da, meta_a = modelio.load_dictionary(args.model_a)
    db, meta_b = modelio.load_dictionary(args.model_b)
    if da.label is None or da.label == db.label:
        # identical or unlabelled dictionaries still classify; keep the columns distinguishable
        da, db = da.with_label(f"{da.label or 'A'}"), db.with_label(f"{db.label or 'B'}")
        if da.label == db.label:
            da, db = da.with_label(da.label + "_a"), db.with_label(db.label + "_b")
    algorithm = args.algorithm or meta_a.get("algorithm", "mp")
    prdn = args.prdn if args.prdn is not None else float(meta_a.get("prdn_target", 9.0))
    try:
        model = ClassifierModel(da, db, algorithm, prdn, args.criterion)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.cache is not None:
        beats = ingest.read_beat_cache(args.cache)
    else:
        if args.record_dir is None:
            print("error: --record needs --record-dir", file=sys.stderr)
            return EXIT_USAGE
        record, anns = ingest.load_record(args.record_dir, args.record)
        beats, _ = ingest.segment_beats(record, anns, ingest.SegmentationConfig(channel=args.channel))
    decisions = classify_batch(beats.beats, model, n_jobs=args.threads)
    write_decisions_csv(args.out_csv, beats, decisions)
    args.out_csv.with_suffix(args.out_csv.suffix + ".config.json").write_text(
        json.dumps({"cli": snap, "classifier": model.config()}, indent=2) + "\n"
    )
    print(f"{len(decisions)} beats -> {args.out_csv}")
    labelled = np.isin(beats.labels, evaluate.CLASSES)
    if labelled.any() and {da.label, db.label} == set(evaluate.CLASSES):
        stats = evaluate.compute_stats(beats.labels[labelled],
                                       [d.label for d, ok in zip(decisions, labelled) if ok])
        print("  ".join(f"{k} {v:.2f}" for k, v in stats.percentages().items()))
    unmet = sum(bool(d.flags) for d in decisions)
    if unmet:
        print(f"{unmet} beats did not reach the prdn target with at least one dictionary", file=sys.stderr)
    return EXIT_OK


def cmd_experiment(args) -> int:
    snap = _echo_config(args)
    beats = ingest.read_beat_cache(args.cache)
    lcfg = LearnConfig(m=args.atoms, algorithm=args.algorithm, prdn_target=args.prdn,
                       max_outer_iterations=args.max_iter, tol=args.tol)
    config = evaluate.ExperimentConfig(
        split=evaluate.SplitSpec.test1() if args.design == "test1" else evaluate.SplitSpec.test2(),
        learn_n=lcfg,
        learn_v=lcfg,
        algorithm=Algorithm.parse(args.algorithm),
        prdn_target=args.prdn,
        criterion=Criterion.parse(args.criterion),
        screening=evaluate.ScreeningSettings(
            enabled=not args.no_screen, prdn_target=args.screen_prdn,
            std_multiplier_n=args.screen_mult_n, std_multiplier_v=args.screen_mult_v,
            algorithm=Algorithm.parse(args.screen_algorithm),
        ),
    )
    seeds = list(range(args.seed, args.seed + args.seeds))
    report = evaluate.run_experiment(beats, config, seeds, n_jobs=args.threads)
    doc = report.to_dict()
    doc["cli"] = snap
    args.out_report.write_text(json.dumps(doc, indent=2) + "\n")
    table = report.format_table()
    args.out_report.with_suffix(".txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "classify": cmd_classify, "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
