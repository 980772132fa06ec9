"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from . import pipeline as pl
from .classifiers import KINDS, TrainedModel, normalize_kind, predict_codes, train_model
from .config import Config, load_config, to_dict
from .errors import DataError, PCGError, SingleClassTrainSet
from .evaluation import level_labels, stratified_split
from .features import FeatureTable, Layout
from .synth import write_corpus

log = logging.getLogger("pcgkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _level(value: str) -> int:
    if value not in ("1", "2"):
        raise argparse.ArgumentTypeError("level must be 1 or 2")
    return int(value)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file (default: $PCGKIT_CONFIG)")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes for per-recording stages (default: all CPUs)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="pcgkit", description="Heart-sound segmentation and murmur classification.")
    p.add_argument("--version", action="version", version=f"pcgkit {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", parents=[common], help="write a synthetic corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--n-per-class", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)

    s = sub.add_parser("ingest", parents=[common], help="canonicalize a WAV corpus")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--manifest")
    s.add_argument("--out", required=True)

    s = sub.add_parser("segment", parents=[common], help="segment every recording")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("features", parents=[common], help="per-cycle feature table")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--seg", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--layout", choices=[l.value for l in Layout], default="full100")

    s = sub.add_parser("train", parents=[common], help="train one classifier")
    s.add_argument("--features", required=True)
    s.add_argument("--classifier", required=True, choices=[k.lower() for k in KINDS])
    s.add_argument("--level", type=_level, required=True)
    s.add_argument("--layout", choices=[l.value for l in Layout])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    s = sub.add_parser("predict", parents=[common], help="apply a trained model")
    s.add_argument("--model", required=True)
    s.add_argument("--features", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("evaluate", parents=[common], help="split, train and score")
    s.add_argument("--features", required=True)
    s.add_argument("--level", type=_level, action="append",
                   help="1 or 2; repeat for both (default: both)")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--all-classifiers", action="store_true")
    g.add_argument("--classifier", choices=[k.lower() for k in KINDS])
    s.add_argument("--layout", choices=[l.value for l in Layout], action="append")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--truth", help="truth CSV (filename, kind, time_s) for segmentation scoring")
    s.add_argument("--seg", help="segmentation directory to score against --truth")
    s.add_argument("--manifest", help="manifest CSV giving labels for segmentation groups")
    s.add_argument("--out", required=True)

    s = sub.add_parser("pipeline", parents=[common], help="full run from WAVs to reports")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--resume", action="store_true", help="reuse existing stage outputs")
    return p


# -- commands -----------------------------------------------------------------

def cmd_synth(args, cfg: Config, jobs: int) -> int:
    spec = cfg.synth
    if args.n_per_class is not None:
        spec = dataclasses.replace(spec, n_per_class=args.n_per_class)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if spec.n_per_class < 1:
        raise DataError("--n-per-class must be >= 1")
    out = write_corpus(args.out, spec)
    print(f"wrote {spec.n_per_class * len(spec.classes)} recordings to {out}")
    return EXIT_OK


def cmd_ingest(args, cfg, jobs) -> int:
    paths = pl.ingest(args.inp, args.out, cfg, args.manifest)
    print(f"ingested {len(paths)} recordings into {args.out}")
    return EXIT_OK


def cmd_segment(args, cfg, jobs) -> int:
    recs = pl.load_inputs(args.inp, cfg)
    results = pl.segment_corpus(recs, cfg, jobs)
    failures = pl.write_segmentation(args.out, recs, results)
    for f in failures:
        print(f"warning: segmentation failed: {f}", file=sys.stderr)
    if len(failures) == len(recs):
        raise DataError("segmentation failed for every recording")
    print(f"segmented {len(recs) - len(failures)}/{len(recs)} recordings into {args.out}")
    return EXIT_OK


def cmd_features(args, cfg, jobs) -> int:
    recs = pl.load_inputs(args.inp, cfg)
    segs = pl.load_segmentation(args.seg)
    table = pl.feature_table(recs, segs, Layout(args.layout), cfg)
    table.to_csv(args.out)
    print(f"wrote {len(table)} cycles ({args.layout}) to {args.out}")
    return EXIT_OK


def _read_table(path) -> FeatureTable:
    if not Path(path).exists():
        raise DataError(f"features file not found: {path}")
    return FeatureTable.from_csv(path)


def cmd_train(args, cfg, jobs) -> int:
    table = _read_table(args.features)
    if args.layout:
        table = table.with_layout(args.layout)
    kind = normalize_kind(args.classifier)
    rows, y, classes = level_labels(table.labels, args.level)
    present = sorted(set(y))
    missing = [c for c in classes if c not in present]
    if missing:
        raise SingleClassTrainSet(
            f"{args.features}: level {args.level} needs classes {', '.join(classes)}; "
            f"no cycles labeled {', '.join(missing)}"
            + (f" (only {', '.join(present)})" if present else ""))
    labels = [None] * len(table)
    for r, v in zip(rows, y):
        labels[r] = v
    X_val = y_val = None
    train_rows = rows
    if kind == "MLP":
        ev = cfg.evaluation
        f_val = ev.mlp_val_frac / (ev.train_frac + ev.mlp_val_frac)
        sp = stratified_split(labels, (1.0 - f_val, f_val, 0.0), args.seed, rows)
        train_rows = sp.train
        X_val, y_val = table.X[sp.validation], [labels[i] for i in sp.validation]
    model = train_model(kind, table.X[train_rows], [labels[i] for i in train_rows], classes,
                        cfg.classifiers, X_val, y_val, seed=args.seed)
    model.info.update({"layout": table.layout.value, "level": args.level, "seed": args.seed,
                       "n_train": int(len(train_rows))})
    model.save(args.out)
    print(f"trained {kind} on {len(train_rows)} cycles; model written to {args.out}")
    return EXIT_OK


def cmd_predict(args, cfg, jobs) -> int:
    if not Path(args.model).exists():
        raise DataError(f"model file not found: {args.model}")
    model = TrainedModel.load(args.model)
    table = _read_table(args.features)
    layout = model.info.get("layout")
    if layout:
        table = table.with_layout(layout)
    codes, scores = predict_codes(model, table.X)
    with open(args.out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "cycle_index", "true_label", "predicted", "score"])
        for i, (c, s) in enumerate(zip(codes, scores)):
            lab = table.labels[i]
            w.writerow([table.ids[i], int(table.cycle_index[i]),
                        lab.value if lab is not None else "unlabeled",
                        model.class_set[c], repr(float(s))])
    print(f"wrote {len(table)} predictions to {args.out}")
    return EXIT_OK


def cmd_evaluate(args, cfg, jobs) -> int:
    table = _read_table(args.features)
    levels = sorted(set(args.level or [1, 2]))
    if args.classifier:
        kinds = [normalize_kind(args.classifier)]
    else:
        kinds = list(KINDS)
    layouts = [Layout(l) for l in (args.layout or [table.layout.value])]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = pl.report_header(cfg, "evaluate", args.seed,
                              [f"levels: {', '.join(map(str, levels))}"])
    results = pl.evaluate_suite(table, levels, kinds, layouts, args.seed, cfg, jobs)
    pl.write_classification_report(out, table, results, header)
    if args.truth:
        if not args.seg:
            raise DataError("--truth needs --seg (segmentation directory to score)")
        from .synth import read_manifest, read_truth_csv
        segs = pl.load_segmentation(args.seg)
        labels = {}
        if args.manifest:
            labels = {Path(k).stem: (v.value if v is not None else None)
                      for k, v in read_manifest(args.manifest).items()}
        scores = pl.seg_scores(segs, read_truth_csv(args.truth), labels, cfg.evaluation.match_tol_s)
        pl.write_seg_report(out, scores, header)
    (out / "config.json").write_text(json.dumps(to_dict(cfg), indent=1, sort_keys=True) + "\n")
    for r in results:
        print(f"{r.layout.value} L{r.level} {r.kind:<12} accuracy {r.report.accuracy:.2f}")
    return EXIT_OK


def cmd_pipeline(args, cfg, jobs) -> int:
    summary = pl.run_pipeline(args.inp, args.out, args.seed, cfg, jobs, args.resume)
    print(f"{summary['segmented']}/{summary['recordings']} recordings segmented, "
          f"{summary['cycles']} cycles; reports in {args.out}")
    for k, v in summary["accuracy"].items():
        print(f"  {k:<24} {v:.2f}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "segment": cmd_segment,
            "features": cmd_features, "train": cmd_train, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "pipeline": cmd_pipeline}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        jobs = args.jobs if args.jobs is not None else pl.default_jobs()
        if jobs < 1:
            raise DataError("--jobs must be >= 1")
        return COMMANDS[args.command](args, cfg, jobs)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except PCGError as e:
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as e:  # noqa: BLE001 - last-resort mapping to the internal-error code
        log.debug("unhandled", exc_info=True)
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
