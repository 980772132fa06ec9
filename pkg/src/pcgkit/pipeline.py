"""Stage orchestration shared by the CLI, scripts and acceptance tests."""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from . import __version__
from .classifiers import KINDS
from .config import Config, header_lines, to_dict
from .errors import DataError, InvariantViolation
from .evaluation import (LevelResult, MetricsReport, SegScore, format_confusion,
                         format_level_table, format_seg_table, recompute_ok, run_cascade,
                         run_level, score_segmentation, write_plot_data)
from .features import FeatureTable, Layout, extract_table
from .segmentation import SegmentationResult, segment
from .signal_io import (Recording, bandpass, load_recording, normalize, resample,
                        save_recording)
from .synth import load_corpus, read_manifest, read_truth_csv

log = logging.getLogger(__name__)


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def pmap(fn, items: Sequence, jobs: int = 1) -> list:
    """Ordered map, in a process pool when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# -- inputs -----------------------------------------------------------------

def canonicalize(rec: Recording, cfg: Config) -> Recording:
    s = cfg.signal
    return normalize(bandpass(resample(rec, s.sample_rate), s.band, s.filter_order, s.pad_s))


def _is_sidecar(p: Path) -> bool:
    return p.suffix == ".json" and not p.name.endswith((".seg.json", ".truth.json")) \
        and p.with_suffix(".f32").exists()


def load_inputs(directory, cfg: Config, manifest=None) -> List[Recording]:
    """Canonical recordings from a WAV corpus or from an ingested directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"input directory not found: {directory}")
    if any(p.suffix.lower() == ".wav" for p in directory.iterdir()):
        raw = load_corpus(directory, manifest, canonicalize=False)
        return [canonicalize(r, cfg) for r in raw]
    sidecars = sorted(p for p in directory.iterdir() if _is_sidecar(p))
    if not sidecars:
        raise DataError(f"{directory}: no WAV files or ingested recordings")
    recs = [load_recording(p) for p in sidecars]
    if manifest is not None:
        labels = {Path(k).stem: v for k, v in read_manifest(manifest).items()}
        recs = [Recording(r.samples, r.sample_rate, labels.get(r.id, r.label), r.id) for r in recs]
    return recs


def ingest(src, out, cfg: Config, manifest=None) -> List[Path]:
    recs = load_inputs(src, cfg, manifest)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = [save_recording(r, out) for r in recs]
    truth = Path(src) / "truth.csv"
    if truth.exists():
        (out / "truth.csv").write_text(truth.read_text())
    return paths


def find_truth(directory) -> Optional[Dict[str, list]]:
    p = Path(directory) / "truth.csv"
    return read_truth_csv(p) if p.exists() else None


# -- per-recording stages ---------------------------------------------------

def _segment_only(args):
    rec, cfg = args
    try:
        return rec.id, segment(rec, cfg.segmentation), None
    except DataError as e:
        return rec.id, None, f"{type(e).__name__}: {e}"


def segment_corpus(recs: Sequence[Recording], cfg: Config, jobs: int = 1):
    return pmap(_segment_only, [(r, cfg) for r in recs], jobs)


def write_segmentation(out_dir, recs: Sequence[Recording], results) -> List[str]:
    """``<id>.seg.json`` and ``<id>.plot.csv`` per recording; returns failure lines."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {r.id: r for r in recs}
    failures = []
    for rec_id, seg, err in results:
        if seg is None:
            failures.append(f"{rec_id}: {err}")
            continue
        (out_dir / f"{rec_id}.seg.json").write_text(json.dumps(seg.to_dict(), indent=1) + "\n")
        write_plot_data(out_dir / f"{rec_id}.plot.csv", by_id[rec_id], seg)
    (out_dir / "failures.txt").write_text("".join(f + "\n" for f in failures))
    return failures


def load_segmentation(seg_dir) -> Dict[str, SegmentationResult]:
    seg_dir = Path(seg_dir)
    if not seg_dir.is_dir():
        raise DataError(f"segmentation directory not found: {seg_dir}")
    out = {}
    for p in sorted(seg_dir.glob("*.seg.json")):
        seg = SegmentationResult.from_dict(json.loads(p.read_text()))
        out[seg.source_id] = seg
    return out


def feature_table(recs: Sequence[Recording], segs: Dict[str, SegmentationResult],
                  layout, cfg: Config) -> FeatureTable:
    tables = []
    for r in recs:
        if r.id not in segs:
            log.warning("%s: no segmentation result; skipped", r.id)
            continue
        tables.append(extract_table(r, segs[r.id], layout, cfg.features))
    return FeatureTable.concat(tables, layout)


# -- segmentation scoring ---------------------------------------------------

def seg_scores(segs: Dict[str, SegmentationResult], truth: Dict[str, list],
               labels: Dict[str, Optional[str]], tol_s: float) -> Dict[str, SegScore]:
    """Scores pooled per label group (N, AS, MI, abN and all recordings).

    A recording with truth but no segmentation counts as all-missed.
    """
    groups = {g: SegScore.empty(tol_s) for g in ("N", "AS", "MI", "abN", "All")}
    for rec_id in sorted(truth):
        seg = segs.get(rec_id)
        s = score_segmentation(seg if seg is not None else [], truth[rec_id], tol_s)
        lab = labels.get(rec_id)
        keys = ["All"]
        if lab in ("N", "AS", "MI"):
            keys.append(lab)
        if lab in ("AS", "MI", "abN"):
            keys.append("abN")
        for k in keys:
            groups[k] = groups[k] + s
    return {k: v for k, v in groups.items() if v.n_truth["S1"] or v.n_truth["S2"]}


# -- classification suites ----------------------------------------------------

def _run(args) -> LevelResult:
    level, kind, table, layout, seed, cfg = args
    ev = cfg.evaluation
    return run_level(level, kind, table, layout, seed, cfg.classifiers,
                     train_frac=ev.train_frac, mlp_val_frac=ev.mlp_val_frac)


def evaluate_suite(table: FeatureTable, levels: Iterable[int], kinds: Iterable[str],
                   layouts: Iterable, seed: int, cfg: Config, jobs: int = 1) -> List[LevelResult]:
    tasks = [(lv, k, table, Layout(lay), seed, cfg)
             for lay in layouts for k in kinds for lv in levels]
    results = pmap(_run, tasks, jobs)
    for r in results:
        for rep in (r.report, r.recording_report):
            if not recompute_ok(rep):
                raise InvariantViolation(f"{r.kind} L{r.level}: metrics not recomputable")
    return results


# -- report writing -----------------------------------------------------------

def report_header(cfg: Config, command: str, seed: int, extra: Sequence[str] = ()) -> str:
    lines = [f"pcgkit {__version__}", f"command: {command}", f"seed: {seed}", *extra,
             "settings:"] + ["  " + s for s in header_lines(cfg)]
    return "".join(f"# {s}\n" for s in lines) + "\n"


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def write_predictions(path, table: FeatureTable, result: LevelResult) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "cycle_index", "true_label", "predicted", "score"])
        for r, t, p, s in zip(result.rows, result.y_true, result.y_pred, result.scores):
            w.writerow([table.ids[r], int(table.cycle_index[r]), t, p, repr(float(s))])


def write_classification_report(out, table: FeatureTable, results: Sequence[LevelResult],
                                header: str, cascades: Sequence[MetricsReport] = ()) -> None:
    out = Path(out)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    layouts = sorted({r.layout for r in results}, key=lambda l: l.size)
    kinds = [k for k in KINDS if any(r.kind == k for r in results)]
    for lay in layouts:
        for unit in ("cycle", "recording"):
            parts = [header]
            for kind in kinds:
                rs = sorted((r for r in results if r.kind == kind and r.layout == lay),
                            key=lambda r: r.level)
                reps = [r.report if unit == "cycle" else r.recording_report for r in rs]
                if not reps:
                    continue
                title = (f"{kind} | {lay.value} features | {unit}-level | levels "
                         + ", ".join(str(r.level) for r in rs))
                parts.append(format_level_table(title, reps))
                for r, rep in zip(rs, reps):
                    parts.append(f"confusion, level {r.level}:\n{format_confusion(rep)}")
                parts.append("\n")
            suffix = "" if unit == "cycle" else "_recordings"
            (out / f"tables_{lay.value}{suffix}.txt").write_text("".join(parts))
    for r in results:
        write_predictions(out / "predictions" / f"{r.layout.value}_L{r.level}_{r.kind.lower()}.csv",
                          table, r)
    metrics = {
        "cycle": [r.report.to_dict() for r in results],
        "recording": [r.recording_report.to_dict() for r in results],
        "splits": {f"{r.layout.value}_L{r.level}_{r.kind.lower()}": {
            "n_train": int(r.split.train.size), "n_validation": int(r.split.validation.size),
            "n_test": int(r.split.test.size)} for r in results},
    }
    if cascades:
        metrics["cascade"] = [c.to_dict() for c in cascades]
        text = [header]
        for c in cascades:
            text.append(f"{c.meta['classifier']} | {c.meta['layout']} | cascaded N/AS/MI\n")
            text.append(format_confusion(c))
            text.append(f"accuracy {c.accuracy:.2f}\n\n")
        (out / "cascade.txt").write_text("".join(text))
    _dump(out / "metrics.json", metrics)


def write_seg_report(out, scores: Dict[str, SegScore], header: str) -> None:
    out = Path(out)
    (out / "segmentation.txt").write_text(header + format_seg_table(scores))
    _dump(out / "segmentation.json", {k: v.to_dict() for k, v in scores.items()})


def run_pipeline(in_dir, out_dir, seed: int, cfg: Config, jobs: int = 1,
                 resume: bool = False, layouts=(Layout.TD40, Layout.FULL100)) -> dict:
    """Full run: canonicalize, segment, extract features, score, classify, report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seg_dir = out / "segmentation"
    feat_path = out / "features.csv"
    recs = load_inputs(in_dir, cfg)
    header = report_header(cfg, "pipeline", seed, [f"recordings: {len(recs)}"])
    if resume and feat_path.exists() and seg_dir.is_dir():
        segs = load_segmentation(seg_dir)
        table = FeatureTable.from_csv(feat_path)
    else:
        results = segment_corpus(recs, cfg, jobs)
        failures = write_segmentation(seg_dir, recs, results)
        for f in failures:
            log.warning("segmentation failed: %s", f)
        segs = {rid: s for rid, s, _ in results if s is not None}
        table = feature_table(recs, segs, Layout.FULL100, cfg)
        table.to_csv(feat_path)
    if len(table) == 0:
        raise DataError("no cardiac cycles could be extracted from the input corpus")
    truth = find_truth(in_dir)
    summary = {"recordings": len(recs), "segmented": len(segs), "cycles": len(table)}
    if truth:
        labels = {r.id: (r.label.value if r.label is not None else None) for r in recs}
        scores = seg_scores(segs, truth, labels, cfg.evaluation.match_tol_s)
        write_seg_report(out, scores, header)
        summary["segmentation"] = {k: v.to_dict() for k, v in scores.items()}
    results = evaluate_suite(table, (1, 2), KINDS, layouts, seed, cfg, jobs)
    cascades = []
    if cfg.evaluation.cascaded:
        ev = cfg.evaluation
        cascades = [run_cascade(k, table, lay, seed, cfg.classifiers, ev.train_frac,
                                ev.mlp_val_frac) for lay in layouts for k in KINDS]
    write_classification_report(out, table, results, header, cascades)
    _dump(out / "config.json", to_dict(cfg))
    summary["accuracy"] = {f"{r.layout.value}_L{r.level}_{r.kind.lower()}": r.report.accuracy
                           for r in results}
    _dump(out / "summary.json", summary)
    return summary
