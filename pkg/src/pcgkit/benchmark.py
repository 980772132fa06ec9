"""Synthetic benchmark: corpus on disk -> segmentation scores and accuracy means.

Shared by ``scripts/run_synthetic_benchmark.py`` and the acceptance tests so
both exercise the same product code path as ``pcgkit pipeline``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from . import pipeline as pl
from .classifiers import KINDS
from .config import Config
from .evaluation import SegScore
from .features import FeatureTable, Layout
from .segmentation import SegmentationResult
from .signal_io import Recording
from .synth import write_corpus

SEEDS = (7, 8, 9, 10, 11)


@dataclass
class Benchmark:
    corpus_dir: Path
    recordings: List[Recording]
    segmentations: Dict[str, SegmentationResult]
    table: FeatureTable
    seg_scores: Dict[str, SegScore]


def build(work_dir, cfg: Config = Config(), jobs: int = 1) -> Benchmark:
    """Write ``cfg.synth`` to ``work_dir/corpus`` and run it through segmentation and features."""
    corpus = write_corpus(Path(work_dir) / "corpus", cfg.synth)
    recs = pl.load_inputs(corpus, cfg)
    segs = {rid: s for rid, s, _ in pl.segment_corpus(recs, cfg, jobs) if s is not None}
    table = pl.feature_table(recs, segs, Layout.FULL100, cfg)
    labels = {r.id: r.label.value if r.label is not None else None for r in recs}
    scores = pl.seg_scores(segs, pl.find_truth(corpus), labels, cfg.evaluation.match_tol_s)
    return Benchmark(corpus, recs, segs, table, scores)


def accuracies(table: FeatureTable, level: int, layout, seeds: Sequence[int] = SEEDS,
               kinds: Iterable[str] = KINDS, cfg: Config = Config(),
               jobs: int = 1) -> Dict[str, List[float]]:
    """Test accuracy per classifier, one entry per seed."""
    kinds = list(kinds)
    out = {k: [] for k in kinds}
    for s in seeds:
        for r in pl.evaluate_suite(table, (level,), kinds, (layout,), s, cfg, jobs):
            out[r.kind].append(r.report.accuracy)
    return out


def mean_accuracies(table: FeatureTable, level: int, layout, seeds: Sequence[int] = SEEDS,
                    kinds: Iterable[str] = KINDS, cfg: Config = Config(),
                    jobs: int = 1) -> Dict[str, float]:
    return {k: float(np.mean(v))
            for k, v in accuracies(table, level, layout, seeds, kinds, cfg, jobs).items()}


def worst_seg_rate(scores: Dict[str, SegScore], groups=("N", "AS", "MI")) -> float:
    """Lowest S1/S2 sensitivity or precision over the label groups, in percent."""
    vals = []
    for g in groups:
        s = scores[g]
        for kind in ("S1", "S2"):
            vals += [s.sensitivity(kind), s.precision(kind)]
    return min(vals)
