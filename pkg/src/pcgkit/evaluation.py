"""Splitting, two-level classification runs, metric reports and segmentation scoring.

Classification is per cardiac cycle. Level 1 separates N from abN (AS and
MI pooled); level 2 separates AS from MI using only the cycles whose true
label is abnormal. A recording-level majority vote and an optional cascaded
three-class evaluation are produced on top of the per-cycle results.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .classifiers import ClassifierConfig, normalize_kind, predict_codes, train_model
from .errors import ClassTooSmall, InvalidParams
from .features import FeatureTable, Layout
from .signal_io import ClassLabel

log = logging.getLogger(__name__)

LEVELS = {1: ("N", "abN"), 2: ("AS", "MI")}
MLP_FRACTIONS = (0.70, 0.15, 0.15)
DEFAULT_FRACTIONS = (0.70, 0.0, 0.30)
MIN_CLASS_ITEMS = 3


# -- splits -----------------------------------------------------------------

@dataclass(frozen=True)
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "train": self.train.tolist(),
                "validation": self.validation.tolist(), "test": self.test.tolist()}


def _class_counts(n: int, fractions) -> Tuple[int, int, int]:
    _, f_val, f_test = fractions
    n_val = int(round(f_val * n))
    n_test = int(round(f_test * n))
    if f_val > 0:
        n_val = max(n_val, 1)
    if f_test > 0:
        n_test = max(n_test, 1)
    return n - n_val - n_test, n_val, n_test


def stratified_split(labels: Sequence, fractions=DEFAULT_FRACTIONS, seed: int = 0,
                     rows: Optional[Sequence[int]] = None) -> Split:
    """Per-class seeded shuffle, then cut into train/validation/test.

    ``labels`` has one entry per row; ``rows`` restricts the split to a subset
    (indices are reported in the full-table numbering).
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidParams(f"fractions must be three non-negative shares summing to 1, "
                            f"got {fractions}")
    labels = [getattr(v, "value", v) for v in labels]
    rows = np.arange(len(labels)) if rows is None else np.asarray(rows, dtype=int)
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for cls in sorted({labels[i] for i in rows}):
        idx = np.array([i for i in rows if labels[i] == cls], dtype=int)
        if idx.size < MIN_CLASS_ITEMS:
            raise ClassTooSmall(f"class {cls!r} has {idx.size} cycle(s), need at least "
                                f"{MIN_CLASS_ITEMS} to split")
        idx = idx[rng.permutation(idx.size)]
        n_tr, n_va, _ = _class_counts(idx.size, fractions)
        parts[0].append(idx[:n_tr])
        parts[1].append(idx[n_tr:n_tr + n_va])
        parts[2].append(idx[n_tr + n_va:])
    tr, va, te = (np.sort(np.concatenate(p)) if p else np.zeros(0, int) for p in parts)
    return Split(tr, va, te, seed)


# -- metrics ----------------------------------------------------------------

def _pct(num: int, den: int) -> Optional[float]:
    return None if den == 0 else 100.0 * num / den


@dataclass
class MetricsReport:
    """Confusion counts plus the one-vs-rest percentages derived from them.

    ``confusion[i][j]`` counts items of true class ``classes[i]`` predicted
    as ``classes[j]``. Percentages are ``None`` when their denominator is 0.
    """
    classes: Tuple[str, ...]
    confusion: List[List[int]]
    sensitivity: Dict[str, Optional[float]]
    precision: Dict[str, Optional[float]]
    specificity: Dict[str, Optional[float]]
    accuracy: Optional[float]
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(sum(map(sum, self.confusion)))

    def counts(self, positive: str) -> Dict[str, int]:
        """TP/FN/FP/TN with ``positive`` as the positive class."""
        k = self.classes.index(positive)
        C = np.asarray(self.confusion, dtype=int)
        tp = int(C[k, k])
        fn = int(C[k].sum() - tp)
        fp = int(C[:, k].sum() - tp)
        return {"TP": tp, "FN": fn, "FP": fp, "TN": int(C.sum() - tp - fn - fp)}

    def to_dict(self) -> dict:
        return {"classes": list(self.classes), "confusion": self.confusion,
                "sensitivity": self.sensitivity, "precision": self.precision,
                "specificity": self.specificity, "accuracy": self.accuracy,
                "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(tuple(d["classes"]), d["confusion"], d["sensitivity"], d["precision"],
                   d["specificity"], d["accuracy"], d.get("meta", {}))


def compute_metrics(confusion, classes: Sequence[str], meta: Optional[dict] = None) -> MetricsReport:
    """Build a report from a square confusion matrix (rows true, columns predicted)."""
    C = np.asarray(confusion, dtype=np.int64)
    classes = tuple(getattr(c, "value", c) for c in classes)
    if C.shape != (len(classes), len(classes)):
        raise InvalidParams(f"confusion shape {C.shape} does not match {len(classes)} classes")
    if (C < 0).any():
        raise InvalidParams("confusion counts must be non-negative")
    sens, prec, spec = {}, {}, {}
    total = int(C.sum())
    for k, name in enumerate(classes):
        tp = int(C[k, k])
        fn = int(C[k].sum()) - tp
        fp = int(C[:, k].sum()) - tp
        tn = total - tp - fn - fp
        sens[name] = _pct(tp, tp + fn)
        prec[name] = _pct(tp, tp + fp)
        spec[name] = _pct(tn, tn + fp)
    acc = _pct(int(np.trace(C)), total)
    return MetricsReport(classes, C.tolist(), sens, prec, spec, acc, dict(meta or {}))


def confusion_from_labels(y_true, y_pred, classes) -> List[List[int]]:
    index = {c: i for i, c in enumerate(classes)}
    C = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        C[index[t], index[p]] += 1
    return C.tolist()


def recompute_ok(report: MetricsReport) -> bool:
    """True when every stored percentage equals its recomputation from the counts."""
    again = compute_metrics(report.confusion, report.classes)
    return (again.sensitivity == report.sensitivity and again.precision == report.precision
            and again.specificity == report.specificity and again.accuracy == report.accuracy)


# -- level runs -------------------------------------------------------------

def level_labels(labels: Sequence, level: int) -> Tuple[np.ndarray, List[str], Tuple[str, str]]:
    """Rows taking part in ``level`` and their labels in that level's class set."""
    if level not in LEVELS:
        raise InvalidParams(f"level must be 1 or 2, got {level!r}")
    rows, y = [], []
    for i, lab in enumerate(labels):
        if lab is None:
            continue
        lab = ClassLabel(lab)
        if level == 1:
            rows.append(i)
            y.append(lab.level1().value)
        elif lab in (ClassLabel.AS, ClassLabel.MI):
            rows.append(i)
            y.append(lab.value)
    return np.array(rows, dtype=int), y, LEVELS[level]


@dataclass
class LevelResult:
    level: int
    kind: str
    layout: Layout
    seed: int
    split: Split
    report: MetricsReport
    recording_report: Optional[MetricsReport]
    rows: np.ndarray           # test rows (table indices)
    y_true: List[str]
    y_pred: List[str]
    scores: np.ndarray


def fractions_for(kind: str, train_frac: float = 0.70, mlp_val_frac: float = 0.15):
    if normalize_kind(kind) == "MLP":
        return (train_frac, mlp_val_frac, round(1.0 - train_frac - mlp_val_frac, 12))
    return (train_frac, 0.0, round(1.0 - train_frac, 12))


def majority_vote(ids: Sequence[str], y_true: Sequence[str], y_pred: Sequence[str],
                  classes: Sequence[str]):
    """Per-recording labels; a tied vote goes to the first class of ``classes``."""
    truth, votes = {}, {}
    for rid, t, p in zip(ids, y_true, y_pred):
        truth[rid] = t
        votes.setdefault(rid, []).append(p)
    rec_ids = sorted(votes)
    pred = []
    for rid in rec_ids:
        counts = [votes[rid].count(c) for c in classes]
        pred.append(classes[int(np.argmax(counts))])
    return rec_ids, [truth[r] for r in rec_ids], pred


def run_level(level: int, kind: str, table: FeatureTable, layout=Layout.FULL100,
              seed: int = 0, cfg: ClassifierConfig = ClassifierConfig(),
              split: Optional[Split] = None, train_frac: float = 0.70,
              mlp_val_frac: float = 0.15) -> LevelResult:
    """Train on the split's train rows, evaluate on its test rows."""
    kind = normalize_kind(kind)
    layout = Layout(layout)
    tab = table.with_layout(layout)
    rows, y_level, classes = level_labels(tab.labels, level)
    y_all = [None] * len(tab)
    for r, v in zip(rows, y_level):
        y_all[r] = v
    if split is None:
        split = stratified_split(y_all, fractions_for(kind, train_frac, mlp_val_frac), seed, rows)
    X = tab.X
    y_tr = [y_all[i] for i in split.train]
    val = split.validation
    model = train_model(kind, X[split.train], y_tr, classes, cfg,
                        X[val] if val.size else None, [y_all[i] for i in val] if val.size else None,
                        seed=seed)
    codes, scores = predict_codes(model, X[split.test])
    y_true = [y_all[i] for i in split.test]
    y_pred = [classes[c] for c in codes]
    meta = {"level": level, "classifier": kind, "layout": layout.value, "seed": seed,
            "unit": "cycle", "n_train": int(split.train.size),
            "n_validation": int(split.validation.size), "n_test": int(split.test.size)}
    report = compute_metrics(confusion_from_labels(y_true, y_pred, classes), classes, meta)
    rec_ids, rt, rp = majority_vote([tab.ids[i] for i in split.test], y_true, y_pred, classes)
    rec_report = compute_metrics(confusion_from_labels(rt, rp, classes), classes,
                                 {**meta, "unit": "recording", "n_test": len(rec_ids)})
    return LevelResult(level, kind, layout, seed, split, report, rec_report, split.test,
                       y_true, y_pred, scores)


def run_cascade(kind: str, table: FeatureTable, layout=Layout.FULL100, seed: int = 0,
                cfg: ClassifierConfig = ClassifierConfig(), train_frac: float = 0.70,
                mlp_val_frac: float = 0.15) -> MetricsReport:
    """End-to-end N/AS/MI confusion: level 2 only sees cycles predicted abN at level 1."""
    kind = normalize_kind(kind)
    layout = Layout(layout)
    tab = table.with_layout(layout)
    labels = [None if v is None else ClassLabel(v).value for v in tab.labels]
    labels = [None if v == "abN" else v for v in labels]
    rows = np.array([i for i, v in enumerate(labels) if v is not None], dtype=int)
    split = stratified_split(labels, fractions_for(kind, train_frac, mlp_val_frac), seed, rows)
    X = tab.X

    def fit(level, idx_tr, idx_va):
        classes = LEVELS[level]
        lab = (lambda v: "N" if v == "N" else "abN") if level == 1 else (lambda v: v)
        keep = lambda idx: np.array([i for i in idx if level == 1 or labels[i] != "N"], dtype=int)
        tr, va = keep(idx_tr), keep(idx_va)
        return train_model(kind, X[tr], [lab(labels[i]) for i in tr], classes, cfg,
                           X[va] if va.size else None,
                           [lab(labels[i]) for i in va] if va.size else None, seed=seed)

    m1 = fit(1, split.train, split.validation)
    m2 = fit(2, split.train, split.validation)
    test = split.test
    c1, _ = predict_codes(m1, X[test])
    pred = np.array(["N"] * test.size, dtype=object)
    ab = np.where(c1 == 1)[0]
    if ab.size:
        c2, _ = predict_codes(m2, X[test[ab]])
        pred[ab] = [LEVELS[2][c] for c in c2]
    classes = ("N", "AS", "MI")
    return compute_metrics(confusion_from_labels([labels[i] for i in test], list(pred), classes),
                           classes, {"level": "cascade", "classifier": kind,
                                     "layout": layout.value, "seed": seed, "unit": "cycle",
                                     "n_test": int(test.size)})


# -- report text ------------------------------------------------------------

def _fmt(v: Optional[float]) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def format_level_table(title: str, reports: Sequence[MetricsReport]) -> str:
    """Aligned table in the layout of the per-level result tables.

    Rows Sensitivity/Precision/Specificity with one column per class, grouped
    by level, and a single accuracy per level.
    """
    col = 9
    headers = []
    for r in reports:
        lvl = r.meta.get("level")
        name = {1: "1st level", 2: "2nd level"}.get(lvl, str(lvl))
        headers.append(name.center(col * len(r.classes)))
    lines = [title, " " * 12 + " | ".join(headers)]
    lines.append(" " * 12 + " | ".join("".join(c.rjust(col) for c in r.classes) for r in reports))
    for metric in ("sensitivity", "precision", "specificity"):
        cells = [" ".join(_fmt(getattr(r, metric)[c]).rjust(col - 1) for c in r.classes) + " "
                 for r in reports]
        lines.append(metric.capitalize().ljust(12) + " | ".join(cells))
    acc = [_fmt(r.accuracy).center(col * len(r.classes)) for r in reports]
    lines.append("Accuracy".ljust(12) + " | ".join(acc))
    counts = [f"n={r.total}".center(col * len(r.classes)) for r in reports]
    lines.append("Test items".ljust(12) + " | ".join(counts))
    return "\n".join(lines) + "\n"


def format_confusion(report: MetricsReport) -> str:
    w = max(6, max(len(c) for c in report.classes) + 2)
    lines = ["true \\ pred".ljust(12) + "".join(c.rjust(w) for c in report.classes)]
    for c, row in zip(report.classes, report.confusion):
        lines.append(c.ljust(12) + "".join(str(v).rjust(w) for v in row))
    return "\n".join(lines) + "\n"


# -- segmentation scoring ---------------------------------------------------

@dataclass
class SegScore:
    """Per-kind matched / truth / detected counts at a matching tolerance."""
    tol_s: float
    matched: Dict[str, int]
    n_truth: Dict[str, int]
    n_detected: Dict[str, int]

    def sensitivity(self, kind: str) -> Optional[float]:
        return _pct(self.matched[kind], self.n_truth[kind])

    def precision(self, kind: str) -> Optional[float]:
        return _pct(self.matched[kind], self.n_detected[kind])

    def __add__(self, other: "SegScore") -> "SegScore":
        if other.tol_s != self.tol_s:
            raise InvalidParams("cannot combine scores at different tolerances")
        return SegScore(self.tol_s,
                        {k: self.matched[k] + other.matched[k] for k in self.matched},
                        {k: self.n_truth[k] + other.n_truth[k] for k in self.n_truth},
                        {k: self.n_detected[k] + other.n_detected[k] for k in self.n_detected})

    @classmethod
    def empty(cls, tol_s: float = 0.1) -> "SegScore":
        z = {"S1": 0, "S2": 0}
        return cls(tol_s, dict(z), dict(z), dict(z))

    def to_dict(self) -> dict:
        return {"tol_s": self.tol_s, "matched": self.matched, "n_truth": self.n_truth,
                "n_detected": self.n_detected,
                "sensitivity": {k: self.sensitivity(k) for k in ("S1", "S2")},
                "precision": {k: self.precision(k) for k in ("S1", "S2")}}


def match_events(truth_t: Sequence[float], detected_t: Sequence[float], tol_s: float) -> int:
    """Greedy one-to-one matching, closest pairs first; returns the number of matches."""
    pairs = sorted((abs(t - d), i, j) for i, t in enumerate(truth_t)
                   for j, d in enumerate(detected_t) if abs(t - d) <= tol_s)
    used_t, used_d = set(), set()
    for _, i, j in pairs:
        if i not in used_t and j not in used_d:
            used_t.add(i)
            used_d.add(j)
    return len(used_t)


def score_segmentation(detected, truth, tol_s: float = 0.1) -> SegScore:
    """``detected``: SegmentationResult or (kind, t) pairs; ``truth``: (kind, t) pairs or events."""
    def pairs(items):
        out = []
        for e in getattr(items, "events", items):
            if isinstance(e, tuple):
                out.append(e)
            else:
                t = getattr(e, "peak_t", None)
                out.append((e.kind, t if t is not None else e.center_t))
        return out
    det, tru = pairs(detected), pairs(truth)
    score = SegScore.empty(tol_s)
    for kind in ("S1", "S2"):
        dt = [t for k, t in det if k == kind]
        tt = [t for k, t in tru if k == kind]
        score.matched[kind] = match_events(tt, dt, tol_s)
        score.n_truth[kind] = len(tt)
        score.n_detected[kind] = len(dt)
    return score


def format_seg_table(scores: Dict[str, SegScore]) -> str:
    """Rows per label group, columns S1/S2 sensitivity and precision (percent)."""
    lines = ["Label".ljust(8) + "".join(h.rjust(10) for h in
                                        ("S1 Sens", "S1 Prec", "S2 Sens", "S2 Prec", "Cycles"))]
    for name, s in scores.items():
        cells = [_fmt(s.sensitivity("S1")), _fmt(s.precision("S1")),
                 _fmt(s.sensitivity("S2")), _fmt(s.precision("S2")), str(s.n_truth["S1"])]
        lines.append(name.ljust(8) + "".join(c.rjust(10) for c in cells))
    tol = next(iter(scores.values())).tol_s if scores else 0.1
    lines.append(f"(matching tolerance {tol * 1000:.0f} ms)")
    return "\n".join(lines) + "\n"


# -- plot data --------------------------------------------------------------

def write_plot_data(path, rec, seg) -> None:
    """Per-frame CSV: time, feature value, threshold, signal envelope, event label."""
    from . import dsp
    fs = seg.feature
    if fs is None:
        raise InvalidParams("segmentation result carries no feature signal (not from segment())")
    env = dsp.envelope(rec.samples, rec.sample_rate)
    idx = np.clip(np.round(fs.frame_times * rec.sample_rate).astype(int), 0, env.size - 1)
    marks = [""] * fs.values.size
    for e in seg.events:
        k = int(np.argmin(np.abs(fs.frame_times - e.peak_t)))
        marks[k] = e.kind
    thr = seg.threshold if seg.threshold is not None else np.full(fs.values.size, np.nan)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["time_s", "feature", "threshold", "envelope", "event"])
        for i in range(fs.values.size):
            w.writerow([f"{fs.frame_times[i]:.4f}", f"{fs.values[i]:.6g}", f"{thr[i]:.6g}",
                        f"{env[idx[i]]:.6g}", marks[i]])
