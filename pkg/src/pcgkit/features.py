"""Per-cycle feature vectors.

Time-domain block (40): the five interval statistics on each of the eight
cycle intervals, interval-major. Cepstral block (60): the same statistics on
the trajectory of each of the 12 MFCCs across the frames of the cycle,
coefficient-major. The full vector is the time-domain block followed by the
cepstral block.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import dsp
from .errors import CycleTooShort, LayoutMismatch
from .segmentation import INTERVAL_NAMES, CardiacCycle, SegmentationResult, mel_bank
from .signal_io import ClassLabel, Recording, parse_label

STD_FLOOR = 1e-9


class Layout(str, enum.Enum):
    TD40 = "td40"
    CEP60 = "cep60"
    FULL100 = "full100"

    @property
    def size(self) -> int:
        return {"td40": 40, "cep60": 60, "full100": 100}[self.value]

    @property
    def names(self) -> List[str]:
        td = [f"{iv}_{st}" for iv in INTERVAL_NAMES for st in dsp.STATS5_NAMES]
        cep = [f"mfcc{c}_{st}" for c in range(1, 13) for st in dsp.STATS5_NAMES]
        return {"td40": td, "cep60": cep, "full100": td + cep}[self.value]

    def columns(self, full: np.ndarray) -> np.ndarray:
        """Slice a FULL100 matrix down to this layout."""
        full = np.asarray(full)
        return {"td40": full[..., :40], "cep60": full[..., 40:], "full100": full}[self.value]


@dataclass(frozen=True)
class FeatureConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 256
    n_mel: int = 26
    n_mfcc: int = 12
    f_min: float = 5.0
    f_max: float = 700.0
    min_frames: int = 3


DEFAULT = FeatureConfig()


@dataclass
class FeatureVector:
    values: np.ndarray
    layout: Layout
    cycle_ref: Tuple[str, int] = ("", 0)
    label: Optional[ClassLabel] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.layout = Layout(self.layout)
        if self.values.shape != (self.layout.size,):
            raise LayoutMismatch(f"{self.layout.value} needs {self.layout.size} values, "
                                 f"got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise LayoutMismatch(f"non-finite feature values in cycle {self.cycle_ref}")


@dataclass
class MfccTrack:
    """MFCCs of every frame of a recording, with frame start samples."""
    starts: np.ndarray
    frame_len: int
    coeffs: np.ndarray  # (n_frames, n_mfcc)

    def within(self, start: int, end: int) -> np.ndarray:
        keep = (self.starts >= start) & (self.starts + self.frame_len <= end)
        return self.coeffs[keep]


def mfcc_track(rec: Recording, cfg: FeatureConfig = DEFAULT) -> MfccTrack:
    frame_len = int(round(cfg.frame_ms * rec.sample_rate / 1000.0))
    hop = int(round(cfg.hop_ms * rec.sample_rate / 1000.0))
    grid, frames = dsp.frame_signal(rec.samples, frame_len, hop, rec.sample_rate)
    fb = mel_bank(cfg.n_mel, cfg.n_fft, rec.sample_rate, cfg.f_min, cfg.f_max)
    return MfccTrack(grid.starts, frame_len, dsp.mfcc_frame(frames, fb, cfg.n_mfcc))


def time_domain_features(rec: Recording, cycle: CardiacCycle) -> FeatureVector:
    x = rec.samples
    blocks = [dsp.stats5_array(x[s]) for s in cycle.interval_slices()]
    return FeatureVector(np.concatenate(blocks), Layout.TD40, label=rec.label)


def cepstral_features(rec: Recording, cycle: CardiacCycle, cfg: FeatureConfig = DEFAULT,
                      track: Optional[MfccTrack] = None) -> FeatureVector:
    track = track or mfcc_track(rec, cfg)
    start, end = cycle.span
    coeffs = track.within(start, end)
    if coeffs.shape[0] < cfg.min_frames:
        raise CycleTooShort(f"{rec.id}: cycle at {start / rec.sample_rate:.3f} s spans "
                            f"{coeffs.shape[0]} frame(s)")
    values = dsp.stats5_array(coeffs, axis=0).reshape(-1)
    return FeatureVector(values, Layout.CEP60, label=rec.label)


def full_features(rec: Recording, cycle: CardiacCycle, cfg: FeatureConfig = DEFAULT,
                  track: Optional[MfccTrack] = None) -> FeatureVector:
    td = time_domain_features(rec, cycle)
    cep = cepstral_features(rec, cycle, cfg, track)
    return FeatureVector(np.concatenate([td.values, cep.values]), Layout.FULL100,
                         label=rec.label)


# -- tables -----------------------------------------------------------------

@dataclass
class FeatureTable:
    X: np.ndarray
    ids: List[str]
    cycle_index: np.ndarray
    labels: List[Optional[ClassLabel]]
    layout: Layout = Layout.FULL100

    def __post_init__(self):
        self.layout = Layout(self.layout)
        X = np.asarray(self.X, dtype=np.float64)
        self.X = X.reshape(len(self.ids), -1 if len(self.ids) else self.layout.size)
        self.cycle_index = np.asarray(self.cycle_index, dtype=int)
        self.labels = [parse_label(v) for v in self.labels]
        if self.X.shape[1] != self.layout.size:
            raise LayoutMismatch(f"table has {self.X.shape[1]} columns, layout "
                                 f"{self.layout.value} needs {self.layout.size}")

    def __len__(self):
        return len(self.ids)

    def subset(self, rows) -> "FeatureTable":
        rows = np.asarray(rows, dtype=int)
        return FeatureTable(self.X[rows], [self.ids[i] for i in rows], self.cycle_index[rows],
                            [self.labels[i] for i in rows], self.layout)

    def with_layout(self, layout) -> "FeatureTable":
        layout = Layout(layout)
        if layout == self.layout:
            return self
        if self.layout != Layout.FULL100:
            raise LayoutMismatch(f"cannot derive {layout.value} from {self.layout.value}")
        return FeatureTable(layout.columns(self.X), self.ids, self.cycle_index, self.labels,
                            layout)

    def vectors(self) -> List[FeatureVector]:
        return [FeatureVector(self.X[i], self.layout, (self.ids[i], int(self.cycle_index[i])),
                              self.labels[i]) for i in range(len(self))]

    @classmethod
    def concat(cls, tables: Sequence["FeatureTable"], layout=Layout.FULL100) -> "FeatureTable":
        tables = [t for t in tables if len(t)]
        if not tables:
            return cls(np.zeros((0, Layout(layout).size)), [], [], [], layout)
        return cls(np.vstack([t.X for t in tables]), [i for t in tables for i in t.ids],
                   np.concatenate([t.cycle_index for t in tables]),
                   [v for t in tables for v in t.labels], tables[0].layout)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id", "cycle_index", "label"] + self.layout.names)
            for i in range(len(self)):
                label = self.labels[i].value if self.labels[i] is not None else "unlabeled"
                w.writerow([self.ids[i], int(self.cycle_index[i]), label]
                           + [repr(float(v)) for v in self.X[i]])

    @classmethod
    def from_csv(cls, path) -> "FeatureTable":
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            names = header[3:]
            layout = next((lay for lay in Layout if lay.names == names), None)
            if layout is None:
                raise LayoutMismatch(f"{path}: unrecognised feature columns ({len(names)})")
            rows = list(reader)
        X = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(len(rows), layout.size)
        return cls(X, [r[0] for r in rows], [int(r[1]) for r in rows], [r[2] for r in rows],
                   layout)


def extract_table(rec: Recording, seg: SegmentationResult, layout=Layout.FULL100,
                  cfg: FeatureConfig = DEFAULT) -> FeatureTable:
    """Feature rows for every cycle of one recording; cycles too short for MFCCs are skipped."""
    layout = Layout(layout)
    track = mfcc_track(rec, cfg) if layout != Layout.TD40 else None
    rows, idx = [], []
    for k, cycle in enumerate(seg.cycles):
        try:
            if layout == Layout.TD40:
                v = time_domain_features(rec, cycle)
            elif layout == Layout.CEP60:
                v = cepstral_features(rec, cycle, cfg, track)
            else:
                v = full_features(rec, cycle, cfg, track)
        except CycleTooShort:
            continue
        rows.append(v.values)
        idx.append(k)
    X = np.array(rows).reshape(len(rows), layout.size)
    return FeatureTable(X, [rec.id] * len(rows), idx, [rec.label] * len(rows), layout)


# -- normalisation ----------------------------------------------------------

@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.size

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.dim:
            raise LayoutMismatch(f"normalizer has {self.dim} dims, input has {X.shape[-1]}")
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))


def fit_normalizer(train) -> Normalizer:
    """Per-dimension z-score statistics; ``train`` is an array, a table or FeatureVectors."""
    if isinstance(train, FeatureTable):
        X = train.X
    elif len(train) and isinstance(train[0], FeatureVector):
        layouts = {v.layout for v in train}
        if len(layouts) > 1:
            raise LayoutMismatch(f"mixed layouts in training set: {sorted(l.value for l in layouts)}")
        X = np.vstack([v.values for v in train])
    else:
        X = np.asarray(train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two training vectors")
    return Normalizer(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))


def apply_normalizer(nrm: Normalizer, v):
    if isinstance(v, FeatureVector):
        return FeatureVector(nrm.apply(v.values), v.layout, v.cycle_ref, v.label)
    return nrm.apply(v)
