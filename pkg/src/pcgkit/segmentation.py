"""Heart-sound identification and cardiac-cycle segmentation.

The detector works on a per-frame "cd5 energy" signal: the log mel-band
energies of every short-time frame are decomposed along the band axis with a
5-level db8 wavelet transform, and the energy of the level-5 detail band is
the frame value. Cycle and systole durations come from its autocorrelation,
peaks from a sliding-window adaptive threshold, labels from a comb that
tracks the expected S1/S2 spacing, and boundaries from envelope crossings.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import dsp
from .errors import DegenerateSignal, NoPeriodicity, SignalTooShort, TooFewPeaks
from .signal_io import Recording

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentationConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    n_fft: int = 256
    n_mel: int = 128
    f_min: float = 5.0
    f_max: float = 700.0
    dwt_levels: int = 5
    smooth_frames: int = 3
    min_duration_s: float = 3.0
    cycle_range_s: tuple = (0.4, 2.0)
    systole_min_s: float = 0.15
    min_periodicity: float = 0.1
    window_cycles: float = 1.5
    window_hop_cycles: float = 0.5
    threshold_max_weight: float = 0.3
    threshold_mean_weight: float = 0.7
    refractory_cycles: float = 0.2
    match_cycles: float = 0.2
    insert_search_cycles: float = 0.15
    insert_min_value: float = 0.1
    envelope_ms: float = 50.0
    max_half_width_s: float = 0.125
    min_event_s: float = 0.02
    peak_snap_s: float = 0.05
    s2_envelope_fallback: bool = True


DEFAULT = SegmentationConfig()


@dataclass
class FeatureSignal:
    values: np.ndarray
    frame_times: np.ndarray
    source_id: str = ""

    @property
    def frame_rate(self) -> float:
        return 1.0 / (self.frame_times[1] - self.frame_times[0])

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class CycleEstimate:
    cycle_s: float
    systole_s: float
    clamped: bool = False

    @property
    def diastole_s(self) -> float:
        return self.cycle_s - self.systole_s


@dataclass(frozen=True)
class LabeledPeak:
    kind: str
    frame: int
    t: float
    value: float


@dataclass(frozen=True)
class HeartSoundEvent:
    kind: str
    peak_t: float
    onset_t: float
    offset_t: float


INTERVAL_NAMES = ("S1", "sys1", "sys2", "sys3", "S2", "dia1", "dia2", "dia3")


@dataclass(frozen=True)
class CardiacCycle:
    """One S1-to-next-S1 span.

    ``bounds`` holds the nine sample indices delimiting the eight intervals
    [S1, sys1, sys2, sys3, S2, dia1, dia2, dia3]; interval j is
    ``[bounds[j], bounds[j+1])``.
    """
    s1: HeartSoundEvent
    s2: HeartSoundEvent
    bounds: tuple
    sample_rate: int

    @property
    def intervals8(self):
        b = np.asarray(self.bounds) / self.sample_rate
        return [(float(b[j]), float(b[j + 1])) for j in range(8)]

    @property
    def systole(self):
        return (self.bounds[1] / self.sample_rate, self.bounds[4] / self.sample_rate)

    @property
    def diastole(self):
        return (self.bounds[5] / self.sample_rate, self.bounds[8] / self.sample_rate)

    @property
    def span(self):
        return (self.bounds[0], self.bounds[8])

    def interval_slices(self):
        return [slice(self.bounds[j], self.bounds[j + 1]) for j in range(8)]


@dataclass
class SegmentationResult:
    events: List[HeartSoundEvent]
    cycles: List[CardiacCycle]
    estimate: CycleEstimate
    source_id: str = ""
    sample_rate: int = 0
    # diagnostics for plotting, not serialized
    feature: Optional[FeatureSignal] = field(default=None, repr=False)
    threshold: Optional[np.ndarray] = field(default=None, repr=False)
    peaks: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "id": self.source_id,
            "sample_rate": self.sample_rate,
            "estimate": {"cycle_s": self.estimate.cycle_s, "systole_s": self.estimate.systole_s,
                         "clamped": self.estimate.clamped},
            "events": [{"kind": e.kind, "peak_t": e.peak_t, "onset_t": e.onset_t,
                        "offset_t": e.offset_t} for e in self.events],
            "cycles": [{"bounds": [int(b) for b in c.bounds], "intervals8": c.intervals8,
                        "s1_index": self.events.index(c.s1)} for c in self.cycles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationResult":
        events = [HeartSoundEvent(**e) for e in d["events"]]
        cycles = [CardiacCycle(events[c["s1_index"]], events[c["s1_index"] + 1],
                               tuple(c["bounds"]), d["sample_rate"]) for c in d["cycles"]]
        est = CycleEstimate(**d["estimate"])
        return cls(events, cycles, est, d["id"], d["sample_rate"])


# -- feature signal ---------------------------------------------------------

def _frame_params(sample_rate, cfg):
    frame_len = int(round(cfg.frame_ms * sample_rate / 1000.0))
    hop = int(round(cfg.hop_ms * sample_rate / 1000.0))
    return frame_len, hop


def feature_signal(rec: Recording, cfg: SegmentationConfig = DEFAULT) -> FeatureSignal:
    if rec.duration < cfg.min_duration_s:
        raise SignalTooShort(f"{rec.id}: {rec.duration:.2f} s < {cfg.min_duration_s} s")
    if not np.any(rec.samples):
        raise DegenerateSignal(f"{rec.id}: silent recording")
    frame_len, hop = _frame_params(rec.sample_rate, cfg)
    grid, frames = dsp.frame_signal(rec.samples, frame_len, hop, rec.sample_rate)
    fb = mel_bank(cfg.n_mel, cfg.n_fft, rec.sample_rate, cfg.f_min, cfg.f_max)
    logmel = dsp.mel_log_energies(dsp.power_spectrum(frames, cfg.n_fft), fb)
    cd = dsp.dwt_db8(logmel, cfg.dwt_levels).detail(cfg.dwt_levels)
    values = dsp.moving_average(np.sum(cd * cd, axis=1), cfg.smooth_frames)
    peak = values.max()
    if not peak > 0:
        raise DegenerateSignal(f"{rec.id}: feature signal is identically zero")
    return FeatureSignal(values / peak, grid.frame_times, rec.id)


_BANKS = {}


def mel_bank(n_filters, n_fft, sample_rate, f_min, f_max) -> dsp.MelFilterBank:
    """Filter banks are immutable; build each configuration once."""
    key = (n_filters, n_fft, float(sample_rate), float(f_min), float(f_max))
    if key not in _BANKS:
        _BANKS[key] = dsp.build_mel_filterbank(*key)
    return _BANKS[key]


# -- cycle estimate ---------------------------------------------------------

def _best_lag(r, lo, hi):
    """Highest interior local maximum of r[lo..hi]; plain argmax if there is none."""
    lo = max(lo, 1)
    hi = min(hi, r.size - 2)
    if hi < lo:
        raise NoPeriodicity("empty lag band")
    k = np.arange(lo, hi + 1)
    local = (r[k] > r[k - 1]) & (r[k] >= r[k + 1])
    cand = k[local] if local.any() else k
    return int(cand[np.argmax(r[cand])])


def estimate_cycle(fs: FeatureSignal, cfg: SegmentationConfig = DEFAULT) -> CycleEstimate:
    rate = fs.frame_rate
    x = fs.values - fs.values.mean()
    if not np.any(x):
        raise NoPeriodicity(f"{fs.source_id}: constant feature signal")
    lo = int(round(cfg.cycle_range_s[0] * rate))
    hi = int(round(cfg.cycle_range_s[1] * rate))
    max_lag = min(hi + 1, x.size - 1)
    r = dsp.autocorr(x, max_lag)
    cycle_lag = _best_lag(r, lo, max_lag - 1)
    if r[cycle_lag] < cfg.min_periodicity:
        raise NoPeriodicity(f"{fs.source_id}: autocorrelation peak {r[cycle_lag]:.3f} "
                            f"< {cfg.min_periodicity}")
    sys_lo = int(round(cfg.systole_min_s * rate))
    sys_hi = int(np.floor(0.5 * cycle_lag))
    systole_lag = _best_lag(r, sys_lo, sys_hi)
    clamped = False
    if 2 * systole_lag >= cycle_lag:
        systole_lag = (cycle_lag - 1) // 2
        clamped = True
    if systole_lag < sys_lo:
        systole_lag = sys_lo
        clamped = True
    return CycleEstimate(cycle_lag / rate, systole_lag / rate, clamped)


# -- peaks ------------------------------------------------------------------

def dynamic_threshold(fs: FeatureSignal, est: CycleEstimate,
                      cfg: SegmentationConfig = DEFAULT) -> np.ndarray:
    """Per-frame threshold: the lowest window threshold among windows covering the frame."""
    v = fs.values
    n = v.size
    rate = fs.frame_rate
    win = max(int(round(cfg.window_cycles * est.cycle_s * rate)), 1)
    hop = max(int(round(cfg.window_hop_cycles * est.cycle_s * rate)), 1)
    if win >= n:
        starts = [0]
    else:
        starts = list(range(0, n - win, hop)) + [n - win]
    thr = np.full(n, np.inf)
    for s in starts:
        w = v[s:s + win]
        theta = cfg.threshold_max_weight * w.max() + cfg.threshold_mean_weight * w.mean()
        np.minimum(thr[s:s + win], theta, out=thr[s:s + win])
    return thr


def detect_peaks(fs: FeatureSignal, est: CycleEstimate,
                 cfg: SegmentationConfig = DEFAULT) -> np.ndarray:
    v = fs.values
    thr = dynamic_threshold(fs, est, cfg)
    i = np.arange(1, v.size - 1)
    is_max = (v[i] > v[i - 1]) & (v[i] >= v[i + 1]) & (v[i] > thr[i])
    cand = i[is_max]
    min_sep = int(round(cfg.refractory_cycles * est.cycle_s * fs.frame_rate))
    order = cand[np.argsort(-v[cand], kind="stable")]
    kept = []
    for c in order:
        if all(abs(c - k) >= min_sep for k in kept):
            kept.append(c)
    return np.array(sorted(kept), dtype=int)


# -- labelling --------------------------------------------------------------

def _other(kind):
    return "S2" if kind == "S1" else "S1"


def _track_comb(times, anchor, anchor_kind, est, tol):
    """Walk outward from the anchor predicting alternating S1/S2 slots.

    Each prediction is measured from the last matched peak, so the comb
    follows slow drift in heart rate. Returns {peak index: kind}.
    """
    assigned = {anchor: anchor_kind}
    t_lo, t_hi = times[0] - tol, times[-1] + tol

    def gap(first_kind):
        return est.systole_s if first_kind == "S1" else est.diastole_s

    for direction in (1, -1):
        cur_t, cur_kind = times[anchor], anchor_kind
        while True:
            nxt_kind = _other(cur_kind)
            step = gap(cur_kind) if direction > 0 else gap(nxt_kind)
            pred = cur_t + direction * step
            if pred < t_lo or pred > t_hi:
                break
            dist = np.abs(times - pred)
            dist[list(assigned)] = np.inf
            j = int(np.argmin(dist))
            if dist[j] <= tol:
                assigned[j] = nxt_kind
                cur_t = times[j]
            else:
                cur_t = pred
            cur_kind = nxt_kind
    return assigned


def label_events(peaks, fs: FeatureSignal, est: CycleEstimate,
                 cfg: SegmentationConfig = DEFAULT) -> List[LabeledPeak]:
    peaks = np.asarray(peaks, dtype=int)
    if peaks.size < 2:
        raise TooFewPeaks(f"{fs.source_id}: {peaks.size} peak(s)")
    times = fs.frame_times[peaks]
    vals = fs.values[peaks]
    anchor = int(np.argmax(vals))
    tol = cfg.match_cycles * est.cycle_s
    hyp_s1 = _track_comb(times, anchor, "S1", est, tol)
    hyp_s2 = _track_comb(times, anchor, "S2", est, tol)
    best = hyp_s1 if len(hyp_s1) >= len(hyp_s2) else hyp_s2
    labeled = [LabeledPeak(best[j], int(peaks[j]), float(times[j]), float(vals[j]))
               for j in sorted(best)]
    return correct_labels(labeled, fs, est, cfg)


def _enforce_alternation(events, fs, est, cfg, allow_insert=True):
    events = list(events)
    min_sep = cfg.refractory_cycles * est.cycle_s
    i = 0
    while i < len(events) - 1:
        a, b = events[i], events[i + 1]
        if a.kind != b.kind:
            i += 1
            continue
        missing = _other(a.kind)
        inserted = None
        if allow_insert and fs is not None:
            slot = a.t + (est.systole_s if a.kind == "S1" else est.diastole_s)
            half = cfg.insert_search_cycles * est.cycle_s
            t = fs.frame_times
            window = ((t >= slot - half) & (t <= slot + half)
                      & (t >= a.t + min_sep) & (t <= b.t - min_sep))
            if window.any():
                idx = np.flatnonzero(window)
                j = int(idx[np.argmax(fs.values[idx])])
                if fs.values[j] > cfg.insert_min_value:
                    inserted = LabeledPeak(missing, j, float(t[j]), float(fs.values[j]))
        if inserted is not None:
            events.insert(i + 1, inserted)
            i += 1
        else:
            events.pop(i if a.value < b.value else i + 1)
            i = max(i - 1, 0)
    return events


def _swap_if_inverted(events):
    sys_gaps = [b.t - a.t for a, b in zip(events, events[1:]) if a.kind == "S1"]
    dia_gaps = [b.t - a.t for a, b in zip(events, events[1:]) if a.kind == "S2"]
    if sys_gaps and dia_gaps and np.mean(sys_gaps) >= np.mean(dia_gaps):
        return [LabeledPeak(_other(e.kind), e.frame, e.t, e.value) for e in events], True
    return events, False


def correct_labels(events: List[LabeledPeak], fs: Optional[FeatureSignal], est: CycleEstimate,
                   cfg: SegmentationConfig = DEFAULT) -> List[LabeledPeak]:
    """Error correction: restore S1/S2 alternation, then fix a global inversion."""
    events = _enforce_alternation(sorted(events, key=lambda e: e.t), fs, est, cfg)
    events, swapped = _swap_if_inverted(events)
    if swapped:
        log.info("%s: labels inverted (systole >= diastole); swapped",
                 fs.source_id if fs is not None else "")
    return events


# -- boundaries -------------------------------------------------------------

def _crossings(env, thr, p, cap_left, cap_right):
    lo = p - cap_left
    j = p
    while j > lo and env[j - 1] > thr:
        j -= 1
    onset = j - 1 if j > lo else lo
    hi = p + cap_right
    j = p
    while j < hi and env[j + 1] > thr:
        j += 1
    offset = j + 1 if j < hi else hi
    return onset, offset


def refine_boundaries(rec: Recording, events: List[LabeledPeak],
                      cfg: SegmentationConfig = DEFAULT,
                      estimate: Optional[CycleEstimate] = None) -> SegmentationResult:
    sr = rec.sample_rate
    x = rec.samples
    n = x.size
    env_s1 = dsp.envelope(x, sr, cfg.envelope_ms)
    env_s2 = dsp.envelope(np.diff(x, prepend=x[0]), sr, cfg.envelope_ms)
    thr = {"S1": env_s1.mean(), "S2": env_s2.mean()}
    env = {"S1": env_s1, "S2": env_s2}

    events = sorted(events, key=lambda e: e.t)
    snap = int(round(cfg.peak_snap_s * sr))
    centers = []
    for e in events:
        p = min(max(int(round(e.t * sr)), 1), n - 2)
        lo, hi = max(p - snap, 1), min(p + snap, n - 2)
        centers.append(lo + int(np.argmax(env_s1[lo:hi + 1])))
    max_half = int(round(cfg.max_half_width_s * sr))
    min_half = max(int(np.ceil(cfg.min_event_s * sr / 2)), 1)

    kept, spans = [], []
    for k, (e, p) in enumerate(zip(events, centers)):
        kind_env, kind_thr = env[e.kind], thr[e.kind]
        if kind_env[p] <= kind_thr and e.kind == "S2" and cfg.s2_envelope_fallback:
            kind_env, kind_thr = env_s1, thr["S1"]
        if kind_env[p] <= kind_thr:
            log.warning("%s: no threshold crossing around %s at %.3f s; dropped",
                        rec.id, e.kind, e.t)
            continue
        left = p if k == 0 else (p - centers[k - 1]) // 2
        right = (n - 1 - p) if k == len(events) - 1 else (centers[k + 1] - p) // 2
        cap_l, cap_r = min(left, max_half), min(right, max_half)
        onset, offset = _crossings(kind_env, kind_thr, p, cap_l, cap_r)
        onset = min(onset, p - min(min_half, cap_l))
        offset = max(offset, p + min(min_half, cap_r))
        if not onset < p < offset:
            continue
        kept.append(e)
        spans.append((onset, p, offset))

    # dropping events can break alternation again; resolve by dropping only
    pairs = list(zip(kept, spans))
    alternating = _enforce_alternation(kept, None, estimate or CycleEstimate(1.0, 0.3), cfg,
                                       allow_insert=False)
    keep_ids = {id(e) for e in alternating}
    pairs = [(e, s) for e, s in pairs if id(e) in keep_ids]

    hs = [HeartSoundEvent(e.kind, p / sr, on / sr, off / sr) for e, (on, p, off) in pairs]
    samples = [s for _, s in pairs]
    cycles = []
    for k in range(len(hs) - 2):
        if not (hs[k].kind == "S1" and hs[k + 1].kind == "S2" and hs[k + 2].kind == "S1"):
            continue
        s1_on, _, s1_off = samples[k]
        s2_on, _, s2_off = samples[k + 1]
        nxt_on = samples[k + 2][0]
        if not (s1_off < s2_on and s2_off < nxt_on):
            continue
        sys = [s1_off + int(round(j * (s2_on - s1_off) / 3)) for j in range(4)]
        dia = [s2_off + int(round(j * (nxt_on - s2_off) / 3)) for j in range(4)]
        bounds = (s1_on, *sys, *dia)
        if np.any(np.diff(bounds) < 1):
            log.warning("%s: cycle at %.3f s has an empty interval; skipped", rec.id, hs[k].peak_t)
            continue
        cycles.append(CardiacCycle(hs[k], hs[k + 1], tuple(int(b) for b in bounds), sr))
    return SegmentationResult(hs, cycles, estimate or CycleEstimate(1.0, 0.3), rec.id, sr)


def segment(rec: Recording, cfg: SegmentationConfig = DEFAULT) -> SegmentationResult:
    """Full identification + segmentation of a canonical (preprocessed) recording."""
    fs = feature_signal(rec, cfg)
    est = estimate_cycle(fs, cfg)
    peaks = detect_peaks(fs, est, cfg)
    labeled = label_events(peaks, fs, est, cfg)
    result = refine_boundaries(rec, labeled, cfg, est)
    result.feature = fs
    result.threshold = dynamic_threshold(fs, est, cfg)
    result.peaks = peaks
    return result
