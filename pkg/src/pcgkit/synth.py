"""Synthetic phonocardiograms with exact ground truth, and corpus I/O.

A synthetic recording is a train of damped two-tone S1/S2 bursts, an
optional systolic murmur (diamond-shaped for AS, flat for MI) made of
band-limited noise, and additive white noise at a given SNR.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import scipy.signal

from .errors import InvalidParams, ManifestMismatch
from .signal_io import (CANONICAL_RATE, ClassLabel, Recording, load_wav, parse_label,
                        preprocess, write_wav)

MURMUR_BANDS = {"AS": (100.0, 400.0), "MI": (100.0, 600.0)}
# burst envelope sin(pi t/d) * exp(-BURST_DAMPING t/d)
BURST_DAMPING = 2.0


@dataclass(frozen=True)
class SynthParams:
    n_cycles: int = 10
    cycle_s: float = 0.8
    systole_s: float = 0.3
    s1_dur_s: float = 0.10
    s2_dur_s: float = 0.08
    s1_freqs: Tuple[float, ...] = (35.0, 70.0)
    s2_freqs: Tuple[float, ...] = (55.0, 90.0)
    s1_amp: float = 1.0
    s2_amp: float = 0.8
    murmur: Optional[str] = None  # None, "AS" or "MI"
    murmur_band: Optional[Tuple[float, float]] = None  # defaults per murmur kind
    murmur_gain: float = 0.04
    murmur_peak: float = 0.5  # AS apex position as a fraction of the murmur span
    snr_db: float = 20.0
    timing_jitter: float = 0.03
    lead_s: float = 0.3
    sample_rate: int = CANONICAL_RATE
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n_cycles < 1:
            problems.append("n_cycles must be >= 1")
        if min(self.cycle_s, self.systole_s, self.s1_dur_s, self.s2_dur_s) <= 0:
            problems.append("durations must be positive")
        if not self.systole_s < self.cycle_s - self.systole_s:
            problems.append("systole must be shorter than diastole")
        if self.s1_dur_s + self.s2_dur_s >= 2 * self.systole_s:
            problems.append("heart sounds overlap within systole")
        if not np.isfinite(self.snr_db):
            problems.append("snr_db must be finite")
        if self.murmur not in (None, "AS", "MI"):
            problems.append(f"unknown murmur {self.murmur!r}")
        if not 0 <= self.timing_jitter < 0.2:
            problems.append("timing_jitter must be in [0, 0.2)")
        if not 0.1 <= self.murmur_peak <= 0.9:
            problems.append("murmur_peak must be in [0.1, 0.9]")
        if self.murmur_gain < 0:
            problems.append("murmur_gain must be >= 0")
        if self.sample_rate < 1400:
            problems.append("sample_rate must be >= 1400 Hz")
        if problems:
            raise InvalidParams("; ".join(problems))

    @property
    def label(self) -> ClassLabel:
        return ClassLabel(self.murmur) if self.murmur else ClassLabel.N


@dataclass(frozen=True)
class TruthEvent:
    kind: str  # "S1" or "S2"
    center_t: float
    onset_t: float
    offset_t: float


@dataclass
class GroundTruth:
    events: List[TruthEvent]
    label: ClassLabel

    def to_dict(self) -> dict:
        return {"label": self.label.value, "events": [asdict(e) for e in self.events]}

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls([TruthEvent(**e) for e in d["events"]], ClassLabel(d["label"]))


def _burst(t, freqs, dur):
    env = np.sin(np.pi * t / dur) * np.exp(-BURST_DAMPING * t / dur)
    tone = sum(np.sin(2 * np.pi * f * t) for f in freqs) / len(freqs)
    return env * tone


def _burst_peak_offset(dur: float) -> float:
    """Time from burst onset to its envelope maximum."""
    return dur * np.arctan(np.pi / BURST_DAMPING) / np.pi


def _taper(n: int, n_edge: int) -> np.ndarray:
    w = np.ones(n)
    n_edge = min(n_edge, n // 2)
    if n_edge > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(n_edge) / n_edge)
        w[:n_edge] = ramp
        w[n - n_edge:] = ramp[::-1]
    return w


def synth_pcg(p: SynthParams) -> Tuple[Recording, GroundTruth]:
    """Generate one recording and its ground truth. Deterministic in ``p.seed``."""
    fs = p.sample_rate
    seeds = np.random.SeedSequence(p.seed).spawn(3)
    rng_time, rng_murmur, rng_noise = (np.random.default_rng(s) for s in seeds)

    jit_cycle = 1.0 + p.timing_jitter * rng_time.uniform(-1, 1, p.n_cycles)
    jit_sys = 1.0 + p.timing_jitter * rng_time.uniform(-1, 1, p.n_cycles)
    cycles = p.cycle_s * jit_cycle
    systoles = p.systole_s * jit_sys

    s1_peak = _burst_peak_offset(p.s1_dur_s)
    s2_peak = _burst_peak_offset(p.s2_dur_s)
    s1_on = p.lead_s + np.concatenate([[0.0], np.cumsum(cycles[:-1])])
    s2_on = s1_on + s1_peak + systoles - s2_peak
    end_t = s1_on[-1] + cycles[-1]
    n = int(np.ceil(end_t * fs))
    t = np.arange(n) / fs

    clean = np.zeros(n)
    events = []
    for k in range(p.n_cycles):
        for kind, onset, dur, freqs, amp, peak in (
                ("S1", s1_on[k], p.s1_dur_s, p.s1_freqs, p.s1_amp, s1_peak),
                ("S2", s2_on[k], p.s2_dur_s, p.s2_freqs, p.s2_amp, s2_peak)):
            i0 = int(np.ceil(onset * fs))
            i1 = min(int(np.floor((onset + dur) * fs)), n - 1)
            local = t[i0:i1 + 1] - onset
            clean[i0:i1 + 1] += amp * _burst(local, freqs, dur)
            events.append(TruthEvent(kind, float(onset + peak), float(onset),
                                     float(onset + dur)))

    if p.murmur is not None and p.murmur_gain > 0:
        band = p.murmur_band or MURMUR_BANDS[p.murmur]
        sos = scipy.signal.butter(4, band, btype="bandpass", fs=fs, output="sos")
        noise = scipy.signal.sosfiltfilt(sos, rng_murmur.standard_normal(n))
        noise /= np.sqrt(np.mean(noise ** 2))
        shape = np.zeros(n)
        for k in range(p.n_cycles):
            i0 = int(np.ceil((s1_on[k] + p.s1_dur_s) * fs))
            i1 = int(np.floor(s2_on[k] * fs))
            m = i1 - i0
            if m < 4:
                continue
            if p.murmur == "AS":
                u = np.arange(m) / (m - 1)
                c = p.murmur_peak
                shape[i0:i1] = np.where(u <= c, u / c, (1.0 - u) / (1.0 - c))
            else:
                shape[i0:i1] = _taper(m, int(0.01 * fs))
        clean += p.murmur_gain * p.s1_amp * shape * noise

    signal_power = np.mean(clean ** 2)
    noise = rng_noise.standard_normal(n)
    noise *= np.sqrt(signal_power / 10 ** (p.snr_db / 10.0) / np.mean(noise ** 2))
    x = clean + noise
    x *= 0.9 / np.max(np.abs(x))

    rec_id = f"synth_{p.label.value}_{p.seed}"
    return Recording(x, fs, label=p.label, id=rec_id), GroundTruth(events, p.label)


# -- corpora ----------------------------------------------------------------

@dataclass(frozen=True)
class CorpusSpec:
    """Per-recording variability drawn on top of ``base``.

    Murmur gain is drawn log-uniformly from the per-class gain range, the
    AS apex position uniformly from ``as_peak_range``, and the
    cycle length uniformly from ``cycle_s_range`` (systole scales with it).
    """
    n_per_class: int = 20
    seed: int = 7
    base: SynthParams = field(default_factory=SynthParams)
    as_gain_range: Tuple[float, float] = (0.03, 0.10)
    mi_gain_range: Tuple[float, float] = (0.03, 0.07)
    cycle_s_range: Tuple[float, float] = (0.75, 0.9)
    as_peak_range: Tuple[float, float] = (0.2, 0.8)
    # inter-recording spread of the heart sounds themselves (multiplicative)
    s2_amp_scale: Tuple[float, float] = (0.4, 1.3)
    dur_scale: Tuple[float, float] = (0.75, 1.25)
    freq_scale: Tuple[float, float] = (1.0, 1.0)
    classes: Tuple[str, ...] = ("N", "AS", "MI")


def corpus_params(spec: CorpusSpec) -> List[SynthParams]:
    out = []
    index = 0
    for cls in spec.classes:
        for _ in range(spec.n_per_class):
            item_seed = spec.seed + index
            rng = np.random.default_rng([item_seed, 1])
            cycle = rng.uniform(*spec.cycle_s_range)
            lo, hi = spec.mi_gain_range if cls == "MI" else spec.as_gain_range
            gain = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
            apex = float(rng.uniform(*spec.as_peak_range))
            s2_amp = float(rng.uniform(*spec.s2_amp_scale))
            dur = float(rng.uniform(*spec.dur_scale))
            fr = float(rng.uniform(*spec.freq_scale))
            b = spec.base
            out.append(replace(
                spec.base,
                murmur=None if cls == "N" else cls,
                cycle_s=float(cycle),
                systole_s=float(spec.base.systole_s * cycle / spec.base.cycle_s),
                murmur_gain=gain if cls != "N" else spec.base.murmur_gain,
                murmur_peak=apex if cls == "AS" else spec.base.murmur_peak,
                s2_amp=b.s2_amp * s2_amp,
                s1_dur_s=b.s1_dur_s * dur,
                s2_dur_s=b.s2_dur_s * dur,
                s1_freqs=tuple(f * fr for f in b.s1_freqs),
                s2_freqs=tuple(f * fr for f in b.s2_freqs),
                seed=item_seed,
            ))
            index += 1
    return out


def synth_corpus(spec: CorpusSpec) -> List[Tuple[Recording, GroundTruth]]:
    return [synth_pcg(p) for p in corpus_params(spec)]


def write_corpus(out_dir, spec: CorpusSpec) -> Path:
    """Write WAVs, per-recording truth JSON, ``manifest.csv`` and ``truth.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_rows, truth_rows = [], []
    for rec, truth in synth_corpus(spec):
        fname = f"{rec.id}.wav"
        write_wav(out_dir / fname, rec)
        (out_dir / f"{rec.id}.truth.json").write_text(json.dumps(truth.to_dict(), indent=1) + "\n")
        manifest_rows.append((fname, rec.label.value))
        truth_rows.extend((fname, e.kind, repr(e.center_t)) for e in truth.events)
    with open(out_dir / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["filename", "label"])
        w.writerows(manifest_rows)
    with open(out_dir / "truth.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["filename", "kind", "time_s"])
        w.writerows(truth_rows)
    return out_dir


def read_manifest(path) -> dict:
    with open(path, newline="") as f:
        return {row["filename"]: parse_label(row.get("label")) for row in csv.DictReader(f)}


def read_truth_csv(path) -> dict:
    """filename stem -> list of (kind, time_s), time-ordered."""
    out = {}
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.setdefault(Path(row["filename"]).stem, []).append(
                (row["kind"], float(row["time_s"])))
    return {k: sorted(v, key=lambda e: e[1]) for k, v in out.items()}


def load_corpus(directory, manifest=None, target_rate: int = CANONICAL_RATE,
                canonicalize: bool = True) -> List[Recording]:
    """Load every WAV in ``directory``, attaching manifest labels.

    ``manifest`` defaults to ``directory/manifest.csv`` when present. WAVs
    missing from the manifest are loaded unlabeled; manifest rows that name
    an absent file raise ``ManifestMismatch``.
    """
    directory = Path(directory)
    if manifest is None and (directory / "manifest.csv").exists():
        manifest = directory / "manifest.csv"
    labels = read_manifest(manifest) if manifest is not None else {}
    wavs = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".wav")
    present = {p.name for p in wavs}
    missing = sorted(name for name in labels if name not in present)
    if missing:
        raise ManifestMismatch(f"manifest rows without files: {', '.join(missing)}")
    recs = []
    for path in wavs:
        rec = load_wav(path, label=labels.get(path.name))
        recs.append(preprocess(rec, target_rate) if canonicalize else rec)
    return recs
