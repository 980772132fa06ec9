"""Recording representation, WAV ingestion and the preprocessing chain.

The canonical form of a recording is mono, resampled to ``CANONICAL_RATE``,
band-passed to 5-700 Hz with a zero-phase Butterworth filter, and scaled to
unit absolute maximum.
"""
from __future__ import annotations

import enum
import json
import struct
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .errors import DataError, DegenerateSignal, MalformedWav, RateTooLow, UnsupportedEncoding

CANONICAL_RATE = 2000
PASSBAND = (5.0, 700.0)
MIN_RATE = 2 * int(PASSBAND[1])


class ClassLabel(str, enum.Enum):
    N = "N"
    ABN = "abN"
    AS = "AS"
    MI = "MI"

    @property
    def is_abnormal(self) -> bool:
        return self in (ClassLabel.ABN, ClassLabel.AS, ClassLabel.MI)

    def level1(self) -> "ClassLabel":
        """Map to the first-level label set {N, abN}."""
        return ClassLabel.ABN if self.is_abnormal else ClassLabel.N


def parse_label(value) -> Optional[ClassLabel]:
    if value is None or isinstance(value, ClassLabel):
        return value
    value = str(value).strip()
    if value in ("", "unlabeled", "None"):
        return None
    try:
        return ClassLabel(value)
    except ValueError:
        raise DataError(f"unknown label {value!r}; expected N, abN, AS, MI or unlabeled") from None


@dataclass(frozen=True)
class Recording:
    samples: np.ndarray
    sample_rate: int
    label: Optional[ClassLabel] = None
    id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise DegenerateSignal(f"recording {self.id!r}: samples must be a non-empty 1-D array")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        object.__setattr__(self, "label", parse_label(self.label))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples, sample_rate=None) -> "Recording":
        return replace(self, samples=samples,
                       sample_rate=self.sample_rate if sample_rate is None else sample_rate)


def load_wav(path, label=None) -> Recording:
    """Read a PCM or IEEE-float WAV file as a mono recording in [-1, 1]."""
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.io.wavfile.WavFileWarning)
            rate, data = scipy.io.wavfile.read(path)
    except scipy.io.wavfile.WavFileWarning as exc:
        raise MalformedWav(f"{path}: {exc}") from exc
    except ValueError as exc:
        if "Unknown wave file format" in str(exc) or "Unsupported" in str(exc):
            raise UnsupportedEncoding(f"{path}: {exc}") from exc
        raise MalformedWav(f"{path}: {exc}") from exc
    except (EOFError, OSError, struct.error) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise MalformedWav(f"{path}: {exc}") from exc

    if data.size == 0:
        raise MalformedWav(f"{path}: empty data chunk")
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise UnsupportedEncoding(f"{path}: sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return Recording(x, int(rate), label=label, id=path.stem)


def write_wav(path, rec: Recording) -> None:
    """Write 16-bit PCM. Samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(rec.samples * 32768.0), -32768, 32767).astype(np.int16)
    scipy.io.wavfile.write(Path(path), rec.sample_rate, pcm)


def resample(rec: Recording, target_rate: int = CANONICAL_RATE) -> Recording:
    """Band-limited rational resampling (Kaiser-windowed sinc polyphase filter)."""
    target_rate = int(target_rate)
    if target_rate < MIN_RATE:
        raise RateTooLow(f"target rate {target_rate} Hz < {MIN_RATE} Hz")
    if target_rate == rec.sample_rate:
        return rec
    ratio = Fraction(target_rate, rec.sample_rate)
    y = scipy.signal.resample_poly(rec.samples, ratio.numerator, ratio.denominator)
    return rec.with_samples(y, target_rate)


def _bandpass_sos(sample_rate: int, band=PASSBAND, order: int = 2):
    return scipy.signal.butter(order, band, btype="bandpass", fs=sample_rate, output="sos")


def bandpass(rec: Recording, band=PASSBAND, order: int = 2, pad_s: float = 0.2) -> Recording:
    """Zero-phase band-pass: Butterworth applied forward and backward.

    The signal is reflect-padded by ``pad_s`` seconds (capped by the signal
    length) so start-up transients fall outside the kept samples.
    """
    if rec.sample_rate < MIN_RATE:
        raise RateTooLow(f"sample rate {rec.sample_rate} Hz < {MIN_RATE} Hz")
    sos = _bandpass_sos(rec.sample_rate, band, order)
    n = rec.samples.size
    padlen = min(int(round(pad_s * rec.sample_rate)), n - 1)
    y = scipy.signal.sosfiltfilt(sos, rec.samples, padtype="even" if padlen > 0 else None,
                                 padlen=padlen)
    return rec.with_samples(y)


def normalize(rec: Recording) -> Recording:
    peak = np.max(np.abs(rec.samples))
    if not peak > 0:
        raise DegenerateSignal(f"recording {rec.id!r} is all zeros")
    y = rec.samples / peak
    return rec.with_samples(y)


def preprocess(rec: Recording, target_rate: int = CANONICAL_RATE, band=PASSBAND) -> Recording:
    """resample -> bandpass -> normalize."""
    return normalize(bandpass(resample(rec, target_rate), band))


# -- on-disk cache: JSON sidecar + raw float32 little-endian samples --------

def save_recording(rec: Recording, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = directory / f"{rec.id}.f32"
    rec.samples.astype("<f4").tofile(raw)
    meta = {
        "id": rec.id,
        "sample_rate": rec.sample_rate,
        "label": None if rec.label is None else rec.label.value,
        "n_samples": int(rec.samples.size),
    }
    sidecar = directory / f"{rec.id}.json"
    sidecar.write_text(json.dumps(meta, indent=2) + "\n")
    return sidecar


def load_recording(sidecar) -> Recording:
    sidecar = Path(sidecar)
    meta = json.loads(sidecar.read_text())
    raw = sidecar.with_suffix(".f32")
    samples = np.fromfile(raw, dtype="<f4").astype(np.float64)
    if samples.size != meta["n_samples"]:
        raise MalformedWav(f"{raw}: expected {meta['n_samples']} samples, found {samples.size}")
    return Recording(samples, meta["sample_rate"], label=meta.get("label"), id=meta["id"])
