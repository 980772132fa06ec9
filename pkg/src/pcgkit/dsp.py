"""Numeric kernels shared by segmentation and feature extraction.

Everything here is a pure function of its arguments. Functions that act on
frames accept either one frame (1-D) or a stack of frames (2-D, one per row).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np
import scipy.fft
import scipy.ndimage
import scipy.signal

from .errors import BadBand, DegenerateSignal, EmptyInterval, SignalTooShort, TooShort

LOG_FLOOR = 1e-12
KURTOSIS_VARIANCE_FLOOR = 1e-12


# -- framing ----------------------------------------------------------------

@dataclass(frozen=True)
class FrameGrid:
    frame_len: int
    hop: int
    n_frames: int
    sample_rate: float = 1.0
    window: str = "hamming"

    @property
    def starts(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.hop

    @property
    def frame_times(self) -> np.ndarray:
        """Frame centres in seconds."""
        return (self.starts + self.frame_len / 2.0) / self.sample_rate


def frame_signal(samples, frame_len: int, hop: int, sample_rate: float = 1.0):
    """Cut ``samples`` into Hamming-windowed frames.

    Frame k covers ``samples[k*hop : k*hop + frame_len]``. Returns the grid and
    an ``(n_frames, frame_len)`` array.
    """
    x = np.asarray(samples, dtype=np.float64)
    if hop < 1 or hop > frame_len:
        raise ValueError("need 1 <= hop <= frame_len")
    if x.size < frame_len:
        raise SignalTooShort(f"{x.size} samples < frame length {frame_len}")
    n_frames = (x.size - frame_len) // hop + 1
    idx = np.arange(n_frames)[:, None] * hop + np.arange(frame_len)[None, :]
    frames = x[idx] * scipy.signal.get_window("hamming", frame_len, fftbins=False)
    return FrameGrid(frame_len, hop, n_frames, sample_rate), frames


def power_spectrum(frames, n_fft: int) -> np.ndarray:
    """One-sided |DFT|^2 of the zero-padded frame(s); length n_fft//2 + 1."""
    frames = np.asarray(frames, dtype=np.float64)
    if n_fft < frames.shape[-1] or n_fft & (n_fft - 1):
        raise ValueError("n_fft must be a power of two >= frame length")
    spec = np.fft.rfft(frames, n=n_fft, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


# -- mel filter bank --------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelFilterBank:
    n_filters: int
    n_fft: int
    sample_rate: float
    f_min: float
    f_max: float
    weights: np.ndarray  # (n_filters, n_fft//2 + 1)
    corners_hz: np.ndarray  # (n_filters + 2,) left shoulder, centres..., right shoulder

    @property
    def centers_hz(self) -> np.ndarray:
        return self.corners_hz[1:-1]

    @property
    def bin_freqs(self) -> np.ndarray:
        return np.arange(self.n_fft // 2 + 1) * self.sample_rate / self.n_fft


def _triangle_cdf(x, left, center, right):
    """Antiderivative of the unit-height triangle (left, center, right)."""
    x = np.clip(x, left, right)
    rise = np.where(x <= center, (x - left) ** 2 / (2.0 * (center - left)), (center - left) / 2.0)
    fall = np.where(x > center,
                    (right - center) / 2.0 - (right - x) ** 2 / (2.0 * (right - center)), 0.0)
    return rise + fall


def build_mel_filterbank(n_filters: int, n_fft: int, sample_rate: float,
                         f_min: float, f_max: float) -> MelFilterBank:
    """Triangular filters equally spaced on the mel scale.

    Each weight is the mean of the triangle over the frequency span of its
    FFT bin, and every row is then scaled to a peak of 1. Integrating over
    bins keeps filters that are narrower than one bin from vanishing.
    """
    if n_filters < 2:
        raise ValueError("need at least two filters")
    if not (0 <= f_min < f_max) or f_max > sample_rate / 2:
        raise BadBand(f"invalid band ({f_min}, {f_max}) for rate {sample_rate}")
    corners = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_filters + 2))
    df = sample_rate / n_fft
    freqs = np.arange(n_fft // 2 + 1) * df
    lo, hi = freqs - df / 2.0, freqs + df / 2.0
    weights = np.zeros((n_filters, freqs.size))
    for i in range(n_filters):
        left, center, right = corners[i:i + 3]
        w = _triangle_cdf(hi, left, center, right) - _triangle_cdf(lo, left, center, right)
        weights[i] = w / w.max()
    return MelFilterBank(n_filters, n_fft, float(sample_rate), float(f_min), float(f_max),
                         weights, corners)


def mel_log_energies(spectrum, fb: MelFilterBank) -> np.ndarray:
    spectrum = np.asarray(spectrum, dtype=np.float64)
    if spectrum.shape[-1] != fb.weights.shape[1]:
        raise ValueError("spectrum length does not match the filter bank")
    return np.log(np.maximum(spectrum @ fb.weights.T, LOG_FLOOR))


def mfcc_frame(frames, fb: MelFilterBank, n_coeffs: int = 12) -> np.ndarray:
    """Cepstral coefficients 1..n_coeffs (c0 dropped) of windowed frame(s)."""
    logmel = mel_log_energies(power_spectrum(frames, fb.n_fft), fb)
    cep = scipy.fft.dct(logmel, type=2, norm="ortho", axis=-1)
    return cep[..., 1:n_coeffs + 1]


# -- Daubechies-8 wavelet, periodic extension -------------------------------

# reconstruction low-pass filter; analysis uses the same taps as a correlation
DB8_REC_LO = np.array([
    0.05441584224310401, 0.31287159091429995, 0.6756307362972898, 0.5853546836542067,
    -0.015829105256349306, -0.2840155429615469, 0.0004724845739132828, 0.12874742662047847,
    -0.017369301001807547, -0.044088253930794755, 0.013981027917398282, 0.008746094047405777,
    -0.004870352993451574, -0.00039174037337694705, 0.0006754494064505693,
    -0.00011747678412476953,
])
DB8_REC_HI = ((-1.0) ** np.arange(16)) * DB8_REC_LO[::-1]
# phase offset so coefficients line up with the common "periodization" convention
_DB8_SHIFT = -(DB8_REC_LO.size // 2 - 1)


@dataclass
class WaveletCoeffs:
    approx: np.ndarray
    details: List[np.ndarray]  # details[0] is level 1 (finest)

    @property
    def levels(self) -> int:
        return len(self.details)

    def detail(self, level: int) -> np.ndarray:
        return self.details[level - 1]


def _periodic_index(n: int) -> np.ndarray:
    k = np.arange(n // 2)[:, None]
    taps = np.arange(DB8_REC_LO.size)[None, :]
    return (2 * k + taps + _DB8_SHIFT) % n


def dwt_db8(x, levels: int) -> WaveletCoeffs:
    """Multilevel orthogonal db8 analysis along the last axis."""
    a = np.asarray(x, dtype=np.float64)
    n = a.shape[-1]
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if n < 2 ** levels:
        raise TooShort(f"length {n} < 2**{levels}")
    if n % 2 ** levels:
        raise ValueError(f"length {n} is not divisible by 2**{levels}")
    details = []
    for _ in range(levels):
        seg = a[..., _periodic_index(a.shape[-1])]
        details.append(seg @ DB8_REC_HI)
        a = seg @ DB8_REC_LO
    return WaveletCoeffs(a, details)


def idwt_db8(c: WaveletCoeffs) -> np.ndarray:
    a = c.approx
    for d in reversed(c.details):
        half = a.shape[-1]
        n = 2 * half
        idx = _periodic_index(n)
        out = np.zeros(a.shape[:-1] + (n,))
        for t in range(DB8_REC_LO.size):
            out[..., idx[:, t]] += a * DB8_REC_LO[t] + d * DB8_REC_HI[t]
        a = out
    return a


# -- envelopes, correlation, statistics -------------------------------------

def moving_average(x, width: int) -> np.ndarray:
    width = max(int(width), 1)
    return scipy.ndimage.uniform_filter1d(np.asarray(x, dtype=np.float64), width, mode="reflect")


def envelope(samples, sample_rate: float, smooth_ms: float = 50.0) -> np.ndarray:
    """Analytic-signal magnitude smoothed by a centred moving average."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty signal")
    mag = np.abs(scipy.signal.hilbert(x))
    width = int(round(smooth_ms * sample_rate / 1000.0))
    if width % 2 == 0:
        width += 1
    return np.maximum(moving_average(mag, width), 0.0)


def autocorr(x, max_lag: int) -> np.ndarray:
    """Biased autocorrelation normalised so r[0] = 1."""
    x = np.asarray(x, dtype=np.float64)
    if max_lag >= x.size:
        raise ValueError("max_lag must be shorter than the signal")
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0:
        raise DegenerateSignal("autocorrelation of an all-zero signal")
    x = x / peak  # scale-free result; keeps tiny inputs from underflowing
    energy = np.dot(x, x)
    n_fft = scipy.fft.next_fast_len(2 * x.size - 1)
    spec = np.fft.rfft(x, n_fft)
    acf = np.fft.irfft(spec.real ** 2 + spec.imag ** 2, n_fft)[:max_lag + 1]
    return acf / energy


STATS5_NAMES = ("rms", "variance", "energy", "kurtosis", "dynamic")


@dataclass(frozen=True)
class Stats5:
    rms: float
    variance: float
    energy: float
    kurtosis: float
    dynamic_interval: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rms, self.variance, self.energy, self.kurtosis,
                         self.dynamic_interval])


def stats5_array(x, axis: int = -1) -> np.ndarray:
    """The five interval statistics along ``axis``; result has a trailing axis of 5.

    Kurtosis is the non-excess population value m4 / m2**2, reported as 0 when
    the variance is below ``KURTOSIS_VARIANCE_FLOOR``.
    """
    x = np.moveaxis(np.asarray(x, dtype=np.float64), axis, -1)
    if x.shape[-1] == 0:
        raise EmptyInterval("statistics of an empty interval")
    energy = np.sum(x * x, axis=-1)
    rms = np.sqrt(energy / x.shape[-1])
    dev = x - x.mean(axis=-1, keepdims=True)
    m2 = np.mean(dev ** 2, axis=-1)
    m4 = np.mean(dev ** 4, axis=-1)
    degenerate = m2 < KURTOSIS_VARIANCE_FLOOR
    kurt = np.where(degenerate, 0.0, m4 / np.where(degenerate, 1.0, m2) ** 2)
    dyn = x.max(axis=-1) - x.min(axis=-1)
    return np.stack([rms, m2, energy, kurt, dyn], axis=-1)


def stats5(x) -> Stats5:
    return Stats5(*(float(v) for v in stats5_array(np.ravel(x))))
