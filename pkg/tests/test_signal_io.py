import numpy as np
import pytest
import scipy.io.wavfile
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pcgkit.errors import DegenerateSignal, MalformedWav, RateTooLow
from pcgkit.signal_io import (ClassLabel, Recording, bandpass, load_recording, load_wav,
                              normalize, parse_label, preprocess, resample, save_recording)

from conftest import central, sine


def rms(x):
    return float(np.sqrt(np.mean(x ** 2)))


def test_load_16bit_mono(tmp_path):
    p = tmp_path / "a.wav"
    scipy.io.wavfile.write(p, 2000, np.array([16384, -16384], dtype=np.int16))
    rec = load_wav(p)
    assert rec.samples.tolist() == [0.5, -0.5]
    assert rec.sample_rate == 2000
    assert rec.id == "a"


def test_load_stereo_averages(tmp_path):
    p = tmp_path / "s.wav"
    scipy.io.wavfile.write(p, 4000, np.array([[1.0, 0.0]], dtype=np.float32))
    assert load_wav(p).samples.tolist() == [0.5]


@pytest.mark.parametrize("dtype,value,expected", [
    (np.uint8, 192, 0.5), (np.int32, 2 ** 30, 0.5), (np.float32, -0.25, -0.25)])
def test_load_other_encodings(tmp_path, dtype, value, expected):
    p = tmp_path / "e.wav"
    scipy.io.wavfile.write(p, 2000, np.array([value, value], dtype=dtype))
    assert load_wav(p).samples[0] == pytest.approx(expected)


def test_empty_data_chunk(tmp_path):
    p = tmp_path / "z.wav"
    scipy.io.wavfile.write(p, 2000, np.zeros(0, dtype=np.int16))
    with pytest.raises(MalformedWav):
        load_wav(p)


def test_truncated_header(tmp_path):
    p = tmp_path / "t.wav"
    p.write_bytes(b"RIFF\x10\x00\x00\x00WAVEfm")
    with pytest.raises(MalformedWav):
        load_wav(p)


def test_resample_keeps_sine_frequency():
    rec = Recording(sine(100.0, 4000, 2.0), 4000)
    out = resample(rec, 2000)
    spec = np.abs(np.fft.rfft(out.samples))
    peak_hz = np.argmax(spec) * out.sample_rate / out.samples.size
    assert abs(peak_hz - 100.0) <= 1.0
    assert abs(out.duration - rec.duration) <= 1.0 / 2000


def test_resample_identity_is_bit_exact():
    rec = Recording(np.random.default_rng(0).normal(size=500), 2000)
    assert resample(rec, 2000).samples.tobytes() == rec.samples.tobytes()


def test_resample_rate_too_low():
    with pytest.raises(RateTooLow):
        resample(Recording(np.ones(10), 2000), 1000)


def test_bandpass_kills_dc():
    out = bandpass(Recording(np.ones(4000), 2000))
    assert np.max(np.abs(central(out.samples))) < 0.01


def test_bandpass_passes_100hz():
    x = sine(100.0, 2000, 2.0)
    out = bandpass(Recording(x, 2000)).samples
    assert abs(rms(central(out)) / rms(central(x)) - 1) < 0.05


def test_bandpass_geometric_mean_within_1db():
    f0 = np.sqrt(5.0 * 700.0)
    x = sine(f0, 2000, 4.0)
    out = bandpass(Recording(x, 2000)).samples
    assert 20 * np.log10(rms(central(out)) / rms(central(x))) >= -1.0


def test_bandpass_rejects_1500hz():
    x = sine(1500.0, 4000, 2.0)
    out = bandpass(Recording(x, 4000)).samples
    assert 20 * np.log10(rms(central(out)) / rms(central(x))) <= -20.0


def test_bandpass_zero_phase():
    x = sine(100.0, 2000, 2.0)
    y = bandpass(Recording(x, 2000)).samples
    xc, yc = central(x), central(y)
    lags = np.arange(-9, 10)  # under half a period of 100 Hz
    corr = [np.dot(xc[20:-20], np.roll(yc, k)[20:-20]) for k in lags]
    assert lags[int(np.argmax(corr))] == 0


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 16))
def test_bandpass_linear(a, b, seed):
    g = np.random.default_rng(seed)
    x, y = g.normal(size=800), g.normal(size=800)
    lhs = bandpass(Recording(a * x + b * y + 1e-3, 2000)).samples
    rhs = (a * bandpass(Recording(x, 2000)).samples + b * bandpass(Recording(y, 2000)).samples
           + bandpass(Recording(np.full(800, 1e-3), 2000)).samples)
    # rounding error scales with the input terms, not the (DC-stripped) output
    scale = max(abs(a) * np.max(np.abs(x)), abs(b) * np.max(np.abs(y)), 1e-3)
    assert np.max(np.abs(lhs - rhs)) / scale < 1e-9


@pytest.mark.parametrize("x,expected", [([0.5, -0.25], [1.0, -0.5]), ([-2.0, 1.0], [-1.0, 0.5])])
def test_normalize_examples(x, expected):
    assert normalize(Recording(x, 2000)).samples.tolist() == expected


def test_normalize_zero():
    with pytest.raises(DegenerateSignal):
        normalize(Recording([0.0, 0.0, 0.0], 2000))


@given(arrays(np.float64, st.integers(1, 200), elements=st.floats(-1e6, 1e6)).filter(
    lambda a: np.max(np.abs(a)) > 1e-300))
def test_normalize_peak_one_and_idempotent(x):
    once = normalize(Recording(x, 2000))
    assert np.max(np.abs(once.samples)) == 1.0
    assert np.array_equal(normalize(once).samples, once.samples)


def test_labels_aggregate():
    assert ClassLabel.AS.level1() is ClassLabel.ABN
    assert ClassLabel.MI.level1() is ClassLabel.ABN
    assert ClassLabel.N.level1() is ClassLabel.N
    assert parse_label("unlabeled") is None


def test_unknown_label_is_data_error():
    from pcgkit.errors import DataError
    with pytest.raises(DataError):
        parse_label("XX")


def test_sidecar_roundtrip(tmp_path):
    rec = preprocess(Recording(sine(60.0, 4000, 1.0), 4000, "MI", "r1"))
    back = load_recording(save_recording(rec, tmp_path))
    assert back.id == "r1" and back.label is ClassLabel.MI and back.sample_rate == 2000
    assert np.array_equal(back.samples, rec.samples.astype("<f4").astype(np.float64))
