import wave

import numpy as np
import pytest

from audiobank.audio_io import (
    CLASS_COUNTS,
    AudioFormatError,
    EmptyAudioError,
    EventClassSpec,
    Signal,
    antialias_filter,
    decimate,
    default_class_specs,
    load_wav,
    read_manifest,
    save_wav,
    synth_corpus,
    synth_event,
    write_corpus,
)


def _write_pcm(path, frames, channels=1, rate=44100, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(frames, dtype="<i2").tobytes() if width == 2 else bytes(frames))


def test_load_scaling_identity(tmp_path):
    p = tmp_path / "one.wav"
    _write_pcm(p, [16384])
    s = load_wav(p)
    assert s.samples.tolist() == [0.5]
    assert s.sample_rate == 44100


def test_load_stereo_average(tmp_path):
    p = tmp_path / "st.wav"
    _write_pcm(p, [round(0.2 * 32768), round(0.4 * 32768)], channels=2, rate=22050)
    s = load_wav(p)
    assert len(s) == 1
    assert s.samples[0] == pytest.approx(0.3, abs=1e-4)
    assert s.sample_rate == 22050


def test_load_errors_are_distinct(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_wav(tmp_path / "missing.wav")
    p8 = tmp_path / "u8.wav"
    _write_pcm(p8, [128, 130, 140], width=1)
    with pytest.raises(AudioFormatError):
        load_wav(p8)
    junk = tmp_path / "junk.wav"
    junk.write_bytes(b"RIFF\x00\x00\x00\x00WAVEnope")
    with pytest.raises(AudioFormatError):
        load_wav(junk)
    empty = tmp_path / "empty.wav"
    _write_pcm(empty, [])
    with pytest.raises(EmptyAudioError):
        load_wav(empty)


def test_save_load_roundtrip(tmp_path):
    x = np.sin(np.linspace(0, 20, 500)) * 0.9
    save_wav(tmp_path / "r.wav", Signal(x, 8000))
    y = load_wav(tmp_path / "r.wav")
    assert y.sample_rate == 8000
    assert np.max(np.abs(y.samples - x)) <= 0.5 / 32768 + 1e-12


def test_signal_validation():
    with pytest.raises(ValueError):
        Signal(np.array([0.0, np.nan]), 100)
    with pytest.raises(ValueError):
        Signal(np.zeros(3), 0)
    s = Signal([0.1, 0.2], 100)
    assert not s.samples.flags.writeable


def test_decimate_dc_passthrough():
    s = Signal(np.full(4000, 0.5), 44100)
    out = decimate(s, 4)
    assert out.sample_rate == 11025
    assert len(out) == 1000
    assert np.max(np.abs(out.samples - 0.5)) < 1e-3


def test_decimate_stopband_attenuation():
    rate, factor = 44100, 4
    f = 0.9 * rate / factor / 2
    n = np.arange(44100)
    x = np.sin(2 * np.pi * f * n / rate)
    out = decimate(Signal(x, rate), factor).samples[50:-50]
    ratio_db = 20 * np.log10(np.sqrt(np.mean(out**2)) / np.sqrt(np.mean(x**2)))
    # oracle: magnitude response of the taps at that frequency
    h = antialias_filter(factor)
    resp = abs(np.sum(h * np.exp(-2j * np.pi * f / rate * np.arange(h.size))))
    assert 20 * np.log10(resp) <= -30
    assert ratio_db <= -30
    assert ratio_db == pytest.approx(20 * np.log10(resp), abs=1.0)


def test_decimate_factor_one_matches_convolution():
    rate = 1000
    x = np.sin(2 * np.pi * 3 * np.arange(2000) / rate)
    out = decimate(Signal(x, rate), 1).samples
    assert out.shape == x.shape
    h = antialias_filter(1)
    ref = np.convolve(np.pad(x, 31, mode="edge"), h, mode="valid")
    assert np.max(np.abs(out - ref)) < 1e-12
    # zero phase: a slow sinusoid comes out in phase, scaled by the real response
    f = 3 / rate
    gain = np.sum(h * np.cos(2 * np.pi * f * (np.arange(h.size) - 31)))
    assert np.max(np.abs(out[100:-100] - gain * x[100:-100])) < 1e-6


def test_decimate_errors():
    s = Signal(np.zeros(100), 44100)
    with pytest.raises(ValueError):
        decimate(s, 0)
    with pytest.raises(ValueError):
        decimate(Signal(np.zeros(40), 44100), 4)


def test_synth_deterministic_and_bounded():
    for spec in default_class_specs():
        a = synth_event(spec, 99)
        b = synth_event(spec, 99)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert np.max(np.abs(a.samples)) <= 1.0


def test_pure_tone_peak_bin():
    spec = EventClassSpec(0, "t", "tone", 440.0, duration=(1.0, 1.0), noise_ratio=0.0,
                          pitch_jitter=0.0, amp_jitter=0.0)
    s = synth_event(spec, 3)
    spectrum = np.abs(np.fft.rfft(s.samples))
    freqs = np.fft.rfftfreq(len(s), 1 / s.sample_rate)
    assert np.argmax(spectrum) == np.argmin(np.abs(freqs - 440.0))


def test_corpus_labels_and_determinism():
    specs = default_class_specs()[:2]
    c = synth_corpus(specs, [2, 2], 5)
    assert [x.class_id for x in c] == [0, 0, 1, 1]
    d = synth_corpus(specs, [2, 2], 5)
    assert all(x.signal.samples.tobytes() == y.signal.samples.tobytes() for x, y in zip(c, d))
    with pytest.raises(ValueError):
        synth_corpus(specs, [2], 5)


def test_class_counts_total():
    # 50+121+73+76+64+84+65+66+116+60+65+64
    assert len(CLASS_COUNTS) == 12
    assert sum(CLASS_COUNTS) == 904


def test_corpus_write_read(tmp_path):
    clips = synth_corpus(default_class_specs()[:3], [1, 2, 1], 2)
    manifest = write_corpus(clips, tmp_path / "c")
    back = read_manifest(manifest)
    assert [b.clip_id for b in back] == [c.clip_id for c in clips]
    assert [b.class_id for b in back] == [0, 1, 1, 2]
    for b, c in zip(back, clips):
        assert np.max(np.abs(b.signal.samples - c.signal.samples)) <= 1 / 32768
