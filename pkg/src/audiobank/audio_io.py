"""PCM WAV input/output, anti-aliased decimation and the synthetic event corpus."""

from __future__ import annotations

import json
import wave
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .spectrogram import hamming

#: Taps of the anti-aliasing FIR used by :func:`decimate`.
FIR_TAPS = 63
#: Cutoff of the anti-aliasing FIR as a fraction of the output Nyquist rate.
FIR_CUTOFF = 0.45

SYNTH_RATE = 44100


class AudioFormatError(ValueError):
    """The file is not 16-bit PCM WAV."""


class EmptyAudioError(ValueError):
    """The file holds no audio frames."""


@dataclass(frozen=True)
class Signal:
    """Mono audio: float samples and an integer sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def scaled(self, gain: float) -> "Signal":
        return Signal(self.samples * gain, self.sample_rate)


def load_wav(path) -> Signal:
    """Read a 16-bit PCM WAV file, averaging stereo channels to mono.

    Samples are scaled by 1/32768 so the result lies in [-1, 1).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a PCM WAV file ({exc})") from exc
    if wf.getcomptype() != "NONE" or width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if n_channels not in (1, 2):
        raise AudioFormatError(f"{path}: unsupported channel count {n_channels}")
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if data.size == 0:
        raise EmptyAudioError(f"{path}: zero-length audio")
    if n_channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    return Signal(np.clip(data, -1.0, 1.0), rate)


def save_wav(path, signal: Signal) -> None:
    """Write ``signal`` as mono 16-bit PCM, clipping to the int16 range."""
    pcm = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(signal.sample_rate)
        wf.writeframes(pcm.tobytes())


def antialias_filter(factor: int, taps: int = FIR_TAPS) -> np.ndarray:
    """Hamming-windowed sinc low-pass with unit DC gain for decimation by ``factor``."""
    # cycles per input sample
    cutoff = FIR_CUTOFF * 0.5 / factor
    n = np.arange(taps) - (taps - 1) / 2
    h = 2 * cutoff * np.sinc(2 * cutoff * n) * hamming(taps)
    return h / h.sum()


def decimate(signal: Signal, factor: int) -> Signal:
    """Low-pass filter then keep every ``factor``-th sample.

    The filter is zero-phase aligned (centre tap on the output sample) and the
    input is edge-extended by half the filter length on each side.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"decimation factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    if signal.sample_rate % factor:
        raise ValueError(f"sample rate {signal.sample_rate} is not divisible by {factor}")
    if len(signal) < FIR_TAPS:
        raise ValueError(f"signal of {len(signal)} samples is shorter than the {FIR_TAPS}-tap filter")
    h = antialias_filter(factor)
    half = FIR_TAPS // 2
    padded = np.pad(signal.samples, half, mode="edge")
    # frame j of the strided view is centred on input sample j*factor
    frames = np.lib.stride_tricks.sliding_window_view(padded, FIR_TAPS)[::factor]
    out = frames @ h[::-1]
    return Signal(out, signal.sample_rate // factor)


# --------------------------------------------------------------------------
# synthetic corpus

SYNTH_KINDS = (
    "tone",
    "tone_burst",
    "harmonic_stack",
    "up_chirp",
    "down_chirp",
    "noise_burst",
    "click_train",
    "am_tone",
    "fm_warble",
    "band_noise",
    "decaying_tone",
    "dual_tone",
    "tone_noise",
)


@dataclass(frozen=True)
class EventClassSpec:
    """Parameters of one synthetic event class.

    ``pitch_jitter`` and ``amp_jitter`` are relative half-ranges; the pitch of
    a drawn event is ``base_freq * (1 + u * pitch_jitter)`` with ``u`` uniform
    in [-1, 1].
    """

    class_id: int
    name: str
    kind: str
    base_freq: float
    harmonics: int = 1
    duration: tuple[float, float] = (0.5, 2.0)
    noise_ratio: float = 0.0
    pitch_jitter: float = 0.0
    amp_jitter: float = 0.0
    rate_hz: float = 0.0
    bandwidth: float = 0.0

    def __post_init__(self):
        if self.kind not in SYNTH_KINDS:
            raise ValueError(f"unknown synthesis kind {self.kind!r}")
        lo, hi = self.duration
        if not (0 < lo <= hi):
            raise ValueError(f"invalid duration range {self.duration!r}")
        if self.base_freq <= 0 or self.harmonics < 1:
            raise ValueError("base_freq and harmonics must be positive")
        if not (0.0 <= self.noise_ratio <= 1.0):
            raise ValueError("noise_ratio must lie in [0, 1]")
        if not (0.0 <= self.pitch_jitter < 1.0 and 0.0 <= self.amp_jitter < 1.0):
            raise ValueError("jitter ranges must lie in [0, 1)")
        object.__setattr__(self, "duration", (float(lo), float(hi)))


def _tone(freq, t):
    return np.sin(2 * np.pi * freq * t)


def _band_noise(rng, n, rate, lo, hi):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(freqs < lo) | (freqs > hi)] = 0
    out = np.fft.irfft(spec, n)
    return out / (np.abs(out).max() + 1e-12)


def _gate(t, rate_hz, duty):
    return ((t * rate_hz) % 1.0 < duty).astype(np.float64)


def _render(spec: EventClassSpec, rng, n, rate, f0):
    t = np.arange(n) / rate
    dur = n / rate
    kind = spec.kind
    if kind == "tone":
        x = _tone(f0, t)
    elif kind == "tone_burst":
        x = _tone(f0, t) * _gate(t, spec.rate_hz, 0.4)
    elif kind == "harmonic_stack":
        x = sum(_tone(f0 * h, t) / h for h in range(1, spec.harmonics + 1))
    elif kind in ("up_chirp", "down_chirp"):
        f1 = f0 + spec.bandwidth if kind == "up_chirp" else max(f0 - spec.bandwidth, 50.0)
        # repeated sweeps of period 1/rate_hz
        period = 1.0 / spec.rate_hz if spec.rate_hz > 0 else dur
        tau = t % period
        phase = 2 * np.pi * (f0 * tau + 0.5 * (f1 - f0) / period * tau**2)
        x = np.sin(phase)
    elif kind == "noise_burst":
        env = np.exp(-((t * spec.rate_hz) % 1.0) * 6.0)
        x = rng.standard_normal(n) * env
    elif kind == "click_train":
        x = np.zeros(n)
        step = max(int(rate / spec.rate_hz), 1)
        clicks = np.arange(int(rng.integers(0, step)), n, step)
        width = max(int(0.002 * rate), 1)
        kernel = np.hanning(width + 2)[1:-1] * _tone(f0, np.arange(width) / rate)
        for c in clicks:
            seg = x[c : c + width]
            seg += kernel[: seg.shape[0]]
    elif kind == "am_tone":
        x = _tone(f0, t) * (1.0 + 0.9 * np.sin(2 * np.pi * spec.rate_hz * t)) / 1.9
    elif kind == "fm_warble":
        phase = 2 * np.pi * f0 * t + (spec.bandwidth / spec.rate_hz) * np.sin(2 * np.pi * spec.rate_hz * t)
        x = np.sin(phase)
    elif kind == "band_noise":
        x = _band_noise(rng, n, rate, f0 - spec.bandwidth / 2, f0 + spec.bandwidth / 2)
    elif kind == "decaying_tone":
        period = 1.0 / spec.rate_hz if spec.rate_hz > 0 else dur
        x = _tone(f0, t) * np.exp(-(t % period) / (0.25 * period))
    elif kind == "dual_tone":
        x = 0.5 * (_tone(f0, t) + _tone(f0 * 1.27, t))
    else:  # tone_noise
        x = 0.6 * _tone(f0, t) + 0.4 * rng.standard_normal(n) / 3.0
    return x


def synth_event(spec: EventClassSpec, seed: int) -> Signal:
    """Render one event of class ``spec`` at 44.1 kHz, deterministic in ``seed``."""
    rng = np.random.default_rng([int(seed), spec.class_id])
    lo, hi = spec.duration
    dur = lo if lo == hi else rng.uniform(lo, hi)
    n = max(int(round(dur * SYNTH_RATE)), 1)
    f0 = spec.base_freq * (1.0 + spec.pitch_jitter * rng.uniform(-1, 1))
    x = _render(spec, rng, n, SYNTH_RATE, f0)
    peak = np.abs(x).max()
    if peak > 0:
        x = x / peak
    if spec.noise_ratio > 0:
        # noise at unit RMS before mixing; clean part keeps unit peak
        x = (1 - spec.noise_ratio) * x + spec.noise_ratio * rng.standard_normal(n) / 3.0
    amp = 0.8 * (1.0 - spec.amp_jitter * rng.uniform(0, 1))
    peak = np.abs(x).max()
    if peak > 0:
        x = x * (amp / peak)
    return Signal(x, SYNTH_RATE)


#: Per-class sample counts of the meeting-room corpus with the two door classes merged.
CLASS_COUNTS = (50, 121, 73, 76, 64, 84, 65, 66, 116, 60, 65, 64)


def default_class_specs() -> list[EventClassSpec]:
    """The 12 bundled archetypes, pairwise distinct in spectro-temporal shape."""
    common = dict(noise_ratio=0.02, pitch_jitter=0.04, amp_jitter=0.5, duration=(0.6, 2.0))
    rows = [
        ("tone_burst", "tone_burst", 600.0, dict(rate_hz=5.0)),
        ("harmonic_stack", "harmonic_stack", 220.0, dict(harmonics=6)),
        ("up_chirp", "up_chirp", 300.0, dict(bandwidth=1700.0, rate_hz=2.0)),
        ("down_chirp", "down_chirp", 2000.0, dict(bandwidth=1700.0, rate_hz=1.0)),
        ("noise_burst", "noise_burst", 1000.0, dict(rate_hz=4.0)),
        ("click_train", "click_train", 1500.0, dict(rate_hz=20.0)),
        ("am_tone", "am_tone", 1000.0, dict(rate_hz=8.0)),
        ("fm_warble", "fm_warble", 1300.0, dict(bandwidth=250.0, rate_hz=6.0)),
        ("band_noise", "band_noise", 1100.0, dict(bandwidth=600.0)),
        ("decaying_tone", "decaying_tone", 700.0, dict(rate_hz=1.5)),
        ("dual_tone", "dual_tone", 1500.0, dict()),
        ("tone_noise", "tone_noise", 350.0, dict()),
    ]
    return [
        EventClassSpec(class_id=i, name=name, kind=kind, base_freq=f, **{**common, **extra})
        for i, (name, kind, f, extra) in enumerate(rows)
    ]


@dataclass(frozen=True)
class LabeledClip:
    clip_id: str
    class_id: int
    class_name: str
    seed: int
    signal: Signal = field(repr=False)


def item_seed(master_seed: int, class_id: int, index: int) -> int:
    """Seed of the ``index``-th clip of ``class_id``; stable under count changes."""
    return int(master_seed) + 100_000 * int(class_id) + int(index)


def synth_corpus(specs, per_class_counts, master_seed: int) -> list[LabeledClip]:
    """Render ``per_class_counts[c]`` events of each spec, class-major order."""
    specs = list(specs)
    counts = list(per_class_counts)
    if len(specs) != len(counts):
        raise ValueError(f"{len(specs)} specs but {len(counts)} counts")
    if any(c < 1 for c in counts):
        raise ValueError("per-class counts must be positive")
    ids = [s.class_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError("class ids must be unique")
    clips = []
    for spec, count in zip(specs, counts):
        for i in range(count):
            seed = item_seed(master_seed, spec.class_id, i)
            clips.append(
                LabeledClip(
                    clip_id=f"{spec.class_id:02d}_{spec.name}_{i:04d}",
                    class_id=spec.class_id,
                    class_name=spec.name,
                    seed=seed,
                    signal=synth_event(spec, seed),
                )
            )
    return clips


def write_corpus(clips, out_dir) -> Path:
    """Write clips as WAV files plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    entries = []
    for clip in clips:
        rel = f"audio/{clip.clip_id}.wav"
        save_wav(out_dir / rel, clip.signal)
        entries.append(
            {"path": rel, "class_id": clip.class_id, "class_name": clip.class_name, "seed": clip.seed}
        )
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=1) + "\n")
    return manifest


def read_manifest(path) -> list[LabeledClip]:
    """Load every clip listed in a corpus manifest (paths relative to it)."""
    path = Path(path)
    entries = json.loads(path.read_text())
    if not isinstance(entries, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    clips = []
    for e in entries:
        wav = path.parent / e["path"]
        clips.append(
            LabeledClip(
                clip_id=Path(e["path"]).stem,
                class_id=int(e["class_id"]),
                class_name=str(e["class_name"]),
                seed=int(e.get("seed", 0)),
                signal=load_wav(wav),
            )
        )
    return clips


def specs_to_json(specs) -> list[dict]:
    return [asdict(s) for s in specs]
