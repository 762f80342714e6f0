"""Short-time power spectrogram and its CSV / binary exports."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPEC_MAGIC = b"ABSPEC01"


def hamming(N: int) -> np.ndarray:
    """Symmetric Hamming window ``0.54 - 0.46 cos(2 pi n / (N - 1))``."""
    if N < 2:
        raise ValueError(f"window length must be >= 2, got {N}")
    n = np.arange(N)
    return 0.54 - 0.46 * np.cos(2 * np.pi * n / (N - 1))


@dataclass(frozen=True)
class SpectrogramParams:
    N: int = 256
    M: int = 128
    window_kind: str = "hamming"

    def __post_init__(self):
        if self.N < 2 or self.N % 2:
            raise ValueError(f"window length N must be even and >= 2, got {self.N}")
        if not (0 < self.M <= self.N):
            raise ValueError(f"framing step M must satisfy 0 < M <= N, got {self.M}")
        if self.window_kind != "hamming":
            raise ValueError(f"unsupported window {self.window_kind!r}")

    @property
    def n_bins(self) -> int:
        return self.N // 2 + 1

    def window(self) -> np.ndarray:
        return hamming(self.N)


@dataclass(frozen=True)
class Spectrogram:
    """``values[k, t]``: power at one-sided bin ``k`` of frame ``t``."""

    values: np.ndarray
    params: SpectrogramParams
    sample_rate: int

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def frame_count(length: int, p: SpectrogramParams) -> int:
    return (length - p.N) // p.M + 1


def compute_spectrogram(signal, p: SpectrogramParams = SpectrogramParams()) -> Spectrogram:
    """Squared magnitude of the windowed N-point DFT of every full frame.

    Trailing samples that do not fill a frame are dropped.
    """
    x = np.asarray(signal.samples, dtype=np.float64)
    if x.shape[0] < p.N:
        raise ValueError(f"signal of {x.shape[0]} samples is shorter than the window ({p.N})")
    frames = np.lib.stride_tricks.sliding_window_view(x, p.N)[:: p.M]
    spectra = np.fft.rfft(frames * p.window(), axis=1)
    power = spectra.real**2 + spectra.imag**2
    return Spectrogram(np.ascontiguousarray(power.T), p, signal.sample_rate)


def write_csv(path, values: np.ndarray) -> None:
    """Rows are frequency bins (ascending), columns are frames."""
    np.savetxt(path, values, delimiter=",", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))


def pack_grid(values: np.ndarray) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    K, T = values.shape
    return SPEC_MAGIC + struct.pack("<II", K, T) + values.tobytes()


def unpack_grid(buf: bytes, offset: int = 0):
    """Decode one grid at ``offset``; returns ``(values, next_offset)``."""
    if buf[offset : offset + 8] != SPEC_MAGIC:
        raise ValueError("bad spectrogram magic")
    K, T = struct.unpack_from("<II", buf, offset + 8)
    start = offset + 16
    end = start + 8 * K * T
    if len(buf) < end:
        raise ValueError("truncated spectrogram dump")
    values = np.frombuffer(buf, dtype="<f8", count=K * T, offset=start).reshape(K, T)
    return values.astype(np.float64), end


def write_binary(path, values: np.ndarray) -> None:
    Path(path).write_bytes(pack_grid(values))


def read_binary(path) -> np.ndarray:
    values, _ = unpack_grid(Path(path).read_bytes())
    return values
