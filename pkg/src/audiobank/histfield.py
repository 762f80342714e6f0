"""Per-position intensity histograms over a spectrogram and the Bhattacharyya coefficient."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectrogram import pack_grid, unpack_grid

FIELD_MAGIC = b"ABFLD001"


@dataclass(frozen=True)
class HistFieldParams:
    B: int = 8
    patch_radius: int = 1
    epsilon: float = 1e-12  # log floor, relative to peak power

    def __post_init__(self):
        if self.B < 2:
            raise ValueError(f"bin count B must be >= 2, got {self.B}")
        if self.patch_radius < 0:
            raise ValueError(f"patch_radius must be >= 0, got {self.patch_radius}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class HistogramField:
    """``values[b, k, t]``: weight of intensity bin ``b`` around position ``(k, t)``."""

    values: np.ndarray
    params: HistFieldParams

    @property
    def shape(self):
        return self.values.shape[1:]

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    def crop(self, k0: int, t0: int, kd: int, td: int) -> "HistogramField":
        return HistogramField(np.ascontiguousarray(self.values[:, k0 : k0 + kd, t0 : t0 + td]), self.params)

    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.values)


def quantize(values: np.ndarray, B: int, epsilon: float) -> np.ndarray:
    """Log-power, min-max normalize, then equal-width labels ``0..B-1``.

    Power is taken relative to the utterance peak before the log, so the
    ``epsilon`` floor scales with the signal and a gain change only shifts
    the levels (which min-max removes).
    """
    peak = values.max()
    if not peak > 0:
        return np.zeros(values.shape, dtype=np.intp)
    level = 10.0 * np.log10(values / peak + epsilon)
    lo, hi = level.min(), level.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.intp)
    norm = (level - lo) / (hi - lo)
    return np.minimum((norm * B).astype(np.intp), B - 1)


def _box_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Sum over the (2r+1)x(2r+1) neighbourhood of every cell of the last two axes, truncated at edges."""
    K, T = a.shape[-2:]
    c = np.zeros(a.shape[:-2] + (K + 1, T + 1))
    c[..., 1:, 1:] = a.cumsum(-2).cumsum(-1)
    k_lo = np.clip(np.arange(K) - r, 0, K)
    k_hi = np.clip(np.arange(K) + r + 1, 0, K)
    t_lo = np.clip(np.arange(T) - r, 0, T)
    t_hi = np.clip(np.arange(T) + r + 1, 0, T)
    return (
        c[..., k_hi[:, None], t_hi[None, :]]
        - c[..., k_lo[:, None], t_hi[None, :]]
        - c[..., k_hi[:, None], t_lo[None, :]]
        + c[..., k_lo[:, None], t_lo[None, :]]
    )


def build_field(spec, p: HistFieldParams = HistFieldParams()) -> HistogramField:
    """Histogram of quantized log-power labels in a local patch around every cell."""
    values = np.asarray(spec.values if hasattr(spec, "values") else spec, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty spectrogram")
    labels = quantize(values, p.B, p.epsilon)
    onehot = (labels[None, :, :] == np.arange(p.B)[:, None, None]).astype(np.float64)
    counts = _box_sum(onehot, p.patch_radius)
    area = _box_sum(np.ones(values.shape), p.patch_radius)
    return HistogramField(counts / area, p)


def pad_time(field: HistogramField, min_frames: int) -> HistogramField:
    """Append one-hot bin-0 frames until the field spans ``min_frames``."""
    B, K, T = field.values.shape
    if T >= min_frames:
        return field
    pad = np.zeros((B, K, min_frames - T))
    pad[0] = 1.0
    return HistogramField(np.concatenate([field.values, pad], axis=2), field.params)


def bhattacharyya(h1, h2) -> float:
    """``sum_b sqrt(h1[b] * h2[b])`` for two normalized histograms."""
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise ValueError(f"histogram bin counts differ: {h1.shape} vs {h2.shape}")
    for h in (h1, h2):
        if abs(h.sum() - 1.0) > 1e-6 or (h < 0).any():
            raise ValueError("histograms must be non-negative and sum to 1")
    return float(np.sqrt(h1 * h2).sum())


def pack_field(values: np.ndarray) -> bytes:
    """Bin count followed by one spectrogram-format grid per bin plane."""
    values = np.asarray(values, dtype=np.float64)
    return FIELD_MAGIC + struct.pack("<I", values.shape[0]) + b"".join(pack_grid(v) for v in values)


def unpack_field(buf: bytes) -> np.ndarray:
    if buf[:8] != FIELD_MAGIC:
        raise ValueError("bad field magic")
    (B,) = struct.unpack_from("<I", buf, 8)
    offset = 12
    planes = []
    for _ in range(B):
        plane, offset = unpack_grid(buf, offset)
        planes.append(plane)
    return np.stack(planes)


def write_field(path, field: HistogramField) -> None:
    Path(path).write_bytes(pack_field(field.values))


def read_field(path, params: HistFieldParams) -> HistogramField:
    return HistogramField(unpack_field(Path(path).read_bytes()), params)
