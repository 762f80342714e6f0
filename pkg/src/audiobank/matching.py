"""Detector-vs-signal match maps: mean per-position Bhattacharyya coefficient over a placement.

Two routes compute the same map. :func:`match_direct` sums the coefficient
over every placement explicitly; :func:`match_fft` correlates the square-root
bin planes through the convolution theorem. :func:`match_bank` runs the FFT
route against a whole bank, transforming the signal once per time block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .histfield import HistogramField, pad_time

#: Time-block length (frames) of the overlap-save scheme in :func:`match_bank`.
BLOCK_FRAMES = 128


@dataclass(frozen=True)
class MatchMap:
    values: np.ndarray
    detector_id: int
    signal_shape: tuple
    detector_shape: tuple
    padded_frames: int = 0

    @property
    def shape(self):
        return self.values.shape


def next_fast_len(n: int) -> int:
    """Smallest 5-smooth integer >= n."""
    m = max(int(n), 1)
    while True:
        k = m
        for p in (2, 3, 5):
            while k % p == 0:
                k //= p
        if k == 1:
            return m
        m += 1


def _prepare(signal_field: HistogramField, det_shape):
    B, K, T = signal_field.values.shape
    kd, td = det_shape
    if kd > K:
        raise ValueError(f"detector spans {kd} bins but the signal only {K}")
    padded = 0
    if T < td:
        padded = td - T
        signal_field = pad_time(signal_field, td)
    return signal_field, padded


def _finish(raw, kd, td, normalize):
    if normalize:
        return np.clip(raw / (kd * td), 0.0, 1.0)
    return np.maximum(raw, 0.0)


def _detector_sqrt(d) -> np.ndarray:
    return d.sqrt_field


def match_direct(signal_field: HistogramField, d, normalize: bool = True) -> MatchMap:
    """Explicit summation over every valid placement of the detector."""
    root_d = _detector_sqrt(d)
    if root_d.shape[0] != signal_field.n_bins:
        raise ValueError("detector and signal use different bin counts")
    kd, td = root_d.shape[1:]
    sf, padded = _prepare(signal_field, (kd, td))
    raw = kernels.correlate_valid(np.ascontiguousarray(sf.sqrt()), np.ascontiguousarray(root_d))
    return MatchMap(_finish(raw, kd, td, normalize), d.id, sf.shape, (kd, td), padded)


def match_fft(signal_field: HistogramField, d, normalize: bool = True) -> MatchMap:
    """Frequency-domain correlation with the flipped detector, summed over bins."""
    root_d = _detector_sqrt(d)
    if root_d.shape[0] != signal_field.n_bins:
        raise ValueError("detector and signal use different bin counts")
    kd, td = root_d.shape[1:]
    sf, padded = _prepare(signal_field, (kd, td))
    K, T = sf.shape
    shape = (next_fast_len(K), next_fast_len(T))
    spec_s = np.fft.rfft2(sf.sqrt(), s=shape)
    spec_d = np.fft.rfft2(root_d[:, ::-1, ::-1], s=shape)
    full = np.fft.irfft2((spec_s * spec_d).sum(axis=0), s=shape)
    raw = full[kd - 1 : K, td - 1 : T]
    return MatchMap(_finish(raw, kd, td, normalize), d.id, sf.shape, (kd, td), padded)


def detector_spectra(bank, P: int, Q: int) -> np.ndarray:
    """Transforms of every flipped detector at FFT size (P, Q), cached on the bank."""
    cache = bank._spectra
    key = (P, Q)
    if key not in cache:
        roots = np.stack([_detector_sqrt(d) for d in bank.detectors])
        cache[key] = np.fft.rfft2(roots[:, :, ::-1, ::-1], s=(P, Q))
    return cache[key]


def match_bank(signal_field: HistogramField, bank, normalize: bool = True) -> list[MatchMap]:
    """One map per bank detector, in bank order.

    The signal is cut into overlapping time blocks of :data:`BLOCK_FRAMES`
    frames (overlap-save); each block is transformed once and reused by every
    detector, and detector transforms are computed once per bank.
    """
    if not bank.detectors:
        raise ValueError("empty detector bank")
    kd, td = bank.window
    if signal_field.n_bins != bank.detectors[0].sqrt_field.shape[0]:
        raise ValueError("detector and signal use different bin counts")
    sf, padded = _prepare(signal_field, (kd, td))
    K, T = sf.shape
    Q = next_fast_len(max(BLOCK_FRAMES, 2 * td))
    P = next_fast_len(K)
    step = Q - td + 1
    spec_d = detector_spectra(bank, P, Q)
    root = sf.sqrt()
    n_out = T - td + 1
    raw = np.empty((len(bank.detectors), K - kd + 1, n_out))
    for s0 in range(0, n_out, step):
        block = root[:, :, s0 : s0 + Q]
        spec_s = np.fft.rfft2(block, s=(P, Q))
        prod = np.einsum("dbpq,bpq->dpq", spec_d, spec_s)
        full = np.fft.irfft2(prod, s=(P, Q))
        n = min(step, n_out - s0)
        raw[:, :, s0 : s0 + n] = full[:, kd - 1 : K, td - 1 : td - 1 + n]
    out = _finish(raw, kd, td, normalize)
    return [
        MatchMap(out[i], d.id, sf.shape, (kd, td), padded) for i, d in enumerate(bank.detectors)
    ]
