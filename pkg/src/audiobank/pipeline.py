"""Front-end configuration shared by bank construction and featurization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

from .audio_io import Signal, decimate
from .histfield import HistFieldParams, HistogramField, build_field
from .spectrogram import SpectrogramParams, compute_spectrogram


class FingerprintMismatch(ValueError):
    """A bank was built under a different front-end configuration."""


@dataclass(frozen=True)
class FeatureConfig:
    """Everything that determines a signal's histogram field."""

    decimation: int = 4
    spectrogram: SpectrogramParams = field(default_factory=SpectrogramParams)
    histfield: HistFieldParams = field(default_factory=HistFieldParams)

    def __post_init__(self):
        if self.decimation < 1:
            raise ValueError(f"decimation factor must be >= 1, got {self.decimation}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(
            decimation=int(d["decimation"]),
            spectrogram=SpectrogramParams(**d["spectrogram"]),
            histfield=HistFieldParams(**d["histfield"]),
        )

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def signal_field(signal: Signal, cfg: FeatureConfig = FeatureConfig()) -> HistogramField:
    """decimate -> spectrogram -> histogram field."""
    x = decimate(signal, cfg.decimation) if cfg.decimation > 1 else signal
    return build_field(compute_spectrogram(x, cfg.spectrogram), cfg.histfield)
