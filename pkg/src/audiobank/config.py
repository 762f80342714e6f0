"""Flat dotted-key pipeline configuration (JSON file + command-line overrides)."""

from __future__ import annotations

import json
from pathlib import Path

from .evaluation import ExperimentConfig
from .histfield import HistFieldParams
from .nmf import NmfConfig
from .pipeline import FeatureConfig
from .spectrogram import SpectrogramParams


class ConfigError(ValueError):
    """Unknown key or invalid value in a pipeline configuration."""


DEFAULTS = {
    "decimation.factor": 4,
    "spectrogram.N": 256,
    "spectrogram.M": 128,
    "histfield.B": 8,
    "histfield.patch_radius": 1,
    "histfield.epsilon": 1e-12,
    "bank.window": [64, 32],
    "bank.time_stride": 16,
    "bank.n_per_class": 4,
    "bank.size": None,
    "nmf.enabled": False,
    "nmf.rank": 64,
    "nmf.max_iter": 500,
    "nmf.rel_tol": 1e-6,
    "classifier.name": "svm-a",
    "knn.k": 5,
    "svm_a.C": 150.0,
    "svm_a.sigma": 75.0,
    "svm_o.C": 100.0,
    "svm_o.sigma": 60.0,
    "svm.tol": 1e-3,
    "svm.max_passes": 10,
    "experiment.train_fraction": 0.6,
    "experiment.runs": 5,
    "synth.counts": None,
}


class PipelineConfig:
    """Validated mapping of every tunable; unknown keys are rejected."""

    def __init__(self, values: dict | None = None):
        merged = dict(DEFAULTS)
        for key, value in (values or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = value
        self.values = merged
        try:
            self.features()
            self.experiment()
            self.nmf(0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def load(cls, path=None, overrides: dict | None = None) -> "PipelineConfig":
        values = {}
        if path is not None:
            try:
                values = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(values, dict):
                raise ConfigError(f"{path}: config must be a JSON object")
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(values)

    def to_dict(self) -> dict:
        return dict(sorted(self.values.items()))

    def features(self) -> FeatureConfig:
        v = self.values
        return FeatureConfig(
            decimation=int(v["decimation.factor"]),
            spectrogram=SpectrogramParams(N=int(v["spectrogram.N"]), M=int(v["spectrogram.M"])),
            histfield=HistFieldParams(
                B=int(v["histfield.B"]),
                patch_radius=int(v["histfield.patch_radius"]),
                epsilon=float(v["histfield.epsilon"]),
            ),
        )

    def nmf(self, seed: int) -> NmfConfig:
        v = self.values
        return NmfConfig(rank=int(v["nmf.rank"]), max_iter=int(v["nmf.max_iter"]),
                         rel_tol=float(v["nmf.rel_tol"]), seed=int(seed))

    def experiment(self, seed: int = 0, **extra) -> ExperimentConfig:
        v = self.values
        size = v["bank.size"]
        return ExperimentConfig(
            train_fraction=float(v["experiment.train_fraction"]),
            runs=int(v["experiment.runs"]),
            seed=int(seed),
            classifier=str(v["classifier.name"]),
            knn_k=int(v["knn.k"]),
            svm_a_C=float(v["svm_a.C"]),
            svm_a_sigma=float(v["svm_a.sigma"]),
            svm_o_C=float(v["svm_o.C"]),
            svm_o_sigma=float(v["svm_o.sigma"]),
            svm_tol=float(v["svm.tol"]),
            svm_max_passes=int(v["svm.max_passes"]),
            n_per_class=int(v["bank.n_per_class"]),
            bank_size=None if size is None else int(size),
            window=tuple(int(w) for w in v["bank.window"]),
            time_stride=int(v["bank.time_stride"]),
            nmf=bool(v["nmf.enabled"]),
            nmf_rank=int(v["nmf.rank"]),
            nmf_max_iter=int(v["nmf.max_iter"]),
            features=self.features(),
            **extra,
        )
