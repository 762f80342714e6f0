"""Alternate max-pooling of match maps into the bank feature vector."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .histfield import HistogramField
from .matching import match_bank
from .pipeline import FeatureConfig, FingerprintMismatch, signal_field

#: Grid splits per pooling level: 1x1, 2x2, 4x4.
POOL_GRIDS = (1, 2, 4)
POOL_SIZE = sum(g * g for g in POOL_GRIDS)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    bank_fingerprint: str

    def __len__(self):
        return self.values.shape[0]


def _edges(extent: int, g: int) -> list[tuple[int, int]]:
    return [((i * extent) // g, ((i + 1) * extent) // g) for i in range(g)]


def alt_max_pool(values) -> np.ndarray:
    """Maxima over 1x1, 2x2 and 4x4 partitions, row-major, coarse to fine (21 values).

    Cell ``i`` of a ``g``-way split of extent ``E`` spans ``[floor(iE/g), floor((i+1)E/g))``;
    empty cells give 0.
    """
    m = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("alt_max_pool needs a non-empty 2-D map")
    out = np.zeros(POOL_SIZE)
    pos = 0
    for g in POOL_GRIDS:
        rows = _edges(m.shape[0], g)
        cols = _edges(m.shape[1], g)
        for r0, r1 in rows:
            for c0, c1 in cols:
                if r1 > r0 and c1 > c0:
                    out[pos] = m[r0:r1, c0:c1].max()
                pos += 1
    return out


def field_features(field: HistogramField, bank, normalize: bool = True) -> np.ndarray:
    """Pooled responses of every bank detector on a precomputed field."""
    maps = match_bank(field, bank, normalize=normalize)
    return np.concatenate([alt_max_pool(m.values) for m in maps])


def check_fingerprint(bank, config: FeatureConfig) -> None:
    if bank.fingerprint != config.fingerprint:
        raise FingerprintMismatch(
            f"bank fingerprint {bank.fingerprint} does not match feature config {config.fingerprint}"
        )


def featurize(signal, bank, config: FeatureConfig | None = None) -> FeatureVector:
    """decimate -> spectrogram -> field -> bank matches -> pooled, concatenated in bank order."""
    config = bank.feature_config if config is None else config
    check_fingerprint(bank, config)
    return FeatureVector(field_features(signal_field(signal, config), bank), bank.fingerprint)


def feature_matrix(fields, bank, jobs: int = 1) -> np.ndarray:
    """Stack :func:`field_features` for many fields (rows follow input order)."""
    fields = list(fields)
    if jobs > 1 and len(fields) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(lambda f: field_features(f, bank), fields))
    else:
        rows = [field_features(f, bank) for f in fields]
    return np.vstack(rows) if rows else np.zeros((0, len(bank) * POOL_SIZE))


def write_feature_csv(path, clip_ids, class_ids, X) -> None:
    X = np.asarray(X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip_id", "class_id"] + [f"f{i:04d}" for i in range(X.shape[1])])
        for cid, label, row in zip(clip_ids, class_ids, X):
            w.writerow([cid, int(label)] + [f"{v:.9g}" for v in row])


def read_feature_csv(path):
    """Returns ``(clip_ids, class_ids, X)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["clip_id", "class_id"]:
        raise ValueError(f"{path}: not a feature CSV")
    body = rows[1:]
    ids = [r[0] for r in body]
    labels = np.array([int(r[1]) for r in body], dtype=np.intp)
    X = np.array([[float(v) for v in r[2:]] for r in body], dtype=np.float64).reshape(len(body), len(rows[0]) - 2)
    return ids, labels, X
