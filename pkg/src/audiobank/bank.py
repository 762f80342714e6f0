"""Detector selection by k-means over per-class spectrogram crops, and the detector bank."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .histfield import HistogramField, pad_time, read_field, write_field
from .pipeline import FeatureConfig, signal_field

BANK_FORMAT = "audiobank-bank/1"
DEFAULT_WINDOW = (64, 32)
DEFAULT_TIME_STRIDE = 16


class NoCandidatesError(ValueError):
    """A class produced no window-sized crops."""


@dataclass(frozen=True)
class Candidate:
    field: HistogramField
    class_id: int
    source: str
    freq_offset: int
    time_offset: int


@dataclass(eq=False)
class Detector:
    id: int
    class_id: int
    field: HistogramField
    source: str = ""
    freq_offset: int = 0
    time_offset: int = 0
    sqrt_field: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.sqrt_field is None:
            self.sqrt_field = np.sqrt(self.field.values)
        self.field.values.setflags(write=False)
        self.sqrt_field.setflags(write=False)

    @property
    def shape(self):
        return self.field.shape


@dataclass(eq=False)
class DetectorBank:
    """Detectors ordered class-major, then by detector id.

    ``per_class[c]`` is the number of detectors drawn from class ``c``; it is
    uniform (``N_d`` each) except for banks smaller than the class count.
    """

    detectors: list
    n_classes: int
    per_class: tuple
    window: tuple
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    class_names: list = None
    _spectra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.window = tuple(int(w) for w in self.window)
        if isinstance(self.per_class, int):
            self.per_class = (self.per_class,) * self.n_classes
        self.per_class = tuple(int(n) for n in self.per_class)
        if len(self.per_class) != self.n_classes:
            raise ValueError("per_class needs one count per class")
        if len(self.detectors) != sum(self.per_class):
            raise ValueError(f"bank holds {len(self.detectors)} detectors, expected {sum(self.per_class)}")
        keys = [(d.class_id, d.id) for d in self.detectors]
        if keys != sorted(keys):
            raise ValueError("detectors must be ordered by class id, then detector id")
        if self.class_names is None:
            self.class_names = [str(c) for c in range(self.n_classes)]

    def __len__(self):
        return len(self.detectors)

    @property
    def n_per_class(self):
        """``N_d`` for uniform banks, else ``None``."""
        return self.per_class[0] if len(set(self.per_class)) == 1 else None

    @property
    def fingerprint(self) -> str:
        return self.feature_config.fingerprint

    @property
    def sources(self) -> set:
        return {d.source for d in self.detectors}

    def reordered(self, order: Sequence[int]) -> "DetectorBank":
        """Same detectors in another order (skips the ordering check)."""
        bank = object.__new__(DetectorBank)
        bank.__dict__.update(self.__dict__)
        bank.detectors = [self.detectors[i] for i in order]
        bank._spectra = {}
        return bank

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        (out_dir / "detectors").mkdir(parents=True, exist_ok=True)
        entries = []
        for d in self.detectors:
            rel = f"detectors/det_{d.id:04d}.bin"
            write_field(out_dir / rel, d.field)
            entries.append(
                {
                    "id": d.id,
                    "class_id": d.class_id,
                    "file": rel,
                    "source": d.source,
                    "freq_offset": d.freq_offset,
                    "time_offset": d.time_offset,
                }
            )
        manifest = {
            "format": BANK_FORMAT,
            "N_c": self.n_classes,
            "N_d": self.n_per_class,
            "per_class": list(self.per_class),
            "window": list(self.window),
            "fingerprint": self.fingerprint,
            "feature_config": self.feature_config.to_dict(),
            "class_names": list(self.class_names),
            "detectors": entries,
        }
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "DetectorBank":
        path = Path(path)
        manifest_path = path / "manifest.json" if path.is_dir() else path
        root = manifest_path.parent
        m = json.loads(manifest_path.read_text())
        if m.get("format") != BANK_FORMAT:
            raise ValueError(f"{manifest_path}: not a detector bank manifest")
        cfg = FeatureConfig.from_dict(m["feature_config"])
        if cfg.fingerprint != m["fingerprint"]:
            raise ValueError(f"{manifest_path}: stored fingerprint does not match its configuration")
        detectors = [
            Detector(
                id=int(e["id"]),
                class_id=int(e["class_id"]),
                field=read_field(root / e["file"], cfg.histfield),
                source=e["source"],
                freq_offset=int(e["freq_offset"]),
                time_offset=int(e["time_offset"]),
            )
            for e in m["detectors"]
        ]
        return cls(
            detectors=detectors,
            n_classes=int(m["N_c"]),
            per_class=tuple(m["per_class"]),
            window=tuple(m["window"]),
            feature_config=cfg,
            class_names=list(m["class_names"]),
        )


def split_bank_size(total: int, n_classes: int, seed) -> tuple:
    """Per-class detector counts for a bank of ``total`` detectors.

    Every class gets ``total // n_classes``; the remainder goes to a seeded
    random subset of classes, so banks smaller than ``n_classes`` leave some
    classes without a detector.
    """
    if total < 1:
        raise ValueError("bank size must be >= 1")
    base, extra = divmod(total, n_classes)
    counts = np.full(n_classes, base, dtype=int)
    if extra:
        counts[np.random.default_rng(seed).choice(n_classes, extra, replace=False)] += 1
    return tuple(int(c) for c in counts)


def crop_candidates(fields, window, stride, class_id: int) -> list[Candidate]:
    """All window-sized sub-fields at stride offsets.

    ``fields`` is a sequence of ``(source_id, HistogramField)`` pairs. Fields
    smaller than the window in either axis contribute nothing.
    """
    kd, td = window
    sk, st = stride
    if sk < 1 or st < 1:
        raise ValueError("strides must be positive")
    out = []
    for source, f in fields:
        K, T = f.shape
        if K < kd or T < td:
            continue
        for k0 in range(0, K - kd + 1, sk):
            for t0 in range(0, T - td + 1, st):
                out.append(Candidate(f.crop(k0, t0, kd, td), class_id, str(source), k0, t0))
    if not out:
        raise NoCandidatesError(f"class {class_id}: window {window} is larger than every clip")
    return out


def kmeans(X: np.ndarray, k: int, seed, max_iter: int = 100, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(centroids, labels, inertia_history)``. Inertia is checked to be
    non-increasing after every assignment step.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if not (1 <= k <= n):
        raise ValueError(f"cannot pick {k} clusters from {n} points")
    rng = np.random.default_rng(seed)
    sq = np.einsum("ij,ij->i", X, X)

    def sqdist(C):
        d = sq[:, None] - 2.0 * X @ C.T + np.einsum("ij,ij->i", C, C)[None, :]
        return np.maximum(d, 0.0)

    idx = [int(rng.integers(n))]
    closest = sqdist(X[idx])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # remaining points coincide with chosen centres
            free = np.setdiff1d(np.arange(n), idx)
            nxt = int(rng.choice(free))
        idx.append(nxt)
        closest = np.minimum(closest, sqdist(X[[nxt]])[:, 0])
    C = X[idx].copy()

    history = []
    labels = None
    for _ in range(max_iter):
        new_labels = np.argmin(sqdist(C), axis=1)
        inertia = float(((X - C[new_labels]) ** 2).sum())
        if history and inertia > history[-1] * (1 + 1e-9) + 1e-12:
            raise RuntimeError(f"k-means inertia increased: {history[-1]} -> {inertia}")
        history.append(inertia)
        converged = labels is not None and (
            np.array_equal(labels, new_labels)
            or (history[-2] - inertia) <= tol * max(history[-2], 1e-300)
        )
        labels = new_labels
        if converged:
            break
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
            else:
                far = int(np.argmax(((X - C[labels]) ** 2).sum(axis=1)))
                C[j] = X[far]
                labels[far] = j
    return C, labels, history


def kmeans_select(candidates, n_select: int, seed, max_iter: int = 100, tol: float = 1e-6) -> list[Detector]:
    """Cluster candidates and keep the medoid (nearest real crop) of each centroid."""
    candidates = list(candidates)
    if len(candidates) < n_select:
        raise ValueError(f"only {len(candidates)} candidates for {n_select} detectors")
    X = np.stack([c.field.values.ravel() for c in candidates])
    C, _, _ = kmeans(X, n_select, seed, max_iter=max_iter, tol=tol)
    taken: set[int] = set()
    chosen = []
    for j in range(n_select):
        dist = ((X - C[j]) ** 2).sum(axis=1)
        for i in np.argsort(dist, kind="stable"):
            if int(i) not in taken:
                taken.add(int(i))
                chosen.append(int(i))
                break
    return [
        Detector(
            id=j,
            class_id=candidates[i].class_id,
            field=candidates[i].field,
            source=candidates[i].source,
            freq_offset=candidates[i].freq_offset,
            time_offset=candidates[i].time_offset,
        )
        for j, i in enumerate(chosen)
    ]


def build_bank(
    training: Mapping[int, Sequence],
    n_per_class,
    config: FeatureConfig = FeatureConfig(),
    seed: int = 0,
    window=DEFAULT_WINDOW,
    time_stride: int = DEFAULT_TIME_STRIDE,
    class_names=None,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> DetectorBank:
    """Select detectors from every class's training clips.

    ``training`` maps class id to ``(clip_id, Signal or HistogramField)``
    pairs; class ids must be ``0..N_c-1``. ``n_per_class`` is ``N_d`` or one
    count per class. Crops start at frequency bin 0 and step through time by
    ``time_stride`` frames.
    """
    class_ids = sorted(training)
    if class_ids != list(range(len(class_ids))):
        raise ValueError(f"class ids must be 0..N_c-1, got {class_ids}")
    if isinstance(n_per_class, (int, np.integer)):
        if n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        per_class = (int(n_per_class),) * len(class_ids)
    else:
        per_class = tuple(int(n) for n in n_per_class)
        if len(per_class) != len(class_ids) or min(per_class) < 0 or sum(per_class) < 1:
            raise ValueError("per-class detector counts must be non-negative, one per class")
    kd, td = window
    detectors = []
    for c in class_ids:
        clips = training[c]
        if not clips:
            raise NoCandidatesError(f"class {c} has no training clips")
        if per_class[c] == 0:
            continue
        fields = []
        for clip_id, item in clips:
            f = item if isinstance(item, HistogramField) else signal_field(item, config)
            fields.append((clip_id, pad_time(f, td)))
        K = fields[0][1].shape[0]
        cands = crop_candidates(fields, (kd, td), (max(K, 1), time_stride), c)
        picked = kmeans_select(cands, per_class[c], seed=[int(seed), c], max_iter=max_iter, tol=tol)
        base = sum(per_class[:c])
        detectors.extend(replace(d, id=base + d.id, sqrt_field=d.sqrt_field) for d in picked)
    return DetectorBank(
        detectors=detectors,
        n_classes=len(class_ids),
        per_class=per_class,
        window=(kd, td),
        feature_config=config,
        class_names=list(class_names) if class_names is not None else None,
    )
