"""Repeated stratified-split experiments, confusion matrices and parameter sweeps."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .bank import DEFAULT_TIME_STRIDE, DEFAULT_WINDOW, build_bank, split_bank_size
from .classify import KnnClassifier, SvmClassifier, SvmConfig
from .featurize import feature_matrix
from .nmf import NmfConfig, nmf_encode, nmf_fit
from .pipeline import FeatureConfig, signal_field

log = logging.getLogger(__name__)

CLASSIFIERS = ("knn", "svm-a", "svm-o")
SWEEP_AXES = ("none", "knn_k", "train_fraction", "bank_size")


class SplitError(ValueError):
    """A class has no test clips after forcing bank sources into training."""


@dataclass(frozen=True)
class ExperimentConfig:
    train_fraction: float = 0.6
    runs: int = 5
    seed: int = 0
    classifier: str = "svm-a"
    knn_k: int = 5
    svm_a_C: float = 150.0
    svm_a_sigma: float = 75.0
    svm_o_C: float = 100.0
    svm_o_sigma: float = 60.0
    svm_tol: float = 1e-3
    svm_max_passes: int = 10
    n_per_class: int = 4
    bank_size: int | None = None
    window: tuple = DEFAULT_WINDOW
    time_stride: int = DEFAULT_TIME_STRIDE
    nmf: bool = False
    nmf_rank: int = 64
    nmf_max_iter: int = 500
    nmf_standardize: bool = True
    features: FeatureConfig = field(default_factory=FeatureConfig)
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    jobs: int = 1

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}, got {self.classifier!r}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        object.__setattr__(self, "window", tuple(self.window))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        d["sweep_values"] = list(self.sweep_values)
        return d

    def total_bank_size(self, n_classes: int) -> int:
        return self.bank_size if self.bank_size is not None else self.n_per_class * n_classes


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted."""

    counts: np.ndarray

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    def add(self, truth, pred) -> None:
        np.add.at(self.counts, (np.asarray(truth), np.asarray(pred)), 1)

    def rates(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = self.counts / rows
        return np.where(rows > 0, r, 0.0)

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else float("nan")


def run_seed(master: int, run: int) -> int:
    return int(np.random.SeedSequence([int(master), int(run)]).generate_state(1)[0])


def stratified_split(labels: Sequence[int], train_fraction: float, seed, bank_sources=(), ids=None):
    """Per-class seeded shuffle; the first ``ceil(fraction * count)`` go to training.

    ``labels[i]`` is the class of item i and ``ids[i]`` its clip id
    (defaults to ``i``). Clips in ``bank_sources`` are forced into training,
    swapping a non-bank training clip of the same class into test when one
    exists. Returns sorted index arrays ``(train, test)``.
    """
    labels = np.asarray(labels)
    ids = list(range(len(labels))) if ids is None else list(ids)
    forced = set(bank_sources)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.shape[0] < 2:
            raise SplitError(f"class {c} has fewer than 2 clips")
        order = list(members[rng.permutation(members.shape[0])])
        n_train = math.ceil(round(train_fraction * len(order), 9))
        tr, te = order[:n_train], order[n_train:]
        for idx in [i for i in te if ids[i] in forced]:
            te.remove(idx)
            swap = next((j for j in reversed(tr) if ids[j] not in forced), None)
            if swap is not None:
                tr.remove(swap)
                te.append(swap)
            tr.append(idx)
        if not te:
            raise SplitError(f"class {c} has no test clips left after bank exclusion")
        train.extend(tr)
        test.extend(te)
    return np.array(sorted(train), dtype=np.intp), np.array(sorted(test), dtype=np.intp)


def make_classifier(cfg: ExperimentConfig):
    if cfg.classifier == "knn":
        return KnnClassifier(cfg.knn_k)
    if cfg.classifier == "svm-a":
        return SvmClassifier(SvmConfig(C=cfg.svm_a_C, sigma=cfg.svm_a_sigma, scheme="ova", tol=cfg.svm_tol,
                                       max_passes=cfg.svm_max_passes))
    return SvmClassifier(SvmConfig(C=cfg.svm_o_C, sigma=cfg.svm_o_sigma, scheme="ovo", tol=cfg.svm_tol,
                                   max_passes=cfg.svm_max_passes))


def _nmf_classifier(cfg: ExperimentConfig, base):
    if cfg.nmf_standardize and isinstance(base, SvmClassifier):
        return SvmClassifier(replace(base.config, standardize=True))
    return base


class FieldCache:
    """Histogram fields of a corpus, computed once per feature configuration."""

    def __init__(self, clips, config: FeatureConfig = FeatureConfig(), jobs: int = 1):
        self.clips = list(clips)
        self.config = config
        self._fields = None
        self.jobs = jobs

    @property
    def fields(self):
        if self._fields is None:
            if self.jobs > 1:
                from concurrent.futures import ThreadPoolExecutor

                with ThreadPoolExecutor(self.jobs) as ex:
                    self._fields = list(ex.map(lambda c: signal_field(c.signal, self.config), self.clips))
            else:
                self._fields = [signal_field(c.signal, self.config) for c in self.clips]
        return self._fields


def _run_features(cfg, cache: FieldCache, run: int, store: dict | None):
    """Split, bank and raw features of one run, memoized in ``store``."""
    seed = run_seed(cfg.seed, run)
    clips = cache.clips
    labels = np.array([c.class_id for c in clips])
    n_classes = int(labels.max()) + 1
    size = cfg.total_bank_size(n_classes)
    key = (seed, cfg.train_fraction, size, cfg.window, cfg.time_stride, cfg.features.fingerprint)
    if store is not None and key in store:
        return store[key]
    train, test = stratified_split(labels, cfg.train_fraction, seed, ids=[c.clip_id for c in clips])
    fields = cache.fields
    training = {c: [] for c in range(n_classes)}
    for i in train:
        training[int(labels[i])].append((clips[i].clip_id, fields[i]))
    per_class = split_bank_size(size, n_classes, seed)
    names = {c.class_id: c.class_name for c in clips}
    bank = build_bank(training, per_class, cfg.features, seed=seed, window=cfg.window,
                      time_stride=cfg.time_stride, class_names=[names[c] for c in range(n_classes)])
    in_test = {clips[i].clip_id for i in test}
    if bank.sources & in_test:
        raise SplitError("a bank source clip landed in the test set")
    X = feature_matrix(fields, bank, jobs=cfg.jobs)
    out = (train, test, X, labels)
    if store is not None:
        store[key] = out
    return out


def _arm_summary(accs, confusion: ConfusionMatrix):
    accs = [float(a) for a in accs]
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return {
        "accuracies": accs,
        "mean": float(np.mean(accs)),
        "std": std,
        "confusion": confusion.counts.tolist(),
    }


def run_experiment(cfg: ExperimentConfig, corpus, classifier_factory: Callable | None = None,
                   store: dict | None = None) -> dict:
    """``cfg.runs`` independent splits, each with its own bank; returns a JSON-ready report.

    ``corpus`` is a list of :class:`~audiobank.audio_io.LabeledClip` or a
    :class:`FieldCache`. The report's top-level ``accuracies/mean/std/confusion``
    describe raw features; with ``cfg.nmf`` an ``"nmf"`` arm is added.
    """
    cache = corpus if isinstance(corpus, FieldCache) else FieldCache(corpus, cfg.features, cfg.jobs)
    labels = np.array([c.class_id for c in cache.clips])
    n_classes = int(labels.max()) + 1
    names = {c.class_id: c.class_name for c in cache.clips}
    arms = {"raw": ([], ConfusionMatrix.empty(n_classes))}
    if cfg.nmf:
        arms["nmf"] = ([], ConfusionMatrix.empty(n_classes))
    for run in range(cfg.runs):
        try:
            train, test, X, y = _run_features(cfg, cache, run, store)
            seed = run_seed(cfg.seed, run)
            inputs = {"raw": (X[train], X[test])}
            if cfg.nmf:
                ncfg = NmfConfig(rank=cfg.nmf_rank, max_iter=cfg.nmf_max_iter, seed=seed)
                model, H = nmf_fit(X[train].T, ncfg)
                inputs["nmf"] = (H.T, nmf_encode(X[test].T, model, ncfg).T)
            for arm, (Xtr, Xte) in inputs.items():
                clf = classifier_factory() if classifier_factory else make_classifier(cfg)
                if arm == "nmf":
                    clf = _nmf_classifier(cfg, clf)
                clf.fit(Xtr, y[train], seed=seed)
                pred = np.asarray(clf.predict(Xte))
                accs, cm = arms[arm]
                cm.add(y[test], pred)
                accs.append(float(np.mean(pred == y[test])))
                log.info("run %d [%s]: accuracy %.4f", run, arm, accs[-1])
        except Exception as exc:
            raise RuntimeError(f"run {run}: {exc}") from exc
    report = {"config": cfg.to_dict(), "class_names": [names[c] for c in range(n_classes)]}
    report.update(_arm_summary(*arms["raw"]))
    report["arms"] = {arm: _arm_summary(*v) for arm, v in arms.items()}
    return report


def run_sweep(cfg: ExperimentConfig, corpus, store: dict | None = None) -> list[dict]:
    """``run_experiment`` at every axis value.

    Run seeds depend only on the master seed and run index, so every axis
    value sees the same splits; features are shared where the axis does not
    change them (e.g. the kNN k axis).
    """
    if not cfg.sweep_values:
        raise ValueError("sweep needs at least one axis value")
    cache = corpus if isinstance(corpus, FieldCache) else FieldCache(corpus, cfg.features, cfg.jobs)
    store = {} if store is None else store
    rows = []
    for value in cfg.sweep_values:
        if cfg.sweep_axis == "knn_k":
            sub = replace(cfg, classifier="knn", knn_k=int(value))
        elif cfg.sweep_axis == "train_fraction":
            sub = replace(cfg, train_fraction=float(value))
        elif cfg.sweep_axis == "bank_size":
            sub = replace(cfg, bank_size=int(value))
        else:
            raise ValueError("run_sweep needs a sweep axis")
        rep = run_experiment(sub, cache, store=store)
        rows.append({"value": value, "mean": rep["mean"], "std": rep["std"], "accuracies": rep["accuracies"]})
    return rows


def write_sweep_csv(path, axis: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis, "mean", "std"])
        for r in rows:
            w.writerow([r["value"], f"{r['mean']:.4f}", f"{r['std']:.4f}"])


def write_confusion_csv(path, counts, class_names) -> None:
    """Row-normalized percentages, class names on both axes."""
    rates = ConfusionMatrix(np.asarray(counts)).rates() * 100.0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(class_names))
        for name, row in zip(class_names, rates):
            w.writerow([name] + [f"{v:.4f}" for v in row])


def write_runs_csv(path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "run", "accuracy"])
        for arm, summary in report["arms"].items():
            for i, a in enumerate(summary["accuracies"]):
                w.writerow([arm, i, f"{a:.4f}"])
