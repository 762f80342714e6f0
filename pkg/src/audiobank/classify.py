"""k-nearest-neighbour and RBF support vector classifiers (one-vs-all, one-vs-one)."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from . import kernels

SVM_MAGIC = b"ABSVM001"


@dataclass(frozen=True)
class LabeledSet:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        y = np.asarray(self.labels, dtype=np.intp).ravel()
        if X.shape[0] < 1:
            raise ValueError("empty training set")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels)


# --------------------------------------------------------------------------
# k-nearest neighbours


def knn_predict(train: LabeledSet, query, k: int = 5) -> int:
    """Majority vote of the k nearest training points (Euclidean).

    Vote ties go to the tied class with the smaller summed neighbour distance,
    then to the lower class id. Distance ties at rank k keep the earlier
    training index.
    """
    query = np.asarray(query, dtype=np.float64).ravel()
    X, y = train.features, train.labels
    if query.shape[0] != X.shape[1]:
        raise ValueError(f"query has {query.shape[0]} features, training set {X.shape[1]}")
    if not (1 <= k <= X.shape[0]):
        raise ValueError(f"k must be in 1..{X.shape[0]}, got {k}")
    dist = np.sqrt(((X - query) ** 2).sum(axis=1))
    nearest = np.argsort(dist, kind="stable")[:k]
    labels = y[nearest]
    classes, votes = np.unique(labels, return_counts=True)
    tied = classes[votes == votes.max()]
    if tied.shape[0] == 1:
        return int(tied[0])
    sums = np.array([dist[nearest][labels == c].sum() for c in tied])
    # np.argmin returns the first (lowest class id) among equal sums
    return int(tied[int(np.argmin(sums))])


def knn_predict_batch(train: LabeledSet, queries, k: int = 5) -> np.ndarray:
    return np.array([knn_predict(train, q, k) for q in np.atleast_2d(queries)], dtype=np.intp)


# --------------------------------------------------------------------------
# support vector machines


@dataclass(frozen=True)
class SvmConfig:
    """RBF SVM settings.

    With ``kernel_form="sigma"`` the kernel is ``exp(-|x-y|^2 / (2 sigma^2))``;
    with ``"gamma"`` it is ``exp(-gamma |x-y|^2)``.
    """

    C: float = 150.0
    sigma: float = 75.0
    scheme: str = "ova"
    tol: float = 1e-3
    max_passes: int = 10
    kernel_form: str = "sigma"
    gamma: float | None = None
    standardize: bool = False

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.scheme not in ("ova", "ovo"):
            raise ValueError(f"scheme must be 'ova' or 'ovo', got {self.scheme!r}")
        if self.kernel_form == "sigma":
            if not self.sigma > 0:
                raise ValueError("sigma must be positive")
        elif self.kernel_form == "gamma":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("gamma must be positive for kernel_form='gamma'")
        else:
            raise ValueError(f"unknown kernel_form {self.kernel_form!r}")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")

    @property
    def gamma_value(self) -> float:
        return self.gamma if self.kernel_form == "gamma" else 1.0 / (2.0 * self.sigma**2)


SVM_A = SvmConfig(C=150.0, sigma=75.0, scheme="ova")
SVM_O = SvmConfig(C=100.0, sigma=60.0, scheme="ovo")


def sq_distances(A, B) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d = np.einsum("ij,ij->i", A, A)[:, None] - 2.0 * A @ B.T + np.einsum("ij,ij->i", B, B)[None, :]
    return np.maximum(d, 0.0)


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    return np.exp(-gamma * sq_distances(A, B))


@dataclass
class BinaryMachine:
    """Decision ``f(x) = sum_i coef_i K(x, sv_i) + b``; positive means ``pos_class``."""

    sv_index: np.ndarray
    coef: np.ndarray
    b: float
    pos_class: int
    neg_class: int  # -1 for "rest" in one-vs-all
    n_iter: int = 0
    gap: float = 0.0
    alpha: np.ndarray = field(default=None, repr=False)

    @property
    def n_sv(self) -> int:
        return self.sv_index.shape[0]


def _iteration_cap(n: int, max_passes: int) -> int:
    # one "pass" is n pair updates
    return max(max_passes * n * 50, 10_000)


def train_binary(gram, y, C: float, tol: float, max_passes: int, seed) -> tuple:
    """SMO on a precomputed Gram matrix; ``y`` in {-1, +1}. Returns ``(alpha, b, n_iter, gap)``."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    order = np.random.default_rng(seed).permutation(n).astype(np.intp)
    return kernels.smo_solve(
        np.ascontiguousarray(gram, dtype=np.float64), y, float(C), float(tol), _iteration_cap(n, max_passes), order
    )


@dataclass
class SvmModel:
    config: SvmConfig
    classes: list
    machines: list
    support: np.ndarray  # training rows referenced by any machine
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    @property
    def n_features(self) -> int:
        return self.support.shape[1]

    def _prep(self, Q):
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[1] != self.n_features:
            raise ValueError(f"query has {Q.shape[1]} features, model expects {self.n_features}")
        if self.mean is not None:
            Q = (Q - self.mean) / self.scale
        return Q

    def decision_values(self, Q) -> np.ndarray:
        """``(n_queries, n_machines)`` decision values."""
        Q = self._prep(Q)
        Kq = rbf_kernel(Q, self.support, self.config.gamma_value)
        out = np.empty((Q.shape[0], len(self.machines)))
        for j, m in enumerate(self.machines):
            out[:, j] = Kq[:, m.sv_index] @ m.coef + m.b
        return out

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        S = np.ascontiguousarray(self.support, dtype="<f8")
        (out_dir / "support.bin").write_bytes(SVM_MAGIC + struct.pack("<II", *S.shape) + S.tobytes())
        meta = {
            "config": asdict(self.config),
            "classes": [int(c) for c in self.classes],
            "mean": None if self.mean is None else self.mean.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "machines": [
                {
                    "pos_class": m.pos_class,
                    "neg_class": m.neg_class,
                    "b": m.b,
                    "sv_index": m.sv_index.tolist(),
                    "coef": m.coef.tolist(),
                    "n_iter": m.n_iter,
                    "gap": m.gap,
                }
                for m in self.machines
            ],
        }
        (out_dir / "model.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "SvmModel":
        path = Path(path)
        meta = json.loads((path / "model.json").read_text())
        buf = (path / "support.bin").read_bytes()
        if buf[:8] != SVM_MAGIC:
            raise ValueError(f"{path}: bad support-vector block")
        n, m = struct.unpack_from("<II", buf, 8)
        S = np.frombuffer(buf, dtype="<f8", count=n * m, offset=16).reshape(n, m).astype(np.float64)
        machines = [
            BinaryMachine(
                sv_index=np.array(e["sv_index"], dtype=np.intp),
                coef=np.array(e["coef"], dtype=np.float64),
                b=float(e["b"]),
                pos_class=int(e["pos_class"]),
                neg_class=int(e["neg_class"]),
                n_iter=int(e["n_iter"]),
                gap=float(e["gap"]),
            )
            for e in meta["machines"]
        ]
        mean = None if meta["mean"] is None else np.array(meta["mean"])
        scale = None if meta["scale"] is None else np.array(meta["scale"])
        return cls(SvmConfig(**meta["config"]), meta["classes"], machines, S, mean, scale)


def svm_train(train: LabeledSet, cfg: SvmConfig = SVM_A, seed: int = 0) -> SvmModel:
    """One-vs-all (N_c machines) or one-vs-one (N_c(N_c-1)/2 machines), each solved by SMO."""
    X, y = train.features, train.labels
    classes = [int(c) for c in train.classes]
    if len(classes) < 2:
        raise ValueError("SVM training needs at least two classes")
    mean = scale = None
    if cfg.standardize:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        X = (X - mean) / scale
    gram = rbf_kernel(X, X, cfg.gamma_value)
    rng = np.random.default_rng(seed)
    raw = []
    if cfg.scheme == "ova":
        tasks = [(c, -1, np.arange(X.shape[0]), np.where(y == c, 1.0, -1.0)) for c in classes]
    else:
        tasks = []
        for a, b in combinations(classes, 2):
            idx = np.flatnonzero((y == a) | (y == b))
            tasks.append((a, b, idx, np.where(y[idx] == a, 1.0, -1.0)))
    for pos, neg, idx, yy in tasks:
        sub_seed = int(rng.integers(2**31))
        alpha, b, n_iter, gap = train_binary(gram[np.ix_(idx, idx)], yy, cfg.C, cfg.tol, cfg.max_passes, sub_seed)
        sv = np.flatnonzero(alpha > 0)
        raw.append((pos, neg, idx, yy, alpha, b, n_iter, gap, sv))
    used = np.unique(np.concatenate([r[2][r[8]] for r in raw])) if raw else np.array([], dtype=np.intp)
    remap = {int(r): i for i, r in enumerate(used)}
    machines = []
    for pos, neg, idx, yy, alpha, b, n_iter, gap, sv in raw:
        machines.append(
            BinaryMachine(
                sv_index=np.array([remap[int(i)] for i in idx[sv]], dtype=np.intp),
                coef=alpha[sv] * yy[sv],
                b=float(b),
                pos_class=int(pos),
                neg_class=int(neg),
                n_iter=int(n_iter),
                gap=float(gap),
                alpha=alpha,
            )
        )
    support = X[used]
    return SvmModel(cfg, classes, machines, np.ascontiguousarray(support), mean, scale)


def ovo_vote(pairs, decisions, classes) -> int:
    """Majority vote over pairwise winners.

    ``pairs[j] = (a, b)`` and ``decisions[j]`` is machine j's value (positive
    means ``a``). Ties go to the larger summed ``|decision|`` over won
    contests, then to the lower class id.
    """
    votes = {c: 0 for c in classes}
    strength = {c: 0.0 for c in classes}
    for (a, b), d in zip(pairs, decisions):
        winner = a if d > 0 else b
        if d == 0:
            winner = min(a, b)
        votes[winner] += 1
        strength[winner] += abs(d)
    return min(classes, key=lambda c: (-votes[c], -strength[c], c))


def svm_predict_batch(model: SvmModel, queries) -> np.ndarray:
    D = model.decision_values(queries)
    if model.config.scheme == "ova":
        # argmax takes the first maximum, i.e. the lowest class id
        cls = np.array([m.pos_class for m in model.machines])
        return cls[np.argmax(D, axis=1)]
    pairs = [(m.pos_class, m.neg_class) for m in model.machines]
    return np.array([ovo_vote(pairs, row, model.classes) for row in D], dtype=np.intp)


def svm_predict(model: SvmModel, query) -> int:
    return int(svm_predict_batch(model, np.atleast_2d(query))[0])


def kkt_violation(gram, y, alpha, b, C) -> float:
    """Largest violation of the soft-margin KKT conditions."""
    y = np.asarray(y, dtype=np.float64)
    margin = y * (gram @ (alpha * y) + b)
    lower = alpha <= 0
    upper = alpha >= C
    free = ~(lower | upper)
    v = np.zeros_like(margin)
    v[lower] = np.maximum(0.0, 1.0 - margin[lower])
    v[upper] = np.maximum(0.0, margin[upper] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return float(v.max()) if v.size else 0.0


# --------------------------------------------------------------------------
# estimator wrappers used by the evaluation harness


class KnnClassifier:
    def __init__(self, k: int = 5):
        self.k = k
        self.train = None

    def fit(self, X, y, seed: int = 0):
        self.train = LabeledSet(X, y)
        return self

    def predict(self, X) -> np.ndarray:
        return knn_predict_batch(self.train, X, self.k)


class SvmClassifier:
    def __init__(self, config: SvmConfig = SVM_A):
        self.config = config
        self.model = None

    def fit(self, X, y, seed: int = 0):
        self.model = svm_train(LabeledSet(X, y), self.config, seed)
        return self

    def predict(self, X) -> np.ndarray:
        return svm_predict_batch(self.model, X)
