"""Frobenius-norm NMF by multiplicative updates, and encoding against a fixed basis."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

NMF_MAGIC = b"ABNMF001"
#: Relative floor applied to warm-start codes in :func:`nmf_encode`.
ENCODE_FLOOR = 1e-9


@dataclass(frozen=True)
class NmfConfig:
    rank: int = 64
    max_iter: int = 500
    rel_tol: float = 1e-6
    seed: int = 0
    eps: float = 1e-12

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class NmfModel:
    W: np.ndarray
    n_iter: int = 0
    objective: float = float("nan")
    history: list = field(default_factory=list, repr=False)
    reseeded: list = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    @property
    def rank(self) -> int:
        return self.W.shape[1]

    def save(self, prefix) -> None:
        """``<prefix>.bin`` (magic, m, k, W row-major) and ``<prefix>.json`` sidecar."""
        prefix = Path(prefix)
        m, k = self.W.shape
        W = np.ascontiguousarray(self.W, dtype="<f8")
        prefix.with_suffix(".bin").write_bytes(NMF_MAGIC + struct.pack("<II", m, k) + W.tobytes())
        meta = {"m": m, "k": k, "n_iter": self.n_iter, "objective": self.objective, "reseeded": self.reseeded}
        prefix.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, prefix) -> "NmfModel":
        prefix = Path(prefix)
        buf = prefix.with_suffix(".bin").read_bytes()
        if buf[:8] != NMF_MAGIC:
            raise ValueError(f"{prefix}.bin: bad NMF magic")
        m, k = struct.unpack_from("<II", buf, 8)
        W = np.frombuffer(buf, dtype="<f8", count=m * k, offset=16).reshape(m, k).astype(np.float64)
        meta = json.loads(prefix.with_suffix(".json").read_text())
        return cls(W=W, n_iter=int(meta["n_iter"]), objective=float(meta["objective"]), reseeded=meta["reseeded"])


def _check_input(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("NMF input must be finite")
    if (X < 0).any():
        raise ValueError("NMF input must be non-negative")
    return X


def objective(X, W, H) -> float:
    R = X - W @ H
    return float(np.einsum("ij,ij->", R, R))


def _reseed_zero_columns(X, W, H, done):
    """Replace all-zero basis columns without increasing the objective."""
    for j in np.flatnonzero(~W.any(axis=0)):
        j = int(j)
        R = np.maximum(X - W @ H, 0.0)
        norms = np.sqrt((R**2).sum(axis=0))
        c = int(np.argmax(norms)) if R.size else 0
        if j in done or norms.size == 0 or norms[c] == 0:
            # nothing left to explain; a unit column keeps W well formed, WH unchanged
            W[:, j] = 1.0 / np.sqrt(W.shape[0])
            H[j, :] = 0.0
            continue
        # with u = r+/|r+| and H[j] = |r+| e_c, column c's residual drops by |r+|^2
        W[:, j] = R[:, c] / norms[c]
        H[j, :] = 0.0
        H[j, c] = norms[c]
        done.append(j)


def nmf_fit(X, cfg: NmfConfig = NmfConfig(), callback=None):
    """Minimize ``||X - WH||_F^2`` over non-negative W (m x k), H (k x n).

    Returns ``(model, H)``. ``model.history`` holds the objective after every
    iteration (index 0 is the initial value). ``callback(it, W, H)``, if
    given, sees every iterate.
    """
    X = _check_input(X)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be an m x n matrix with n >= 1")
    m, n = X.shape
    rng = np.random.default_rng(cfg.seed)
    # uniform on (0, 1]
    W = 1.0 - rng.random((m, cfg.rank))
    H = 1.0 - rng.random((cfg.rank, n))
    eps = cfg.eps
    history = [objective(X, W, H)]
    reseeded: list = []
    it = 0
    for it in range(1, cfg.max_iter + 1):
        H *= (W.T @ X) / (W.T @ W @ H + eps)
        W *= (X @ H.T) / (W @ (H @ H.T) + eps)
        if not W.any(axis=0).all():
            _reseed_zero_columns(X, W, H, reseeded)
        if callback is not None:
            callback(it, W, H)
        J = objective(X, W, H)
        prev = history[-1]
        history.append(J)
        if prev == 0 or (prev - J) <= cfg.rel_tol * prev:
            break
    if not W.any(axis=0).all():
        _reseed_zero_columns(X, W, H, reseeded)
    model = NmfModel(W=W, n_iter=it, objective=history[-1], history=history, reseeded=reseeded)
    return model, H


def nmf_encode(x_new, model: NmfModel, cfg: NmfConfig = NmfConfig(), init=None, return_history: bool = False):
    """Codes for new samples under the frozen basis ``model.W``.

    ``x_new`` is one m-vector or an m x n matrix of column samples. Only the
    H update runs; stopping follows ``cfg``. By default the iterations start
    from the least-squares codes clipped to a small positive floor (the
    problem is convex in H, so the start only affects speed); pass
    ``init="random"`` for a seeded uniform (0, 1] start or an explicit array.
    """
    x = _check_input(x_new)
    single = x.ndim == 1
    X = x[:, None] if single else x
    W = model.W
    if X.shape[0] != W.shape[0]:
        raise ValueError(f"feature dimension {X.shape[0]} does not match basis dimension {W.shape[0]}")
    k = W.shape[1]
    if init is None:
        H = np.linalg.lstsq(W, X, rcond=None)[0]
        # zeros would be fixed points of the multiplicative update
        top = H.max(axis=0, keepdims=True)
        H = np.maximum(H, ENCODE_FLOOR * np.where(top > 0, top, 1.0))
    elif isinstance(init, str) and init == "random":
        rng = np.random.default_rng(cfg.seed)
        H = 1.0 - rng.random((k, X.shape[1]))
    else:
        H = np.array(init, dtype=np.float64).reshape(k, X.shape[1])
    WtX = W.T @ X
    WtW = W.T @ W
    history = [objective(X, W, H)]
    for _ in range(cfg.max_iter):
        H *= WtX / (WtW @ H + cfg.eps)
        J = objective(X, W, H)
        prev = history[-1]
        history.append(J)
        if prev == 0 or (prev - J) <= cfg.rel_tol * prev:
            break
    codes = H[:, 0] if single else H
    return (codes, history) if return_history else codes


def config_dict(cfg: NmfConfig) -> dict:
    return asdict(cfg)
