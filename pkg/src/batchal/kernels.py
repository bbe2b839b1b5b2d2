"""Kernel functions (RBF, closed-form fully-connected ReLU NTK) and the
Nystrom low-rank feature map z_x = (K_U)^{+1/2} [k(x,u_1),...,k(x,u_m)]."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EIG_DROP_REL = 1e-10  # eigenvalues below this fraction of the largest are treated as null


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"        # "rbf" | "relu_ntk"
    rbf_gamma: float = 1.0
    ntk_depth: int = 3       # hidden layers of the infinite-width ReLU network

    def __post_init__(self):
        if self.kind not in ("rbf", "relu_ntk"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and not (isinstance(self.rbf_gamma, (int, float))
                                       and self.rbf_gamma > 0):
            raise ValueError("rbf_gamma must be a positive number")
        if self.kind == "relu_ntk" and self.ntk_depth < 1:
            raise ValueError("ntk_depth must be at least 1")


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return X


def _rbf_matrix(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    sq = (X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * X @ Y.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def _kappa0(u: np.ndarray) -> np.ndarray:
    return (np.pi - np.arccos(u)) / np.pi


def _kappa1(u: np.ndarray) -> np.ndarray:
    return (u * (np.pi - np.arccos(u)) + np.sqrt(np.maximum(0.0, 1.0 - u * u))) / np.pi


def _relu_ntk_matrix(X: np.ndarray, Y: np.ndarray, depth: int) -> np.ndarray:
    # NNGP covariance starts at the raw inner product and the ReLU layer map
    # preserves the diagonal, so the normalizer is fixed across layers.
    norms = np.outer(np.linalg.norm(X, axis=1), np.linalg.norm(Y, axis=1))
    safe = np.where(norms > 0.0, norms, 1.0)
    cov = X @ Y.T
    theta = cov.copy()
    for _ in range(depth):
        u = np.clip(cov / safe, -1.0, 1.0)
        cov = norms * _kappa1(u)
        theta = cov + theta * _kappa0(u)
    return theta


def kernel_matrix(spec: KernelSpec, X, Y) -> np.ndarray:
    """Pairwise kernel values, entry (i, j) = k(X_i, Y_j)."""
    X, Y = _as_matrix(X), _as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if spec.kind == "rbf":
        return _rbf_matrix(X, Y, spec.rbf_gamma)
    return _relu_ntk_matrix(X, Y, spec.ntk_depth)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(kernel_matrix(spec, x[None, :], y[None, :])[0, 0])


@dataclass
class NystromMap:
    """Landmark set plus the pseudo-inverse square-root factor of its Gram."""

    landmarks: np.ndarray            # (m, d)
    factor: np.ndarray               # (m, m), symmetric
    spec: KernelSpec
    landmark_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def m(self) -> int:
        return self.landmarks.shape[0]

    def transform(self, X) -> np.ndarray:
        """Map rows of X to Nystrom feature vectors (n, m)."""
        X = _as_matrix(X)
        if X.shape[1] != self.landmarks.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {self.landmarks.shape[1]}")
        return kernel_matrix(self.spec, X, self.landmarks) @ self.factor


def _pinv_sqrt(K: np.ndarray) -> np.ndarray:
    K = (K + K.T) / 2.0
    vals, vecs = np.linalg.eigh(K)
    tau = EIG_DROP_REL * max(float(vals[-1]), 0.0)
    keep = vals > tau
    if not np.any(keep):
        return np.zeros_like(K)
    return (vecs[:, keep] * vals[keep] ** -0.5) @ vecs[:, keep].T


def nystrom_from_landmarks(spec: KernelSpec, landmarks,
                           indices=None) -> NystromMap:
    U = _as_matrix(landmarks)
    factor = _pinv_sqrt(kernel_matrix(spec, U, U))
    idx = np.asarray(indices, dtype=int) if indices is not None else np.empty(0, dtype=int)
    return NystromMap(landmarks=U, factor=factor, spec=spec, landmark_indices=idx)


def build_nystrom(spec: KernelSpec, candidates, m: int, rng_seed: int = 0) -> NystromMap:
    """Draw m landmarks uniformly without replacement and factor their Gram.

    Eigenvalues at or below 1e-10 of the largest are dropped, so rank-deficient
    landmark sets (duplicates) still produce a finite map.
    """
    X = _as_matrix(candidates)
    n = X.shape[0]
    if m > n:
        raise ValueError(f"requested {m} landmarks from {n} candidates")
    if m < 1:
        raise ValueError("need at least one landmark")
    rng = np.random.default_rng(rng_seed)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    return nystrom_from_landmarks(spec, X[idx], indices=idx)


def map_features(nm: NystromMap, x) -> np.ndarray:
    """Nystrom feature vector of a single input (length m)."""
    return nm.transform(np.asarray(x, dtype=np.float64)[None, :])[0]


def median_heuristic_gamma(X, rng_seed: int = 0, max_points: int = 500) -> float:
    """RBF bandwidth from the median pairwise distance: gamma = 1/(2 med^2)."""
    X = _as_matrix(X)
    n = X.shape[0]
    if n > max_points:
        rng = np.random.default_rng(rng_seed)
        X = X[rng.choice(n, size=max_points, replace=False)]
    sq = (X * X).sum(axis=1)[:, None] + (X * X).sum(axis=1)[None, :] - 2.0 * X @ X.T
    d = np.sqrt(np.maximum(sq[np.triu_indices(X.shape[0], k=1)], 0.0))
    med = float(np.median(d)) if d.size else 1.0
    if med <= 0.0:
        med = 1.0
    return 1.0 / (2.0 * med * med)
