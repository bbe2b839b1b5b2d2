"""Semi-supervised pseudo-labeler: graph label propagation over an RBF
affinity graph, plus a purely supervised kernel-logistic control arm. The
propagation model doubles as the retrained-per-round evaluation model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import PoolState, VectorSource, one_hot
from .kernels import KernelSpec, build_nystrom, median_heuristic_gamma
from .proxy import ProxyModel, predict as proxy_predict, train_proxy


@dataclass
class SslConfig:
    kind: str = "label_propagation"   # "label_propagation" | "kernel_logistic"
    alpha: float = 0.99
    gamma: float | None = None        # None -> median-distance heuristic
    tol: float = 1e-6
    max_iter: int = 1000
    n_classes: int | None = None
    # kernel_logistic control arm; landmarks restricted to labeled points so
    # the control sees no unlabeled information at all
    m: int = 128
    nr_it: int = 500
    lam: float = 1e-4
    landmarks: str = "labeled"   # "labeled" | "all"
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("label_propagation", "kernel_logistic"):
            raise ValueError(f"unknown ssl kind {self.kind!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")


def _affinity(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def knn_median_gamma(X: np.ndarray, k: int = 7) -> float:
    """Affinity bandwidth from the median k-th-neighbor distance. The local
    median keeps within-cluster affinities well above cross-cluster ones,
    which the global pairwise median does not on clustered data."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if n < 2:
        return 1.0
    sq = (X * X).sum(axis=1)[:, None] + (X * X).sum(axis=1)[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(sq, np.inf)
    kth = np.sort(np.maximum(sq, 0.0), axis=1)[:, min(k, n - 2)]
    sigma2 = float(np.median(kth))
    if sigma2 <= 0.0:
        sigma2 = 1.0
    return 1.0 / (2.0 * sigma2)


class LabelPropagationModel:
    """Row-normalized RBF affinity graph with clamped labeled rows, iterated
    P <- alpha * S P + (1 - alpha) * Y to a fixed point."""

    kind = "label_propagation"

    def __init__(self, fit_points: np.ndarray, probs: np.ndarray, gamma: float,
                 alpha: float, n_classes: int, iterations: int,
                 delta_history: list[float] | None = None):
        self.fit_points = fit_points
        self.probs = probs          # converged, row-normalized (n_fit, c)
        self.gamma = gamma
        self.alpha = alpha
        self.n_classes = n_classes
        self.iterations = iterations
        self.delta_history = delta_history or []

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Out-of-sample scores by affinity-weighted interpolation of the fit
        distribution; exact matches reproduce their fit-time row."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        sq = ((X * X).sum(axis=1)[:, None]
              + (self.fit_points * self.fit_points).sum(axis=1)[None, :]
              - 2.0 * X @ self.fit_points.T)
        sq = np.maximum(sq, 0.0)
        A = np.exp(-self.gamma * sq)
        out = A @ self.probs
        mass = out.sum(axis=1, keepdims=True)
        out = np.where(mass > 0.0, out / np.where(mass > 0.0, mass, 1.0),
                       1.0 / self.n_classes)
        hit_rows, hit_cols = np.where(sq <= 1e-20)
        taken = set()
        for r, c in zip(hit_rows, hit_cols):
            # first hit wins: labeled rows precede unlabeled ones in the stack
            if r not in taken:
                taken.add(r)
                out[r] = self.probs[c]
        return out


class KernelLogisticModel:
    """Supervised control arm: logistic regression on Nystrom features of the
    labeled points only."""

    kind = "kernel_logistic"

    def __init__(self, nystrom, model: ProxyModel, n_classes: int):
        self.nystrom = nystrom
        self.model = model
        self.n_classes = n_classes

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return proxy_predict(self.model, self.nystrom.transform(X))


def _check_class_coverage(y: np.ndarray, n_classes: int) -> None:
    present = set(int(v) for v in y)
    missing = [c for c in range(n_classes) if c not in present]
    if missing:
        raise ValueError(f"labeled set is missing classes {missing}; "
                         "every class needs at least one seed label")


def ssl_train(X_labeled, y_labeled, X_unlabeled, cfg: SslConfig | None = None):
    """Fit the pseudo-labeler on labeled points plus the unlabeled pool."""
    cfg = cfg or SslConfig()
    Xl = np.atleast_2d(np.asarray(X_labeled, dtype=np.float64))
    Xu = np.asarray(X_unlabeled, dtype=np.float64)
    Xu = Xu.reshape(0, Xl.shape[1]) if Xu.size == 0 else np.atleast_2d(Xu)
    y = np.asarray(y_labeled, dtype=int)
    if Xl.shape[0] == 0:
        raise ValueError("labeled set must be non-empty")
    c = cfg.n_classes if cfg.n_classes is not None else int(y.max()) + 1
    _check_class_coverage(y, c)

    if cfg.kind == "kernel_logistic":
        return _fit_kernel_logistic(Xl, y, Xu, c, cfg)
    return _fit_label_propagation(Xl, y, Xu, c, cfg)


def _fit_label_propagation(Xl, y, Xu, c, cfg: SslConfig) -> LabelPropagationModel:
    X = np.vstack([Xl, Xu])
    n, nl = X.shape[0], Xl.shape[0]
    gamma = cfg.gamma if cfg.gamma is not None else knn_median_gamma(X)
    W = _affinity(X, X, gamma)
    np.fill_diagonal(W, 0.0)
    deg = W.sum(axis=1, keepdims=True)
    S = W / np.where(deg > 0.0, deg, 1.0)

    Y = np.zeros((n, c))
    Y[np.arange(nl), y] = 1.0
    P = Y.copy()
    iterations = 0
    deltas: list[float] = []
    for iterations in range(1, cfg.max_iter + 1):
        P_new = cfg.alpha * (S @ P) + (1.0 - cfg.alpha) * Y
        P_new[:nl] = Y[:nl]
        delta = float(np.max(np.abs(P_new - P)))
        deltas.append(delta)
        P = P_new
        if delta <= cfg.tol:
            break

    # Rows that received no mass (e.g. alpha == 0) fall back to one affinity
    # smoothing step of the seed labels before normalization.
    mass = P.sum(axis=1)
    if np.any(mass <= 0.0):
        smoothed = S @ Y
        P = np.where((mass <= 0.0)[:, None], smoothed, P)
        mass = P.sum(axis=1)
    probs = np.where((mass > 0.0)[:, None], P / np.where(mass > 0.0, mass, 1.0)[:, None],
                     1.0 / c)
    return LabelPropagationModel(fit_points=X, probs=probs, gamma=gamma,
                                 alpha=cfg.alpha, n_classes=c, iterations=iterations,
                                 delta_history=deltas)


def _fit_kernel_logistic(Xl, y, Xu, c, cfg: SslConfig) -> KernelLogisticModel:
    pool = np.vstack([Xl, Xu]) if (cfg.landmarks == "all" and Xu.size) else Xl
    spec = KernelSpec(kind="rbf", rbf_gamma=cfg.gamma if cfg.gamma is not None
                      else median_heuristic_gamma(pool))
    nm = build_nystrom(spec, pool, m=min(cfg.m, pool.shape[0]), rng_seed=cfg.rng_seed)
    ids = [f"l{i}" for i in range(Xl.shape[0])]
    state = PoolState(train_ids=ids, labels={s: int(v) for s, v in zip(ids, y)},
                      pool_ids=[], n_classes=c)
    source = VectorSource({s: Xl[i] for i, s in enumerate(ids)})
    model = train_proxy(state, source, nm, nr_it=cfg.nr_it, lam=cfg.lam,
                        rng_seed=cfg.rng_seed, augmented=False)
    return KernelLogisticModel(nystrom=nm, model=model, n_classes=c)


def pseudo_label(model, X_pool) -> np.ndarray:
    """Soft class distributions for pool points, one simplex row each."""
    probs = model.predict(np.atleast_2d(np.asarray(X_pool, dtype=np.float64)))
    return probs


def evaluate(model, X_test, y_test) -> float:
    """Argmax accuracy; ties resolve toward the lowest class index."""
    X_test = np.atleast_2d(np.asarray(X_test, dtype=np.float64))
    y_test = np.asarray(y_test, dtype=int)
    if X_test.shape[0] == 0:
        raise ValueError("test set must be non-empty")
    pred = np.argmax(model.predict(X_test), axis=1)
    return float(np.mean(pred == y_test))
