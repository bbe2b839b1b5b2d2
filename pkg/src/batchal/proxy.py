"""Strongly convex proxy: multinomial logistic regression on Nystrom features
with weight decay. Loss/gradient/Hessian-vector products, a conjugate-gradient
solver, and a minibatch Adam trainer."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import PoolState, one_hot
from .kernels import NystromMap

PROB_FLOOR = 1e-12
CG_TOL = 1e-10
ADAM_LR = 1e-3
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class ProxyModel:
    """Weight matrix (m x c) of the softmax-linear predictor plus its ridge
    coefficient."""

    w: np.ndarray
    lam: float = 1e-4

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        if self.w.ndim != 2:
            raise ValueError("weights must be an (m, c) matrix")
        if not np.all(np.isfinite(self.w)):
            raise ValueError("weights contain non-finite entries")
        if not self.lam > 0:
            raise ValueError("ridge coefficient must be positive")

    @property
    def n_classes(self) -> int:
        return self.w.shape[1]


def predict(model: ProxyModel | np.ndarray, z: np.ndarray) -> np.ndarray:
    """Class probabilities softmax(w^T z); `z` may be a vector or row matrix."""
    w = model.w if isinstance(model, ProxyModel) else model
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        return softmax(z @ w)
    return softmax(z @ w, axis=1)


def _check_simplex(Y: np.ndarray, what: str) -> None:
    if Y.size == 0:
        return
    if np.any(Y < -1e-8) or np.any(np.abs(Y.sum(axis=1) - 1.0) > 1e-8):
        raise ValueError(f"{what} must lie on the probability simplex")


@dataclass
class InnerObjective:
    """Training loss on the labeled set plus the pseudo-labeled batch:
    cross-entropy summed over terms plus lam * ||w||^2."""

    z_labeled: np.ndarray
    y_labeled: np.ndarray
    z_pseudo: np.ndarray
    y_pseudo: np.ndarray
    lam: float = 1e-4
    _z: np.ndarray = field(init=False, repr=False)
    _y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        zl = np.atleast_2d(np.asarray(self.z_labeled, dtype=np.float64))
        zp = np.atleast_2d(np.asarray(self.z_pseudo, dtype=np.float64))
        yl = np.atleast_2d(np.asarray(self.y_labeled, dtype=np.float64))
        yp = np.atleast_2d(np.asarray(self.y_pseudo, dtype=np.float64))
        _check_simplex(yl, "labels")
        _check_simplex(yp, "soft labels")
        if not self.lam > 0:
            raise ValueError("lam must be positive for strong convexity")
        parts_z = [a for a in (zl, zp) if a.size]
        parts_y = [a for a in (yl, yp) if a.size]
        self._z = np.vstack(parts_z) if parts_z else np.zeros((0, 0))
        self._y = np.vstack(parts_y) if parts_y else np.zeros((0, 0))

    @property
    def n_terms(self) -> int:
        return self._z.shape[0]

    def value(self, w: np.ndarray) -> float:
        base = 0.0
        if self.n_terms:
            p = softmax(self._z @ w, axis=1)
            base = -float(np.sum(self._y * np.log(np.maximum(p, PROB_FLOOR))))
        return base + self.lam * float(np.sum(w * w))

    def grad(self, w: np.ndarray) -> np.ndarray:
        g = 2.0 * self.lam * w
        if self.n_terms:
            p = softmax(self._z @ w, axis=1)
            g = g + self._z.T @ (p - self._y)
        return g

    def hvp(self, w: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = 2.0 * self.lam * v
        if self.n_terms:
            p = softmax(self._z @ w, axis=1)
            a = self._z @ v
            t = p * a - p * np.sum(p * a, axis=1, keepdims=True)
            out = out + self._z.T @ t
        return out


@dataclass
class UpperObjective:
    """Generalization proxy: cross-entropy over the labeled set (true labels)
    and the whole pool (pseudo-labels); no ridge term."""

    z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.z = np.atleast_2d(np.asarray(self.z, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        _check_simplex(self.y, "targets")
        if self.z.shape[0] != self.y.shape[0]:
            raise ValueError("feature and target counts differ")

    def value(self, w: np.ndarray) -> float:
        p = softmax(self.z @ w, axis=1)
        return -float(np.sum(self.y * np.log(np.maximum(p, PROB_FLOOR))))

    def grad(self, w: np.ndarray) -> np.ndarray:
        p = softmax(self.z @ w, axis=1)
        return self.z.T @ (p - self.y)


def objective_value(obj: InnerObjective, w: np.ndarray) -> float:
    return obj.value(w)


def objective_grad(obj: InnerObjective, w: np.ndarray) -> np.ndarray:
    return obj.grad(w)


def hvp(obj: InnerObjective, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    return obj.hvp(w, v)


def cg_solve(apply_h, g: np.ndarray, steps: int = 30, tol: float = CG_TOL,
             on_iterate=None) -> np.ndarray:
    """Approximately solve H v = g for symmetric positive-definite H given only
    its action, treating matrices as flat vectors under the Frobenius inner
    product. Stops after `steps` iterations or when the relative residual drops
    to `tol`."""
    g = np.asarray(g, dtype=np.float64)
    x = np.zeros_like(g)
    r = g.copy()
    g_norm = float(np.sqrt(np.sum(g * g)))
    if g_norm == 0.0:
        return x
    p = r.copy()
    rs = float(np.sum(r * r))
    for it in range(1, steps + 1):
        hp = apply_h(p)
        if not np.all(np.isfinite(hp)):
            raise ValueError(f"non-finite operator output in CG at iteration {it}")
        php = float(np.sum(p * hp))
        if php <= 0.0:
            raise ValueError(f"operator not positive definite in CG at iteration {it}")
        alpha = rs / php
        x = x + alpha * p
        r = r - alpha * hp
        if not np.all(np.isfinite(x)):
            raise ValueError(f"non-finite iterate in CG at iteration {it}")
        if on_iterate is not None:
            on_iterate(it, x)
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= tol * g_norm:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def cg_residual(apply_h, g: np.ndarray, v: np.ndarray) -> float:
    r = g - apply_h(v)
    g_norm = float(np.sqrt(np.sum(g * g)))
    if g_norm == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(r * r))) / g_norm


def build_inner_objective(state: PoolState, source, nm: NystromMap | None,
                          lam: float) -> InnerObjective:
    """Inner objective over the labeled set plus the current batch, using
    unaugmented base features."""
    zl = _feature_rows(state.train_ids, source, nm)
    yl = np.stack([one_hot(state.labels[s], state.n_classes) for s in state.train_ids]) \
        if state.train_ids else np.zeros((0, state.n_classes))
    zp = _feature_rows(state.batch, source, nm)
    yp = np.stack([state.pseudo_labels[s] for s in state.batch]) \
        if state.batch else np.zeros((0, state.n_classes))
    return InnerObjective(zl, yl, zp, yp, lam=lam)


def build_upper_objective(state: PoolState, source, nm: NystromMap | None) -> UpperObjective:
    """Upper objective over the labeled set (true labels) and the entire pool
    (current pseudo-labels)."""
    ids = list(state.train_ids) + list(state.pool_ids)
    z = _feature_rows(ids, source, nm)
    y = np.stack(
        [one_hot(state.labels[s], state.n_classes) for s in state.train_ids]
        + [state.pseudo_labels[s] for s in state.pool_ids]
    )
    return UpperObjective(z, y)


def _feature_rows(ids, source, nm: NystromMap | None, rng=None,
                  augmented: bool = False) -> np.ndarray:
    if not ids:
        m = nm.m if nm is not None else 0
        return np.zeros((0, m))
    if augmented:
        raw = np.stack([source.variant(sid, rng) for sid in ids])
    else:
        raw = np.stack([source.vector(sid) for sid in ids])
    return nm.transform(raw) if nm is not None else raw


def train_proxy(state: PoolState, source, nm: NystromMap | None, *,
                init_w: np.ndarray | None = None, nr_it: int = 1000,
                batch: int = 64, lam: float = 1e-4, lr: float = ADAM_LR,
                rng_seed: int = 0, augmented: bool = True,
                on_step=None) -> ProxyModel:
    """Minibatch Adam on the inner objective over the labeled set plus the
    current batch. Each drawn sample is augmented before feature mapping when
    the source supports it; gradients are rescaled to estimate the summed
    objective. Deterministic for a given seed; warm-startable via `init_w`."""
    ids = list(state.train_ids) + list(state.batch)
    if not ids:
        raise ValueError("cannot train the proxy on an empty labeled set")
    targets = np.stack(
        [one_hot(state.labels[s], state.n_classes) for s in state.train_ids]
        + [state.pseudo_labels[s] for s in state.batch]
    )
    rng = np.random.default_rng(rng_seed)
    n = len(ids)

    static_z = None
    if not augmented:
        static_z = _feature_rows(ids, source, nm)
    m = static_z.shape[1] if static_z is not None else \
        _feature_rows(ids[:1], source, nm).shape[1]

    if init_w is not None:
        w = np.array(init_w, dtype=np.float64)
        if w.shape != (m, state.n_classes):
            raise ValueError(f"init_w has shape {w.shape}, expected {(m, state.n_classes)}")
    else:
        w = 0.01 * rng.standard_normal((m, state.n_classes))

    m1 = np.zeros_like(w)
    m2 = np.zeros_like(w)
    b1, b2 = ADAM_BETAS
    take = min(batch, n)
    for t in range(1, nr_it + 1):
        idx = rng.choice(n, size=take, replace=False)
        if static_z is not None:
            z = static_z[idx]
        else:
            z = _feature_rows([ids[i] for i in idx], source, nm, rng=rng, augmented=True)
        y = targets[idx]
        p = softmax(z @ w, axis=1)
        grad = (n / take) * (z.T @ (p - y)) + 2.0 * lam * w
        m1 = b1 * m1 + (1.0 - b1) * grad
        m2 = b2 * m2 + (1.0 - b2) * grad * grad
        mhat = m1 / (1.0 - b1 ** t)
        vhat = m2 / (1.0 - b2 ** t)
        w = w - lr * mhat / (np.sqrt(vhat) + ADAM_EPS)
        if on_step is not None:
            on_step(t, w)
    return ProxyModel(w=w, lam=lam)


def save_proxy(model: ProxyModel, path_prefix, meta: dict | None = None) -> None:
    import json
    from pathlib import Path

    from .data import write_matrix_bank

    prefix = Path(path_prefix)
    write_matrix_bank(prefix.with_suffix(".w.bin"), model.w[None])
    record = {"lam": model.lam, "m": model.w.shape[0], "c": model.w.shape[1]}
    record.update(meta or {})
    prefix.with_suffix(".json").write_text(json.dumps(record))


def load_proxy(path_prefix) -> ProxyModel:
    import json
    from pathlib import Path

    from .data import read_matrix_bank

    prefix = Path(path_prefix)
    w = read_matrix_bank(prefix.with_suffix(".w.bin"))[0]
    meta = json.loads(prefix.with_suffix(".json").read_text())
    return ProxyModel(w=w, lam=float(meta["lam"]))
