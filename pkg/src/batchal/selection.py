"""Batch selection strategies: greedy bilevel coreset selection on the proxy
model, the 90/10 mixed variant, and uniform / max-entropy / k-center /
prediction-variance baselines."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import PoolState
from .kernels import KernelSpec, NystromMap
from .proxy import (
    InnerObjective,
    UpperObjective,
    build_inner_objective,
    build_upper_objective,
    cg_residual,
    cg_solve,
    predict,
    softmax,
    train_proxy,
)


@dataclass
class SelectionConfig:
    """Knobs for one selection round."""

    b: int = 10
    nr_it: int = 1000
    lam: float = 1e-4
    cg_steps: int = 30
    m: int = 256                    # Nystrom landmark count (clamped to pool size)
    random_fraction: float = 0.10
    rng_seed: int = 0
    batch_size: int = 64
    lr: float = 1e-3
    kernel: str = "rbf"
    rbf_gamma: float | None = None  # None -> median heuristic at build time
    ntk_depth: int = 3
    cold_start: bool = False        # re-initialize proxy weights at every greedy step
    flip_score_sign: bool = False   # ablation: negate the greedy score
    warmup_labels: int = 0          # use uniform selection until this many labels exist
    train_augmented: bool = True

    def __post_init__(self):
        if self.b < 1:
            raise ValueError("batch size b must be at least 1")
        if not 0.0 <= self.random_fraction <= 1.0:
            raise ValueError("random_fraction must lie in [0, 1]")

    def kernel_spec(self, fallback_gamma: float = 1.0) -> KernelSpec:
        if self.kernel == "rbf":
            gamma = self.rbf_gamma if self.rbf_gamma is not None else fallback_gamma
            return KernelSpec(kind="rbf", rbf_gamma=gamma)
        return KernelSpec(kind="relu_ntk", ntk_depth=self.ntk_depth)


def _sorted_candidates(state: PoolState, chosen: list[str]) -> list[str]:
    taken = set(chosen)
    return sorted(sid for sid in state.pool_ids if sid not in taken)


def _argmax_lowest_id(ids: list[str], scores: np.ndarray) -> str:
    # ids are sorted, so the first maximum is the lowest id among ties
    return ids[int(np.argmax(scores))]


def selection_direction(inner: InnerObjective, upper: UpperObjective,
                        w: np.ndarray, cg_steps: int = 30) -> tuple[np.ndarray, float]:
    """Solve H v = grad G at the trained weights; returns (v, relative residual)."""
    g = upper.grad(w)
    apply_h = lambda u: inner.hvp(w, u)
    v = cg_solve(apply_h, g, steps=cg_steps)
    return v, cg_residual(apply_h, g, v)


def candidate_scores(z: np.ndarray, y_soft: np.ndarray, w: np.ndarray,
                     v: np.ndarray) -> np.ndarray:
    """Greedy score per candidate: Frobenius inner product of the candidate's
    loss gradient z (p - y)^T with the solved direction v."""
    z = np.atleast_2d(z)
    y_soft = np.atleast_2d(y_soft)
    p = softmax(z @ w, axis=1)
    return np.sum((p - y_soft) * (z @ v), axis=1)


def selection_score(z_x: np.ndarray, y_x: np.ndarray, model, inner: InnerObjective,
                    upper: UpperObjective, cg_steps: int = 30) -> float:
    """Score of one candidate at the trained proxy weights."""
    w = model.w if hasattr(model, "w") else np.asarray(model)
    v, _ = selection_direction(inner, upper, w, cg_steps)
    return float(candidate_scores(z_x[None, :], y_x[None, :], w, v)[0])


@dataclass
class GreedyStep:
    """One greedy addition, kept for the selection trace."""

    step: int
    chosen: str
    score: float
    cg_residual: float

    def record(self) -> str:
        return f"{self.step},{self.chosen},{self.score!r},{self.cg_residual!r}"


def _require_pseudo_labels(state: PoolState) -> None:
    missing = [sid for sid in state.pool_ids if sid not in state.pseudo_labels]
    if missing:
        raise ValueError(f"pool ids without pseudo-labels: {missing[:5]}")


def _greedy_step_seeds(rng_seed: int, b: int) -> np.ndarray:
    return np.random.default_rng(rng_seed).integers(0, 2 ** 62, size=b)


def select_batch_bilevel(state: PoolState, cfg: SelectionConfig, nm: NystromMap | None,
                         source, trace: list[GreedyStep] | None = None) -> list[str]:
    """Greedy forward selection: retrain the proxy on the labeled set plus the
    batch so far, solve for the upper-gradient direction through the inner
    Hessian, and add the highest-scoring pool point. Repeats b times."""
    if len(state.pool_ids) < cfg.b:
        raise ValueError(f"pool has {len(state.pool_ids)} points, need {cfg.b}")
    _require_pseudo_labels(state)

    step_seeds = _greedy_step_seeds(cfg.rng_seed, cfg.b)
    chosen: list[str] = []
    w = None
    for step in range(cfg.b):
        work = state.with_batch(list(state.batch) + chosen)
        model = train_proxy(
            work, source, nm,
            init_w=None if (cfg.cold_start or w is None) else w,
            nr_it=cfg.nr_it, batch=cfg.batch_size, lam=cfg.lam, lr=cfg.lr,
            rng_seed=int(step_seeds[step]), augmented=cfg.train_augmented,
        )
        w = model.w
        inner = build_inner_objective(work, source, nm, cfg.lam)
        upper = build_upper_objective(work, source, nm)
        v, residual = selection_direction(inner, upper, w, cfg.cg_steps)

        cands = _sorted_candidates(state, chosen)
        raw = np.stack([source.vector(sid) for sid in cands])
        z = nm.transform(raw) if nm is not None else raw
        y = np.stack([state.pseudo_labels[sid] for sid in cands])
        scores = candidate_scores(z, y, w, v)
        if cfg.flip_score_sign:
            scores = -scores
        pick = _argmax_lowest_id(cands, scores)
        chosen.append(pick)
        if trace is not None:
            trace.append(GreedyStep(step=step, chosen=pick,
                                    score=float(scores[cands.index(pick)]),
                                    cg_residual=residual))
    return chosen


def select_batch_mixed(state: PoolState, cfg: SelectionConfig, nm: NystromMap | None,
                       source, trace: list[GreedyStep] | None = None) -> list[str]:
    """90/10 split (by default): most of the batch greedily, the remainder
    uniformly at random from the untouched pool."""
    n_greedy = int(math.floor(cfg.b * (1.0 - cfg.random_fraction) + 0.5))
    n_random = cfg.b - n_greedy
    if len(state.pool_ids) < cfg.b:
        raise ValueError(f"pool has {len(state.pool_ids)} points, need {cfg.b}")
    chosen: list[str] = []
    if n_greedy:
        sub = SelectionConfig(**{**cfg.__dict__, "b": n_greedy})
        chosen = select_batch_bilevel(state, sub, nm, source, trace=trace)
    if n_random:
        rng = np.random.default_rng((cfg.rng_seed, 0x9E3779B9))
        rest = _sorted_candidates(state, chosen)
        picks = rng.choice(len(rest), size=n_random, replace=False)
        chosen = chosen + [rest[int(i)] for i in picks]
    return chosen


def select_uniform(state: PoolState, b: int, rng_seed: int = 0) -> list[str]:
    """Uniform sample without replacement from the pool."""
    if len(state.pool_ids) < b:
        raise ValueError(f"pool has {len(state.pool_ids)} points, need {b}")
    rng = np.random.default_rng(rng_seed)
    ids = sorted(state.pool_ids)
    picks = rng.choice(len(ids), size=b, replace=False)
    return [ids[int(i)] for i in picks]


def _variant_predictions(model, source, sid: str, n_aug: int,
                         rng: np.random.Generator) -> np.ndarray:
    feats = np.stack([source.variant(sid, rng) for _ in range(n_aug)])
    return model.predict(feats)


def select_max_entropy(state: PoolState, model, source, b: int, n_aug: int = 2,
                       rng_seed: int = 0) -> list[str]:
    """Top-b pool points by Shannon entropy of the prediction averaged over
    augmented variants; ties resolve toward the lowest id."""
    if len(state.pool_ids) < b:
        raise ValueError(f"pool has {len(state.pool_ids)} points, need {b}")
    rng = np.random.default_rng(rng_seed)
    ids = sorted(state.pool_ids)
    scores = []
    for sid in ids:
        p = _variant_predictions(model, source, sid, n_aug, rng).mean(axis=0)
        nz = p[p > 0.0]
        scores.append(float(-np.sum(nz * np.log(nz))))
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [ids[i] for i in order[:b]]


def select_kcenter(state: PoolState, embeddings: dict[str, np.ndarray], b: int) -> list[str]:
    """Greedy farthest-first traversal seeded with the labeled points as
    centers; each pick maximizes the distance to its nearest center."""
    if len(state.pool_ids) < b:
        raise ValueError(f"pool has {len(state.pool_ids)} points, need {b}")
    missing = [sid for sid in list(state.train_ids) + list(state.pool_ids)
               if sid not in embeddings]
    if missing:
        raise ValueError(f"missing embeddings for ids: {missing[:5]}")
    if not state.train_ids:
        raise ValueError("k-center needs at least one labeled point as a center")
    pool = sorted(state.pool_ids)
    P = np.stack([np.asarray(embeddings[sid], dtype=np.float64) for sid in pool])
    centers = np.stack([np.asarray(embeddings[sid], dtype=np.float64)
                        for sid in state.train_ids])
    d = np.min(np.linalg.norm(P[:, None, :] - centers[None, :, :], axis=2), axis=1)
    chosen: list[str] = []
    available = np.ones(len(pool), dtype=bool)
    for _ in range(b):
        masked = np.where(available, d, -np.inf)
        i = int(np.argmax(masked))
        chosen.append(pool[i])
        available[i] = False
        d = np.minimum(d, np.linalg.norm(P - P[i], axis=1))
    return chosen


def select_consistency(state: PoolState, model, source, b: int, n_aug: int = 5,
                       rng_seed: int = 0) -> list[str]:
    """Top-b pool points by mean per-class variance of predictions across
    augmented variants; ties resolve toward the lowest id."""
    if len(state.pool_ids) < b:
        raise ValueError(f"pool has {len(state.pool_ids)} points, need {b}")
    rng = np.random.default_rng(rng_seed)
    ids = sorted(state.pool_ids)
    scores = []
    for sid in ids:
        preds = _variant_predictions(model, source, sid, n_aug, rng)
        scores.append(float(preds.var(axis=0).mean()))
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [ids[i] for i in order[:b]]
