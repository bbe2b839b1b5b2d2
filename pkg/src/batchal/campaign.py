"""Active-learning campaign orchestration: seed the labeled pool, loop rounds
of SSL retraining, pseudo-labeling, batch selection, and oracle queries, and
aggregate per-seed round logs into reports."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .audio import AugmentationConfig
from .data import Dataset, PoolState, open_dataset, read_matrix_bank, write_matrix_bank
from .kernels import build_nystrom, median_heuristic_gamma
from .selection import (
    SelectionConfig,
    GreedyStep,
    select_batch_bilevel,
    select_batch_mixed,
    select_consistency,
    select_kcenter,
    select_max_entropy,
    select_uniform,
)
from .semisup import SslConfig, evaluate, pseudo_label, ssl_train

STRATEGIES = ("bilevel", "mixed", "uniform", "max_entropy", "kcenter", "consistency")


@dataclass
class CampaignConfig:
    dataset: dict | str
    strategy: str = "mixed"
    start_labels: int = 10
    end_labels: int = 60
    b: int = 10
    seeds: list[int] = field(default_factory=lambda: [0])
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    ssl: SslConfig = field(default_factory=SslConfig)
    augment: AugmentationConfig | None = None
    oracle: str = "simulated"
    out_dir: str | None = None
    checkpoint: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; pick one of {STRATEGIES}")
        if self.end_labels < self.start_labels:
            raise ValueError("end_labels must be at least start_labels")
        if (self.end_labels - self.start_labels) % self.b != 0:
            raise ValueError("label budget (end - start) must be divisible by b")
        if self.oracle not in ("simulated", "service"):
            raise ValueError(f"unknown oracle {self.oracle!r}")

    @property
    def rounds(self) -> int:
        return (self.end_labels - self.start_labels) // self.b


@dataclass
class RoundLog:
    round: int
    labeled: int
    accuracy: float
    pseudo_accuracy: float | None   # None when pool ground truth is unknown
    selected: list[str]
    wall_ms: float = 0.0
    trace: list[GreedyStep] = field(default_factory=list)

    def row(self) -> str:
        """Deterministic serialization; wall time is reported separately so
        repeated runs produce byte-identical logs."""
        sel = ";".join(self.selected)
        pacc = "" if self.pseudo_accuracy is None else repr(self.pseudo_accuracy)
        return f"{self.round},{self.labeled},{self.accuracy!r},{pacc},{sel}"


@dataclass
class ExperimentResult:
    strategy: str
    seeds: list[int]
    logs: dict[int, list[RoundLog]]  # seed -> per-round logs

    def accuracy_matrix(self) -> np.ndarray:
        return np.array([[log.accuracy for log in self.logs[s]] for s in self.seeds])

    def mean_std(self) -> tuple[np.ndarray, np.ndarray]:
        acc = self.accuracy_matrix()
        return acc.mean(axis=0), acc.std(axis=0)

    def labeled_counts(self) -> list[int]:
        return [log.labeled for log in self.logs[self.seeds[0]]]

    def round_log_text(self, seed: int) -> str:
        return "\n".join(log.row() for log in self.logs[seed]) + "\n"


def seed_initial_pool(dataset: Dataset, start_labels: int, rng_seed: int = 0) -> PoolState:
    """Stratified seeding from the train split: one random sample per class
    first, the remainder uniform; everything else becomes the pool."""
    if start_labels < dataset.n_classes:
        raise ValueError(f"start_labels {start_labels} < class count {dataset.n_classes}")
    rng = np.random.default_rng(rng_seed)
    by_class: dict[int, list[str]] = {c: [] for c in range(dataset.n_classes)}
    for sid in dataset.train_ids:
        by_class[dataset.labels[sid]].append(sid)
    empty = [c for c, members in by_class.items() if not members]
    if empty:
        raise ValueError(f"classes with no samples in the train split: {empty}")
    seeded: list[str] = []
    for c in sorted(by_class):
        members = sorted(by_class[c])
        seeded.append(members[int(rng.integers(len(members)))])
    rest = sorted(set(dataset.train_ids) - set(seeded))
    extra = start_labels - dataset.n_classes
    if extra:
        picks = rng.choice(len(rest), size=extra, replace=False)
        seeded += [rest[int(i)] for i in picks]
    pool = sorted(set(dataset.train_ids) - set(seeded))
    return PoolState(train_ids=sorted(seeded),
                     labels={sid: dataset.labels[sid] for sid in seeded},
                     pool_ids=pool, n_classes=dataset.n_classes)


def _resolve_gamma(cfg: SelectionConfig, feats: np.ndarray) -> float:
    if cfg.kernel == "rbf" and cfg.rbf_gamma is None:
        return median_heuristic_gamma(feats)
    return cfg.rbf_gamma or 1.0


def prepare_round(dataset: Dataset, state: PoolState, model, sel_cfg: SelectionConfig,
                  round_seed: int):
    """Pseudo-label the pool with the current model and rebuild the Nystrom map
    on the present labeled-plus-pool features."""
    pool_feats = dataset.feature_matrix(state.pool_ids)
    probs = pseudo_label(model, pool_feats)
    state = state.copy()
    state.pseudo_labels = {sid: probs[i] for i, sid in enumerate(state.pool_ids)}
    truth = dataset.label_vector(state.pool_ids)
    pseudo_acc = float(np.mean(np.argmax(probs, axis=1) == truth))

    all_ids = list(state.train_ids) + list(state.pool_ids)
    feats = dataset.feature_matrix(all_ids)
    spec = sel_cfg.kernel_spec(fallback_gamma=_resolve_gamma(sel_cfg, feats))
    nm = build_nystrom(spec, feats, m=min(sel_cfg.m, feats.shape[0]), rng_seed=round_seed)
    return state, nm, pseudo_acc


def run_selector(strategy: str, state: PoolState, dataset: Dataset, model,
                 nm, sel_cfg: SelectionConfig, source,
                 trace: list[GreedyStep] | None = None) -> list[str]:
    if sel_cfg.warmup_labels and len(state.train_ids) < sel_cfg.warmup_labels:
        return select_uniform(state, sel_cfg.b, rng_seed=sel_cfg.rng_seed)
    if strategy == "bilevel":
        return select_batch_bilevel(state, sel_cfg, nm, source, trace=trace)
    if strategy == "mixed":
        return select_batch_mixed(state, sel_cfg, nm, source, trace=trace)
    if strategy == "uniform":
        return select_uniform(state, sel_cfg.b, rng_seed=sel_cfg.rng_seed)
    if strategy == "max_entropy":
        return select_max_entropy(state, model, source, sel_cfg.b,
                                  rng_seed=sel_cfg.rng_seed)
    if strategy == "consistency":
        return select_consistency(state, model, source, sel_cfg.b,
                                  rng_seed=sel_cfg.rng_seed)
    if strategy == "kcenter":
        ids = list(state.train_ids) + list(state.pool_ids)
        Z = nm.transform(dataset.feature_matrix(ids))
        return select_kcenter(state, {sid: Z[i] for i, sid in enumerate(ids)}, sel_cfg.b)
    raise ValueError(f"unknown strategy {strategy!r}")


def _campaign_seeds(base_seed: int, rounds: int) -> np.ndarray:
    return np.random.default_rng((base_seed, 0xA11CE)).integers(0, 2 ** 62,
                                                                size=(rounds + 1, 3))


def run_single_seed(cfg: CampaignConfig, dataset: Dataset, seed: int,
                    checkpoint_dir: Path | None = None) -> list[RoundLog]:
    """One campaign replicate: evaluate at the seed pool, then run rounds of
    pseudo-label / select / query / retrain, logging accuracy each round."""
    per_round = _campaign_seeds(seed, cfg.rounds)
    test_X = dataset.feature_matrix(dataset.test_ids)
    test_y = dataset.label_vector(dataset.test_ids)
    source = dataset.source(cfg.augment)

    start_round = 0
    logs: list[RoundLog] = []
    state = None
    if checkpoint_dir is not None and (checkpoint_dir / "state.json").exists():
        state, logs = load_checkpoint(checkpoint_dir, dataset)
        start_round = len(logs) - 1
    if state is None:
        state = seed_initial_pool(dataset, cfg.start_labels, rng_seed=seed)

    ssl_cfg = SslConfig(**{**cfg.ssl.__dict__, "n_classes": dataset.n_classes})
    model = ssl_train(dataset.feature_matrix(state.train_ids),
                      dataset.label_vector(state.train_ids),
                      dataset.feature_matrix(state.pool_ids), ssl_cfg)

    if start_round == 0:
        t0 = time.perf_counter()
        acc = evaluate(model, test_X, test_y)
        probs = pseudo_label(model, dataset.feature_matrix(state.pool_ids))
        pseudo_acc = float(np.mean(np.argmax(probs, axis=1)
                                   == dataset.label_vector(state.pool_ids)))
        logs.append(RoundLog(round=0, labeled=len(state.train_ids), accuracy=acc,
                             pseudo_accuracy=pseudo_acc, selected=[],
                             wall_ms=1000.0 * (time.perf_counter() - t0)))
        if checkpoint_dir is not None:
            save_checkpoint(checkpoint_dir, state, logs)

    for r in range(start_round + 1, cfg.rounds + 1):
        t0 = time.perf_counter()
        sel_seed = int(per_round[r][0])
        sel_cfg = SelectionConfig(**{**cfg.selection.__dict__,
                                     "b": cfg.b, "rng_seed": sel_seed})
        work, nm, pseudo_acc = prepare_round(dataset, state, model, sel_cfg,
                                             round_seed=int(per_round[r][1]))
        trace: list[GreedyStep] = []
        batch = run_selector(cfg.strategy, work, dataset, model, nm, sel_cfg,
                             source, trace=trace)
        oracle_labels = {sid: dataset.labels[sid] for sid in batch}
        state = work.with_batch(batch).commit_batch(oracle_labels)
        model = ssl_train(dataset.feature_matrix(state.train_ids),
                          dataset.label_vector(state.train_ids),
                          dataset.feature_matrix(state.pool_ids), ssl_cfg)
        acc = evaluate(model, test_X, test_y)
        logs.append(RoundLog(round=r, labeled=len(state.train_ids), accuracy=acc,
                             pseudo_accuracy=pseudo_acc, selected=list(batch),
                             wall_ms=1000.0 * (time.perf_counter() - t0),
                             trace=trace))
        if checkpoint_dir is not None:
            save_checkpoint(checkpoint_dir, state, logs)
    return logs


def run_campaign(cfg: CampaignConfig) -> ExperimentResult:
    """Run every seed of a campaign and collect per-round logs."""
    dataset = open_dataset(cfg.dataset)
    if cfg.oracle == "simulated":
        unlabeled = [sid for sid in dataset.train_ids if sid not in dataset.labels]
        if unlabeled:
            raise ValueError(f"simulated oracle needs ground truth for every pool "
                             f"point; missing for {unlabeled[:5]}")
    out = Path(cfg.out_dir) if cfg.out_dir else None
    logs: dict[int, list[RoundLog]] = {}
    for seed in cfg.seeds:
        ckpt = (out / f"seed{seed}") if (out and cfg.checkpoint) else None
        if ckpt is not None:
            ckpt.mkdir(parents=True, exist_ok=True)
        logs[seed] = run_single_seed(cfg, dataset, seed, checkpoint_dir=ckpt)
    result = ExperimentResult(strategy=cfg.strategy, seeds=list(cfg.seeds), logs=logs)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_result(out, result)
    return result


# ------------------------------------------------------------------ reporting

def write_result(out_dir: Path, result: ExperimentResult) -> None:
    out_dir = Path(out_dir)
    for seed in result.seeds:
        (out_dir / f"rounds_seed{seed}.csv").write_text(result.round_log_text(seed))
        timing = "\n".join(f"{log.round},{log.wall_ms:.3f}"
                           for log in result.logs[seed]) + "\n"
        (out_dir / f"timing_seed{seed}.csv").write_text(timing)
        trace_lines = [step.record() for log in result.logs[seed] for step in log.trace]
        if trace_lines:
            (out_dir / f"trace_seed{seed}.csv").write_text("\n".join(trace_lines) + "\n")
    meta = {"strategy": result.strategy, "seeds": result.seeds}
    (out_dir / "result.json").write_text(json.dumps(meta, indent=2))


def load_result(out_dir: Path) -> ExperimentResult:
    out_dir = Path(out_dir)
    meta = json.loads((out_dir / "result.json").read_text())
    logs: dict[int, list[RoundLog]] = {}
    for seed in meta["seeds"]:
        rows = []
        for line in (out_dir / f"rounds_seed{seed}.csv").read_text().splitlines():
            rnd, labeled, acc, pacc, sel = line.split(",")
            rows.append(RoundLog(round=int(rnd), labeled=int(labeled),
                                 accuracy=float(acc),
                                 pseudo_accuracy=float(pacc) if pacc else None,
                                 selected=sel.split(";") if sel else []))
        logs[seed] = rows
    return ExperimentResult(strategy=meta["strategy"], seeds=meta["seeds"], logs=logs)


def report(results: list[ExperimentResult]) -> str:
    """Summary plus plot-ready series as delimited text, strategies sorted by
    final mean accuracy (best first)."""
    ordered = sorted(results, key=lambda r: -r.mean_std()[0][-1])
    lines = ["# summary", "strategy,final_mean,final_std"]
    for res in ordered:
        mean, std = res.mean_std()
        lines.append(f"{res.strategy},{float(mean[-1])!r},{float(std[-1])!r}")
    lines += ["", "# series", "strategy,round,labeled,mean,std"]
    for res in ordered:
        mean, std = res.mean_std()
        for i, labeled in enumerate(res.labeled_counts()):
            lines.append(f"{res.strategy},{i},{labeled},{float(mean[i])!r},{float(std[i])!r}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> tuple[dict[str, tuple[float, float]], dict[str, list[tuple]]]:
    summary: dict[str, tuple[float, float]] = {}
    series: dict[str, list[tuple]] = {}
    section = None
    for line in text.splitlines():
        if not line or line.startswith("strategy,"):
            continue
        if line.startswith("#"):
            section = line[1:].strip()
            continue
        parts = line.split(",")
        if section == "summary":
            summary[parts[0]] = (float(parts[1]), float(parts[2]))
        else:
            series.setdefault(parts[0], []).append(
                (int(parts[1]), int(parts[2]), float(parts[3]), float(parts[4])))
    return summary, series


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(ckpt_dir: Path, state: PoolState, logs: list[RoundLog]) -> None:
    ckpt_dir = Path(ckpt_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "train_ids": state.train_ids,
        "labels": {k: int(v) for k, v in state.labels.items()},
        "pool_ids": state.pool_ids,
        "n_classes": state.n_classes,
        "batch": state.batch,
        "logs": [
            {"round": l.round, "labeled": l.labeled, "accuracy": l.accuracy,
             "pseudo_accuracy": l.pseudo_accuracy, "selected": l.selected,
             "wall_ms": l.wall_ms}
            for l in logs
        ],
    }
    (ckpt_dir / "state.json").write_text(json.dumps(payload, indent=2))
    if state.pseudo_labels:
        ids = sorted(state.pseudo_labels)
        mat = np.stack([state.pseudo_labels[sid] for sid in ids])
        write_matrix_bank(ckpt_dir / "pseudo.bin", mat[:, None, :])
        (ckpt_dir / "pseudo_ids.json").write_text(json.dumps(ids))


def load_checkpoint(ckpt_dir: Path, dataset: Dataset) -> tuple[PoolState, list[RoundLog]]:
    ckpt_dir = Path(ckpt_dir)
    payload = json.loads((ckpt_dir / "state.json").read_text())
    pseudo: dict[str, np.ndarray] = {}
    if (ckpt_dir / "pseudo.bin").exists():
        ids = json.loads((ckpt_dir / "pseudo_ids.json").read_text())
        mat = read_matrix_bank(ckpt_dir / "pseudo.bin")[:, 0, :]
        pseudo = {sid: mat[i] for i, sid in enumerate(ids)}
    state = PoolState(train_ids=payload["train_ids"], labels=payload["labels"],
                      pool_ids=payload["pool_ids"], n_classes=payload["n_classes"],
                      pseudo_labels=pseudo, batch=payload["batch"])
    logs = [RoundLog(round=l["round"], labeled=l["labeled"], accuracy=l["accuracy"],
                     pseudo_accuracy=l["pseudo_accuracy"], selected=l["selected"],
                     wall_ms=l["wall_ms"]) for l in payload["logs"]]
    return state, logs


def config_from_json(payload: dict) -> CampaignConfig:
    """Build a campaign config from the documented JSON schema."""
    data = dict(payload)
    sel = SelectionConfig(**data.pop("selection", {}))
    ssl = SslConfig(**data.pop("ssl", {}))
    aug = data.pop("augment", None)
    aug_cfg = None
    if aug is not None:
        noise = aug.pop("noise_bank", [])
        aug_cfg = AugmentationConfig(**aug)
        aug_cfg.noise_bank = noise
    return CampaignConfig(selection=sel, ssl=ssl, augment=aug_cfg, **data)
