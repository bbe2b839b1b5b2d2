"""Dataset handling: manifests, the binary feature cache, labeled/unlabeled
pool state, synthetic benchmark generators, and feature sources that feed the
proxy trainer (with or without on-the-fly augmentation)."""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import (
    AudioClip,
    AugmentationConfig,
    CLIP_SAMPLES,
    TARGET_RATE,
    augment,
    ingest_wav,
    mel_spectrogram,
)
from .kernels import NystromMap, KernelSpec, nystrom_from_landmarks

CACHE_MAGIC = b"BALF"
_HEADER = struct.Struct("<4siii")  # magic, count, rows, cols


# ---------------------------------------------------------------- binary cache

def write_matrix_bank(path, arrays: np.ndarray) -> None:
    """Write a (count, rows, cols) float array as the flat binary cache format:
    a 16-byte header (magic, count, rows, cols as little-endian int32) followed
    by row-major float32 data."""
    arr = np.asarray(arrays, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    if arr.ndim != 3:
        raise ValueError("expected an array of shape (count, rows, cols)")
    count, rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, count, rows, cols))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_matrix_bank(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"truncated cache header in {path}")
        magic, count, rows, cols = _HEADER.unpack(head)
        if magic != CACHE_MAGIC:
            raise ValueError(f"bad magic bytes in {path}")
        data = np.frombuffer(fh.read(), dtype="<f4")
    expected = count * rows * cols
    if data.size != expected:
        raise ValueError(f"cache payload size mismatch in {path}: {data.size} vs {expected}")
    return data.reshape(count, rows, cols).astype(np.float64)


def write_sidecar(path, ids: list[str], labels: list[int | None]) -> None:
    """Index -> id/label manifest accompanying a matrix bank."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, (sid, lab) in enumerate(zip(ids, labels)):
            writer.writerow([i, sid, "" if lab is None else int(lab)])


def read_sidecar(path) -> tuple[list[str], list[int | None]]:
    ids: list[str] = []
    labels: list[int | None] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            ids.append(row[1])
            labels.append(int(row[2]) if row[2] != "" else None)
    return ids, labels


# ------------------------------------------------------------------- manifest

@dataclass
class ManifestRecord:
    sample_id: str
    path: str
    label: int | None
    split: str  # "train" | "test"


def read_manifest(path) -> list[ManifestRecord]:
    """Headerless CSV, one record per line: id, relative wav path, optional
    integer label, split tag."""
    records = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"manifest line needs 4 fields, got {len(row)}: {row}")
            sid, rel, lab, split = row
            records.append(ManifestRecord(sid, rel, int(lab) if lab != "" else None,
                                          split or "train"))
    return records


def write_manifest(path, records: list[ManifestRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for r in records:
            writer.writerow([r.sample_id, r.path,
                             "" if r.label is None else int(r.label), r.split])


# ------------------------------------------------------------------ pool state

def one_hot(label: int, n_classes: int) -> np.ndarray:
    y = np.zeros(n_classes)
    y[label] = 1.0
    return y


@dataclass
class PoolState:
    """Labeled ids with labels, the unlabeled pool, soft pseudo-labels for the
    pool, and the batch selected so far this round."""

    train_ids: list[str]
    labels: dict[str, int]
    pool_ids: list[str]
    n_classes: int
    pseudo_labels: dict[str, np.ndarray] = field(default_factory=dict)
    batch: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        train, pool = set(self.train_ids), set(self.pool_ids)
        if train & pool:
            raise ValueError("labeled and pool ids overlap")
        if len(self.batch) != len(set(self.batch)):
            raise ValueError("batch contains duplicate ids")
        if not set(self.batch) <= pool:
            raise ValueError("batch contains ids outside the pool")
        missing = [t for t in self.train_ids if t not in self.labels]
        if missing:
            raise ValueError(f"labeled ids without labels: {missing[:5]}")

    def copy(self) -> "PoolState":
        return PoolState(
            train_ids=list(self.train_ids),
            labels=dict(self.labels),
            pool_ids=list(self.pool_ids),
            n_classes=self.n_classes,
            pseudo_labels=dict(self.pseudo_labels),
            batch=list(self.batch),
        )

    def with_batch(self, batch: list[str]) -> "PoolState":
        out = self.copy()
        out.batch = list(batch)
        out.validate()
        return out

    def commit_batch(self, labels: dict[str, int]) -> "PoolState":
        """Move the current batch into the labeled set using oracle labels."""
        if set(labels) != set(self.batch):
            raise ValueError("labels must cover exactly the pending batch")
        out = self.copy()
        for sid in self.batch:
            out.labels[sid] = int(labels[sid])
            out.train_ids.append(sid)
            out.pool_ids.remove(sid)
            out.pseudo_labels.pop(sid, None)
        out.batch = []
        out.validate()
        return out


# ------------------------------------------------------------- feature sources

class VectorSource:
    """Static feature vectors; augmented variants are the vector itself."""

    def __init__(self, features: dict[str, np.ndarray]):
        self.features = {k: np.asarray(v, dtype=np.float64) for k, v in features.items()}

    def vector(self, sid: str) -> np.ndarray:
        return self.features[sid]

    def variant(self, sid: str, rng: np.random.Generator) -> np.ndarray:
        return self.features[sid]


class AudioSource:
    """Features recomputed from raw clips; variants re-run the augmentation
    pipeline on the clip before the spectrogram and flattening."""

    def __init__(self, clips: dict[str, AudioClip], aug_cfg: AugmentationConfig | None = None,
                 standardize: tuple[float, float] | None = None):
        self.clips = clips
        self.aug_cfg = aug_cfg or AugmentationConfig()
        self.standardize = standardize
        self._base: dict[str, np.ndarray] = {}

    def _finish(self, flat: np.ndarray) -> np.ndarray:
        if self.standardize is not None:
            mean, std = self.standardize
            return (flat - mean) / std
        return flat

    def vector(self, sid: str) -> np.ndarray:
        if sid not in self._base:
            self._base[sid] = self._finish(mel_spectrogram(self.clips[sid]).flat())
        return self._base[sid]

    def variant(self, sid: str, rng: np.random.Generator) -> np.ndarray:
        seed = int(rng.integers(0, 2 ** 62))
        clip = augment(self.clips[sid], self.aug_cfg, seed)
        return self._finish(mel_spectrogram(clip).flat())


class CachedVariantSource:
    """Fast path: a fixed bank of precomputed augmented variants per sample,
    one drawn at random per request."""

    def __init__(self, base: dict[str, np.ndarray], variants: dict[str, np.ndarray]):
        self.base = {k: np.asarray(v, dtype=np.float64) for k, v in base.items()}
        self.variants = {k: np.asarray(v, dtype=np.float64) for k, v in variants.items()}

    @classmethod
    def from_audio(cls, source: AudioSource, ids: list[str], n_variants: int = 8,
                   rng_seed: int = 0) -> "CachedVariantSource":
        rng = np.random.default_rng(rng_seed)
        base = {sid: source.vector(sid) for sid in ids}
        variants = {
            sid: np.stack([source.variant(sid, rng) for _ in range(n_variants)])
            for sid in ids
        }
        return cls(base, variants)

    def vector(self, sid: str) -> np.ndarray:
        return self.base[sid]

    def variant(self, sid: str, rng: np.random.Generator) -> np.ndarray:
        bank = self.variants[sid]
        return bank[int(rng.integers(bank.shape[0]))]


# --------------------------------------------------------------------- dataset

@dataclass
class Dataset:
    """Everything a campaign needs: ids, model-input features, ground-truth
    labels, an 80/20 stratified train/test split, and (optionally) raw clips."""

    ids: list[str]
    features: dict[str, np.ndarray]
    labels: dict[str, int]
    n_classes: int
    train_ids: list[str]
    test_ids: list[str]
    clips: dict[str, AudioClip] | None = None
    class_names: list[str] | None = None
    standardize: tuple[float, float] | None = None

    @property
    def dim(self) -> int:
        return self.features[self.ids[0]].shape[0]

    def feature_matrix(self, ids: list[str]) -> np.ndarray:
        return np.stack([self.features[sid] for sid in ids])

    def label_vector(self, ids: list[str]) -> np.ndarray:
        return np.array([self.labels[sid] for sid in ids], dtype=int)

    def source(self, aug_cfg: AugmentationConfig | None = None):
        if self.clips is not None:
            return AudioSource(self.clips, aug_cfg, self.standardize)
        return VectorSource(self.features)


def stratified_split(ids: list[str], labels: dict[str, int], test_frac: float = 0.2,
                     seed: int = 0) -> tuple[list[str], list[str]]:
    """Per-class shuffled split; at least one training sample per class."""
    rng = np.random.default_rng(seed)
    by_class: dict[int, list[str]] = {}
    for sid in ids:
        by_class.setdefault(labels[sid], []).append(sid)
    train, test = [], []
    for cls in sorted(by_class):
        members = sorted(by_class[cls])
        perm = rng.permutation(len(members))
        n_test = min(int(round(test_frac * len(members))), len(members) - 1)
        test += [members[i] for i in perm[:n_test]]
        train += [members[i] for i in perm[n_test:]]
    return sorted(train), sorted(test)


def _finalize_dataset(ids, features, labels, n_classes, clips=None, class_names=None,
                      split_seed=0, standardize=False) -> Dataset:
    std = None
    if standardize:
        all_vals = np.concatenate([features[sid] for sid in ids])
        std = (float(all_vals.mean()), float(all_vals.std() + 1e-12))
        features = {sid: (features[sid] - std[0]) / std[1] for sid in ids}
    train_ids, test_ids = stratified_split(ids, labels, seed=split_seed)
    return Dataset(ids=ids, features=features, labels=labels, n_classes=n_classes,
                   train_ids=train_ids, test_ids=test_ids, clips=clips,
                   class_names=class_names, standardize=std)


def make_cluster_dataset(n: int = 500, n_classes: int = 10, dim: int = 8,
                         seed: int = 0, spread: float = 0.5,
                         radius: float = 6.0) -> Dataset:
    """Gaussian blobs around well-separated random centers; feature vectors are
    the raw coordinates, labels the cluster indices."""
    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((n_classes, dim))
    centers *= radius / np.linalg.norm(centers, axis=1, keepdims=True)
    assignments = np.concatenate([np.arange(n_classes), rng.integers(0, n_classes, n - n_classes)])
    width = len(str(n - 1))
    ids, features, labels = [], {}, {}
    for i, cls in enumerate(assignments):
        sid = f"pt{i:0{width}d}"
        ids.append(sid)
        features[sid] = centers[cls] + spread * rng.standard_normal(dim)
        labels[sid] = int(cls)
    return _finalize_dataset(ids, features, labels, n_classes, split_seed=seed)


TONE_FREQUENCIES = [330.0, 470.0, 670.0, 940.0, 1330.0, 1880.0, 2660.0, 3760.0, 5320.0, 7000.0]


def make_tone_dataset(n: int = 120, n_classes: int = 10, seed: int = 0,
                      standardize: bool = False) -> Dataset:
    """Synthetic keyword stand-in: each class is a pure tone with random phase,
    amplitude jitter, and a little background noise. Features are flattened
    32x32 log-mel spectrograms; clips are kept for augmentation and playback."""
    if n_classes > len(TONE_FREQUENCIES):
        raise ValueError(f"at most {len(TONE_FREQUENCIES)} tone classes available")
    rng = np.random.default_rng(seed)
    t = np.arange(CLIP_SAMPLES) / TARGET_RATE
    assignments = np.concatenate([np.arange(n_classes), rng.integers(0, n_classes, n - n_classes)])
    width = len(str(n - 1))
    ids, features, labels, clips = [], {}, {}, {}
    for i, cls in enumerate(assignments):
        sid = f"tone{i:0{width}d}"
        freq = TONE_FREQUENCIES[cls]
        amp = rng.uniform(0.4, 0.8)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x = amp * np.sin(2.0 * np.pi * freq * t + phase)
        x += 0.01 * rng.standard_normal(CLIP_SAMPLES)
        clip = AudioClip(samples=x, sample_rate=TARGET_RATE, source_id=sid)
        ids.append(sid)
        clips[sid] = clip
        features[sid] = mel_spectrogram(clip).flat()
        labels[sid] = int(cls)
    class_names = [f"{int(TONE_FREQUENCIES[c])}hz" for c in range(n_classes)]
    return _finalize_dataset(ids, features, labels, n_classes, clips=clips,
                             class_names=class_names, split_seed=seed,
                             standardize=standardize)


def ingest_dataset(manifest_path, audio_root, out_dir, standardize: bool = False) -> Path:
    """Decode every manifest entry, compute 32x32 spectrogram features, and
    write a dataset directory (manifest copy, feature cache, sidecar, meta)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = read_manifest(manifest_path)
    if not records:
        raise ValueError(f"empty manifest {manifest_path}")
    root = Path(audio_root)
    specs, ids, labels = [], [], []
    for rec in records:
        clip = ingest_wav(root / rec.path)
        specs.append(mel_spectrogram(clip).values)
        ids.append(rec.sample_id)
        labels.append(rec.label)
    bank = np.stack(specs)
    write_matrix_bank(out / "features.bin", bank)
    write_sidecar(out / "features.idx.csv", ids, labels)
    write_manifest(out / "manifest.csv", records)
    meta = {"n_classes": int(max(l for l in labels if l is not None) + 1),
            "standardize": bool(standardize),
            "audio_root": str(root.resolve())}
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    return out


def load_dataset_dir(path) -> Dataset:
    path = Path(path)
    records = read_manifest(path / "manifest.csv")
    bank = read_matrix_bank(path / "features.bin")
    ids, _ = read_sidecar(path / "features.idx.csv")
    meta = json.loads((path / "meta.json").read_text())
    by_id = {rec.sample_id: rec for rec in records}
    if set(ids) != set(by_id):
        raise ValueError("feature cache and manifest disagree on sample ids")
    features = {sid: bank[i].reshape(-1) for i, sid in enumerate(ids)}
    labels = {sid: by_id[sid].label for sid in ids if by_id[sid].label is not None}
    root = Path(meta["audio_root"])
    clips = {sid: ingest_wav(root / by_id[sid].path) for sid in ids}
    train_ids = sorted(sid for sid in ids if by_id[sid].split == "train")
    test_ids = sorted(sid for sid in ids if by_id[sid].split == "test")
    if not test_ids:
        if len(labels) != len(ids):
            raise ValueError("cannot build a holdout split without full labels")
        train_ids, test_ids = stratified_split(ids, labels)
    missing_test = [sid for sid in test_ids if sid not in labels]
    if missing_test:
        raise ValueError(f"test split needs labels; missing for {missing_test[:5]}")
    std = None
    if meta.get("standardize"):
        all_vals = np.concatenate([features[sid] for sid in ids])
        std = (float(all_vals.mean()), float(all_vals.std() + 1e-12))
        features = {sid: (features[sid] - std[0]) / std[1] for sid in ids}
    return Dataset(ids=list(ids), features=features, labels=labels,
                   n_classes=int(meta["n_classes"]), train_ids=train_ids,
                   test_ids=test_ids, clips=clips, standardize=std)


def open_dataset(ref) -> Dataset:
    """Resolve a dataset reference: a directory path or a synthetic recipe
    {"kind": "clusters" | "tones" | "dir", ...}."""
    if isinstance(ref, (str, Path)):
        return load_dataset_dir(ref)
    kind = ref.get("kind")
    opts = {k: v for k, v in ref.items() if k != "kind"}
    if kind == "dir":
        return load_dataset_dir(opts["path"])
    if kind == "clusters":
        return make_cluster_dataset(**opts)
    if kind == "tones":
        return make_tone_dataset(**opts)
    raise ValueError(f"unknown dataset kind {kind!r}")


# -------------------------------------------------- persistence for components

def save_nystrom(nm: NystromMap, path_prefix) -> None:
    prefix = Path(path_prefix)
    write_matrix_bank(prefix.with_suffix(".factor.bin"), nm.factor[None])
    write_matrix_bank(prefix.with_suffix(".landmarks.bin"), nm.landmarks[None])
    meta = {"kind": nm.spec.kind, "rbf_gamma": nm.spec.rbf_gamma,
            "ntk_depth": nm.spec.ntk_depth,
            "indices": [int(i) for i in nm.landmark_indices]}
    prefix.with_suffix(".json").write_text(json.dumps(meta))


def load_nystrom(path_prefix) -> NystromMap:
    prefix = Path(path_prefix)
    factor = read_matrix_bank(prefix.with_suffix(".factor.bin"))[0]
    landmarks = read_matrix_bank(prefix.with_suffix(".landmarks.bin"))[0]
    meta = json.loads(prefix.with_suffix(".json").read_text())
    spec = KernelSpec(kind=meta["kind"], rbf_gamma=meta["rbf_gamma"],
                      ntk_depth=meta["ntk_depth"])
    nm = nystrom_from_landmarks(spec, landmarks, indices=meta["indices"])
    nm.factor = factor  # keep the persisted factor bit-for-bit
    return nm


def export_embeddings(path_prefix, ids: list[str], Z: np.ndarray,
                      labels: list[int | None] | None = None) -> None:
    """Raw embedding export (one row per sample) in the cache format."""
    prefix = Path(path_prefix)
    write_matrix_bank(prefix.with_suffix(".bin"), np.asarray(Z)[:, None, :])
    write_sidecar(prefix.with_suffix(".idx.csv"), ids,
                  labels if labels is not None else [None] * len(ids))
