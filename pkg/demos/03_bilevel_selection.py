"""One selection round in slow motion: pseudo-label a 10-cluster pool from 10
seed labels, then greedily pick a batch of 10 through the trained proxy and the
Hessian-solved direction. Prints the per-step trace and cluster coverage, and
exports the embeddings for external plotting.

Run: python3 demos/03_bilevel_selection.py
"""
import tempfile
from pathlib import Path

import numpy as np

from batchal.campaign import seed_initial_pool
from batchal.data import export_embeddings, make_cluster_dataset
from batchal.kernels import build_nystrom, median_heuristic_gamma
from batchal.selection import SelectionConfig, select_batch_bilevel
from batchal.semisup import SslConfig, pseudo_label, ssl_train

ds = make_cluster_dataset(n=500, n_classes=10, dim=8, seed=0)
state = seed_initial_pool(ds, 10, rng_seed=0)
print(f"dataset: {len(ds.ids)} points, {ds.n_classes} clusters, dim {ds.dim}")
print(f"seed labels: {len(state.train_ids)}, pool: {len(state.pool_ids)}")

model = ssl_train(ds.feature_matrix(state.train_ids), ds.label_vector(state.train_ids),
                  ds.feature_matrix(state.pool_ids), SslConfig(n_classes=10))
probs = pseudo_label(model, ds.feature_matrix(state.pool_ids))
state.pseudo_labels = {sid: probs[i] for i, sid in enumerate(state.pool_ids)}
pseudo_acc = np.mean(np.argmax(probs, 1) == ds.label_vector(state.pool_ids))
print(f"pseudo-label accuracy on the pool: {pseudo_acc:.3f}")

feats = ds.feature_matrix(state.train_ids + state.pool_ids)
cfg = SelectionConfig(b=10, nr_it=150, lam=1e-2, m=128, rng_seed=0,
                      train_augmented=False)
nm = build_nystrom(cfg.kernel_spec(fallback_gamma=median_heuristic_gamma(feats)),
                   feats, m=cfg.m, rng_seed=0)

trace = []
batch = select_batch_bilevel(state, cfg, nm, ds.source(), trace=trace)
print("\nstep  chosen    true cluster  score        cg residual")
for step in trace:
    print(f"{step.step:>4}  {step.chosen:<8}  {ds.labels[step.chosen]:>12}  "
          f"{step.score:<11.4g}  {step.cg_residual:.2e}")
clusters = {ds.labels[sid] for sid in batch}
print(f"\nbatch covers {len(clusters)} of 10 clusters: {sorted(clusters)}")

out = Path(tempfile.mkdtemp(prefix="batchal_demo_")) / "embeddings"
ids = state.train_ids + state.pool_ids
export_embeddings(out, ids, nm.transform(feats), labels=[ds.labels[s] for s in ids])
print(f"embeddings exported for plotting -> {out}.bin / {out}.idx.csv")
