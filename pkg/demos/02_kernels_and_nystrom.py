"""Kernel machinery: the closed-form deep ReLU network kernel against a
Monte-Carlo wide network, and the Nystrom approximation improving with more
landmarks.

Run: python3 demos/02_kernels_and_nystrom.py
"""
import numpy as np

from batchal.kernels import (
    KernelSpec,
    build_nystrom,
    kernel_eval,
    kernel_matrix,
    nystrom_from_landmarks,
)

rng = np.random.default_rng(0)

print("=== 1. Analytic network kernel vs a sampled wide network ===")
spec = KernelSpec(kind="relu_ntk", ntk_depth=1)
d, width = 10, 100_000
x = rng.standard_normal(d)
x /= np.linalg.norm(x)
for u in (0.2, 0.5, 0.8):
    r = rng.standard_normal(d)
    r -= (r @ x) * x
    r /= np.linalg.norm(r)
    y = u * x + np.sqrt(1 - u * u) * r
    analytic = kernel_eval(spec, x, y)
    W = rng.standard_normal((width, d))
    v = rng.standard_normal(width)
    ax, ay = W @ x, W @ y
    emp = (2 / width) * (np.maximum(ax, 0) @ np.maximum(ay, 0)
                         + ((v ** 2) * (ax > 0) * (ay > 0)).sum() * (x @ y))
    print(f"cos angle {u:.1f}: analytic {analytic:.5f}, width-1e5 network {emp:.5f}, "
          f"rel dev {abs(emp - analytic) / analytic:.2%}")

print("\n=== 2. Nystrom approximation error vs landmark count ===")
X = rng.standard_normal((200, 8))
rbf = KernelSpec(kind="rbf", rbf_gamma=0.2)
K = kernel_matrix(rbf, X, X)
perm = rng.permutation(200)
for m in (10, 25, 50, 100, 200):
    nm = nystrom_from_landmarks(rbf, X[perm[:m]])
    Z = nm.transform(X)
    err = np.linalg.norm(K - Z @ Z.T) / np.linalg.norm(K)
    print(f"m = {m:3d}: relative Frobenius error {err:.2e}")

print("\n=== 3. Exactness when landmarks span the set ===")
nm = build_nystrom(rbf, X[:50], m=50, rng_seed=0)
Z = nm.transform(X[:50])
print("max |z_i.z_j - k(x_i,x_j)| =",
      f"{np.max(np.abs(Z @ Z.T - kernel_matrix(rbf, X[:50], X[:50]))):.2e}")
