"""Synthetic convex regression problems, sharding, and exact oracles.

Two generators: dense standard-normal features, and a token-frequency
imitation where a small block of common columns is Bernoulli(0.9) and the
rest Bernoulli(0.1) (rare features), which concentrates curvature in the
common block and stretches the spectrum.

Heavy-tailed noise enters in one of two modes, declared per problem:
  * label-contamination: labels = labels_true + xi drawn once at
    contamination time; minibatch resampling over the fixed contaminated
    rows then induces heavy-tailed stochastic gradients;
  * additive-gradient: every gradient evaluation is the exact shard
    gradient plus a fresh draw from grad_noise.

Problems are immutable after construction; the mutating-looking operations
return new instances.  Derived matrices (shard views, Gram blocks) are
cached lazily and shared by concurrent readers.
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .noise import NONE, NoiseSpec, sample_noise

LABEL_CONTAMINATION = "label-contamination"
ADDITIVE_GRADIENT = "additive-gradient"


@dataclass
class RegressionProblem:
    """A weighted least-squares problem split across nodes.

    The global objective is sum_i p_i * (1/(2*|shard_i|)) * ||y_i - X_i x||^2
    with node weights p_i proportional to shard sizes.
    """

    features: np.ndarray          # (M, m)
    w_star: np.ndarray            # (m,)
    labels_true: np.ndarray       # (M,)
    labels: np.ndarray            # (M,)
    shards: list = field(default_factory=list)
    node_weights: np.ndarray = None
    noise_mode: str = LABEL_CONTAMINATION
    grad_noise: NoiseSpec = None

    def __post_init__(self):
        if not self.shards:
            self.shards = [np.arange(self.features.shape[0], dtype=np.int64)]
        if self.node_weights is None:
            sizes = np.array([len(s) for s in self.shards], dtype=np.float64)
            self.node_weights = sizes / sizes.sum()
        if self.noise_mode not in (LABEL_CONTAMINATION, ADDITIVE_GRADIENT):
            raise ValueError("unknown noise_mode %r" % (self.noise_mode,))
        if self.noise_mode == ADDITIVE_GRADIENT and self.grad_noise is None:
            self.grad_noise = NoiseSpec(NONE)

    @property
    def num_rows(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def num_nodes(self):
        return len(self.shards)

    @cached_property
    def shard_views(self):
        """Per-node contiguous copies (X_i, y_i) for the epoch kernels."""
        return [
            (np.ascontiguousarray(self.features[s]), np.ascontiguousarray(self.labels[s]))
            for s in self.shards
        ]

    @cached_property
    def shard_grams(self):
        """Per-node (A_i, b_i) with the shard gradient at x being A_i x - b_i."""
        out = []
        for X, y in self.shard_views:
            n = X.shape[0]
            out.append((np.ascontiguousarray(X.T @ X / n), X.T @ y / n))
        return out

    @cached_property
    def global_gram(self):
        """(A, b) of the weighted normal equations; full gradient is A x - b."""
        m = self.dim
        A = np.zeros((m, m))
        b = np.zeros(m)
        for p, (Ai, bi) in zip(self.node_weights, self.shard_grams):
            A += p * Ai
            b += p * bi
        return A, b


def gen_gaussian_regression(M, m, rng):
    """Dense standard-normal features, w_star ~ N(0, I), clean labels."""
    if not (M >= m >= 1):
        raise ValueError("need M >= m >= 1, got M=%r m=%r" % (M, m))
    X = rng.standard_normal((M, m))
    w = rng.standard_normal(m)
    y = X @ w
    return RegressionProblem(features=X, w_star=w, labels_true=y, labels=y.copy())


def gen_syntoken(M, m, rng, common_fraction=0.1):
    """Bernoulli token-frequency features: a common block and a rare bulk.

    The first floor(common_fraction*m) columns are Bernoulli(0.9), the rest
    Bernoulli(0.1); w_star ~ N(0, I); labels clean.
    """
    if not (M >= 1 and m >= 1):
        raise ValueError("need M, m >= 1")
    if not 0.0 < common_fraction < 1.0:
        raise ValueError("common_fraction must lie in (0, 1)")
    k = int(math.floor(common_fraction * m))
    U = rng.random((M, m))
    X = np.empty((M, m))
    X[:, :k] = (U[:, :k] < 0.9).astype(np.float64)
    X[:, k:] = (U[:, k:] < 0.1).astype(np.float64)
    w = rng.standard_normal(m)
    y = X @ w
    return RegressionProblem(features=X, w_star=w, labels_true=y, labels=y.copy())


def contaminate_labels(p, spec, rng):
    """Replace labels with labels_true + one draw of xi from spec."""
    xi = sample_noise(spec, p.num_rows, rng)
    return replace(p, labels=p.labels_true + xi, noise_mode=LABEL_CONTAMINATION)


def with_additive_noise(p, spec):
    """Switch the problem to additive-gradient mode with the given spec."""
    return replace(p, noise_mode=ADDITIVE_GRADIENT, grad_noise=spec)


def shard_iid(p, N, rng):
    """Split rows into N near-equal shards by a random permutation.

    Remainder rows go one per shard to the first shards; node weights track
    the true shard sizes.
    """
    M = p.num_rows
    if not 1 <= N <= M:
        raise ValueError("need 1 <= N <= M, got N=%r M=%r" % (N, M))
    perm = rng.permutation(M).astype(np.int64)
    base = M // N
    extra = M % N
    shards = []
    start = 0
    for i in range(N):
        size = base + (1 if i < extra else 0)
        shards.append(np.sort(perm[start:start + size]))
        start += size
    sizes = np.array([len(s) for s in shards], dtype=np.float64)
    return replace(p, shards=shards, node_weights=sizes / M)


def node_gradient(p, node, x, batch=None, rng=None):
    """Stochastic gradient seen by one node at x.

    label-contamination mode: mean gradient over the given batch of global
    row indices (None means the full shard).  additive-gradient mode: the
    exact shard gradient plus a fresh draw from the problem's gradient-noise
    spec (rng required unless that spec is none).
    """
    x = np.asarray(x, dtype=np.float64)
    if p.noise_mode == ADDITIVE_GRADIENT:
        A, b = p.shard_grams[node]
        g = A @ x - b
        if p.grad_noise is not None and p.grad_noise.family != NONE:
            if rng is None:
                raise ValueError("additive-gradient mode needs an rng")
            g = g + sample_noise(p.grad_noise, p.dim, rng)
        return g
    if batch is None:
        rows = p.shards[node]
    else:
        rows = np.asarray(batch, dtype=np.int64)
        if rows.size == 0:
            raise ValueError("empty batch")
    Xb = p.features[rows]
    return Xb.T @ (Xb @ x - p.labels[rows]) / rows.shape[0]


def node_objective(p, node, x):
    """One node's objective (1/(2*|shard|)) * ||y_i - X_i x||^2."""
    X, y = p.shard_views[node]
    r = y - X @ x
    return float(r @ r) / (2.0 * X.shape[0])


def objective_value(p, x):
    """Weighted global objective sum_i p_i F_i(x)."""
    x = np.asarray(x, dtype=np.float64)
    total = 0.0
    for i, w in enumerate(p.node_weights):
        total += float(w) * node_objective(p, i, x)
    return total


def full_gradient(p, x):
    """Deterministic full-data gradient of the weighted objective."""
    A, b = p.global_gram
    return A @ x - b


class OptimumResult(NamedTuple):
    x: np.ndarray
    regularized: bool


def exact_optimum(p):
    """Minimizer of objective_value by solving the weighted normal equations.

    Singular (or numerically unsolvable) systems fall back to a ridge solve
    with epsilon = 1e-10 * trace(A) and are flagged via .regularized.
    One step of iterative refinement keeps the residual gradient below
    1e-8 * (1 + ||x||).
    """
    A, b = p.global_gram

    def _solve(mat):
        x = np.linalg.solve(mat, b)
        x += np.linalg.solve(mat, b - mat @ x)  # one refinement step
        return x

    try:
        x = _solve(A)
        resid = float(np.linalg.norm(A @ x - b))
        if np.isfinite(resid) and resid < 1e-8 * (1.0 + float(np.linalg.norm(x))):
            return OptimumResult(x, False)
    except np.linalg.LinAlgError:
        pass
    eps = 1e-10 * float(np.trace(A))
    if eps <= 0.0:
        eps = 1e-10
    x = _solve(A + eps * np.eye(p.dim))
    return OptimumResult(x, True)


def export_problem(p, path):
    """Write the problem to a columnar text file for external inspection.

    Format: a comment header, one line `w_star <m floats>`, then one line
    per row `feat_1 ... feat_m label label_true`, space-separated, 17
    significant digits.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write("# rows=%d dims=%d nodes=%d noise_mode=%s\n"
                % (p.num_rows, p.dim, p.num_nodes, p.noise_mode))
        f.write("w_star " + " ".join("%.17g" % v for v in p.w_star) + "\n")
        for r in range(p.num_rows):
            cells = ["%.17g" % v for v in p.features[r]]
            cells.append("%.17g" % p.labels[r])
            cells.append("%.17g" % p.labels_true[r])
            f.write(" ".join(cells) + "\n")
