"""Bootstrap-bagged CART forest with Gini splits, built from scratch.

Each tree trains on a bootstrap sample of size n drawn with replacement;
tree i uses its own rng seeded seed + i (first draw: the bootstrap indices,
then one feature-subset draw per split in depth-first order), so the forest
is reproducible regardless of how tree fitting is scheduled. Split
thresholds are midpoints between consecutive distinct sorted values; ties
in Gini break to the lowest feature index, then the lowest threshold.
The forest probability is the arithmetic mean of per-tree leaf positive
fractions.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..alerts import AlertStream


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_leaf: int = 10
    features_per_split: int | None = None  # None -> ceil(sqrt(d))
    seed: int = 0
    n_jobs: int = 1


@dataclass
class Tree:
    """Flat array tree: feature[i] < 0 marks node i as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf positive fraction (filled for every node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        cur = np.zeros(len(X), dtype=np.int32)
        while True:
            feats = self.feature[cur]
            live = np.nonzero(feats >= 0)[0]
            if live.size == 0:
                break
            nodes = cur[live]
            goes_left = X[live, feats[live]] <= self.threshold[nodes]
            cur[live] = np.where(goes_left, self.left[nodes], self.right[nodes])
        return self.value[cur]

    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=int)
        out = 0
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
            else:
                out = max(out, depths[i])
        return out


def _best_split(Xn: np.ndarray, yn: np.ndarray, msl: int):
    """Lowest-impurity (feature, threshold) for one node, or None.

    Cost per candidate position is the pooled Gini numerator
    pl(nl-pl)/nl + pr(nr-pr)/nr; the 2/n factor is constant per node.
    """
    m = Xn.shape[0]
    order = np.argsort(Xn, axis=0, kind="stable")
    Xs = np.take_along_axis(Xn, order, axis=0)
    ys = yn[order]
    cpos = np.cumsum(ys, axis=0, dtype=np.float64)
    total_pos = cpos[-1, :]

    nl = np.arange(1, m, dtype=np.float64)[:, None]
    pl = cpos[:-1, :]
    nr = m - nl
    pr = total_pos[None, :] - pl
    cost = pl * (nl - pl) / nl + pr * (nr - pr) / nr
    valid = (Xs[1:, :] > Xs[:-1, :]) & (nl >= msl) & (nr >= msl)
    cost = np.where(valid, cost, np.inf)

    per_feat_pos = np.argmin(cost, axis=0)  # first min = lowest threshold
    per_feat_cost = cost[per_feat_pos, np.arange(Xn.shape[1])]
    f_local = int(np.argmin(per_feat_cost))  # first min = lowest feature index
    if not np.isfinite(per_feat_cost[f_local]):
        return None
    pos = int(per_feat_pos[f_local])
    a = Xs[pos, f_local]
    b = Xs[pos + 1, f_local]
    thr = a + (b - a) / 2.0
    if thr >= b:  # midpoint rounded up to b: fall back to the left value
        thr = a
    return f_local, float(thr)


def _fit_tree(X, y, seed, max_depth, msl, mtry):
    rng = np.random.default_rng(seed)
    n, d = X.shape
    boot = rng.integers(0, n, size=n)
    Xb = X[boot]
    yb = y[boot].astype(np.float64)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(frac):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(frac)
        return len(feature) - 1

    def grow(idx, depth):
        pos = float(yb[idx].sum())
        node = new_node(pos / len(idx))
        if depth >= max_depth or len(idx) < 2 * msl or pos == 0 or pos == len(idx):
            return node
        feats = np.sort(rng.choice(d, size=mtry, replace=False))
        best = _best_split(Xb[np.ix_(idx, feats)], yb[idx], msl)
        if best is None:
            return node
        f_local, thr = best
        f = int(feats[f_local])
        mask = Xb[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(n), 0)
    return Tree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
    )


def _fit_tree_on_bootstrap(args):
    return _fit_tree(*args)


@dataclass
class ForestModel:
    trees: list[Tree]
    n_trees: int
    max_depth: int
    min_samples_leaf: int
    features_per_split: int
    rng_seed: int
    n_features: int

    def predict_trees(self, X: np.ndarray) -> np.ndarray:
        """Per-tree probabilities, shape (n_trees, n_samples)."""
        X = np.asarray(X, dtype=np.float64)
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predict_trees(X).mean(axis=0)


def train_forest(stream: AlertStream, config: ForestConfig | None = None) -> ForestModel:
    config = config or ForestConfig()
    if len(stream) == 0:
        raise ValueError("cannot train on an empty stream")
    n_pos = int(stream.y.sum())
    if n_pos == 0 or n_pos == len(stream):
        raise ValueError("training data contains a single class")

    d = stream.n_features
    mtry = config.features_per_split or math.ceil(math.sqrt(d))
    mtry = min(mtry, d)
    X = stream.X
    y = stream.y

    jobs = [
        (X, y, config.seed + i, config.max_depth, config.min_samples_leaf, mtry)
        for i in range(config.n_trees)
    ]
    if config.n_jobs == 1:
        trees = [_fit_tree_on_bootstrap(j) for j in jobs]
    else:
        workers = config.n_jobs if config.n_jobs > 0 else None
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(_fit_tree_on_bootstrap, jobs))

    return ForestModel(
        trees=trees,
        n_trees=config.n_trees,
        max_depth=config.max_depth,
        min_samples_leaf=config.min_samples_leaf,
        features_per_split=mtry,
        rng_seed=config.seed,
        n_features=d,
    )
