"""From-scratch regression tree ensembles: random forest and boosted trees.

Both models share one array-backed CART grower with exhaustive split
search (all features, all thresholds between adjacent distinct sorted
values). Equal-score splits break to the lowest feature index, then the
lowest threshold, so fits are deterministic.

Uncertainty: the forest reports the population std of per-tree
predictions; the booster reports the population std of a "virtual
ensemble" of staged predictions over the second half of its rounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, FitError, ShapeError
from .types import Prediction


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 400
    bootstrap: bool = True
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ConfigError("min_samples_split >= 2 and min_samples_leaf >= 1 required")


@dataclass(frozen=True)
class GBTConfig:
    n_rounds: int = 400
    learning_rate: float = 0.3
    max_depth: int = 6
    lambda_l2: float = 1.0
    gamma_min_gain: float = 0.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ConfigError(f"n_rounds must be >= 1, got {self.n_rounds}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")


@dataclass
class Tree:
    """Flat node arrays; feature[i] == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"leaf": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }


def _pack(nodes: list) -> Tree:
    arr = np.array(nodes, dtype=float)
    return Tree(
        feature=arr[:, 0].astype(np.int64),
        threshold=arr[:, 1],
        left=arr[:, 2].astype(np.int64),
        right=arr[:, 3].astype(np.int64),
        value=arr[:, 4],
    )


def _sorted_prefixes(X: np.ndarray, v: np.ndarray):
    """Per-feature sorted values plus prefix sums of v and v^2."""
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    vs = v[order]
    return xs, np.cumsum(vs, axis=0), np.cumsum(vs * vs, axis=0)


def _best_variance_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Split minimizing total child SSE; None when no valid position exists."""
    m = X.shape[0]
    if m < 2:
        return None
    xs, cs, css = _sorted_prefixes(X, y)
    nl = np.arange(1, m, dtype=float)[:, None]
    nr = m - nl
    sl, ssl = cs[:-1], css[:-1]
    st, sst = cs[-1], css[-1]
    sse = (ssl - sl * sl / nl) + ((sst - ssl) - (st - sl) ** 2 / nr)
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        counts = np.arange(1, m)[:, None]
        valid &= (counts >= min_leaf) & (m - counts >= min_leaf)
    scores = np.where(valid, sse, np.inf).T  # (d, m-1): argmin ties -> low feature, low threshold
    flat = int(np.argmin(scores))
    if not np.isfinite(scores.flat[flat]):
        return None
    f, k = divmod(flat, m - 1)
    return int(f), float(0.5 * (xs[k, f] + xs[k + 1, f]))


def _best_gain_split(X: np.ndarray, g: np.ndarray, lam: float, gamma: float, min_child: float):
    """Second-order split gain with unit hessians; None unless gain > 0."""
    m = X.shape[0]
    if m < 2:
        return None
    xs, cs, _ = _sorted_prefixes(X, g)
    hl = np.arange(1, m, dtype=float)[:, None]
    hr = m - hl
    gl = cs[:-1]
    gt = cs[-1]
    gain = 0.5 * (gl * gl / (hl + lam) + (gt - gl) ** 2 / (hr + lam) - gt * gt / (m + lam)) - gamma
    valid = (xs[:-1] < xs[1:]) & (hl >= min_child) & (hr >= min_child)
    scores = np.where(valid, gain, -np.inf).T
    flat = int(np.argmax(scores))
    if not (scores.flat[flat] > 0.0):
        return None
    f, k = divmod(flat, m - 1)
    return int(f), float(0.5 * (xs[k, f] + xs[k + 1, f]))


def _grow_variance_tree(X, y, config: ForestConfig) -> Tree:
    nodes: list = []
    nodes.append(None)
    stack = [(0, np.arange(X.shape[0]), 0)]
    while stack:
        ni, idx, depth = stack.pop()
        sub_y = y[idx]
        split = None
        depth_ok = config.max_depth is None or depth < config.max_depth
        if (
            depth_ok
            and len(idx) >= config.min_samples_split
            and not np.all(sub_y == sub_y[0])
        ):
            split = _best_variance_split(X[idx], sub_y, config.min_samples_leaf)
        if split is None:
            nodes[ni] = (-1, 0.0, -1, -1, float(sub_y.mean()))
            continue
        f, thr = split
        go_left = X[idx, f] <= thr
        li, ri = len(nodes), len(nodes) + 1
        nodes.extend([None, None])
        nodes[ni] = (f, thr, li, ri, 0.0)
        stack.append((li, idx[go_left], depth + 1))
        stack.append((ri, idx[~go_left], depth + 1))
    return _pack(nodes)


def _grow_gbt_tree(X, g, config: GBTConfig) -> Tree:
    lam = config.lambda_l2
    nodes: list = []
    nodes.append(None)
    stack = [(0, np.arange(X.shape[0]), 0)]
    while stack:
        ni, idx, depth = stack.pop()
        sub_g = g[idx]
        split = None
        if depth < config.max_depth:
            split = _best_gain_split(
                X[idx], sub_g, lam, config.gamma_min_gain, config.min_child_weight
            )
        if split is None:
            weight = -sub_g.sum() / (len(idx) + lam)
            nodes[ni] = (-1, 0.0, -1, -1, config.learning_rate * weight)
            continue
        f, thr = split
        go_left = X[idx, f] <= thr
        li, ri = len(nodes), len(nodes) + 1
        nodes.extend([None, None])
        nodes[ni] = (f, thr, li, ri, 0.0)
        stack.append((li, idx[go_left], depth + 1))
        stack.append((ri, idx[~go_left], depth + 1))
    return _pack(nodes)


@dataclass
class ForestModel:
    trees: list[Tree]
    config: ForestConfig
    n_features: int

    def to_json_dict(self) -> dict:
        return {"kind": "forest", "trees": [t.to_dict() for t in self.trees]}


@dataclass
class GBTModel:
    base_score: float
    trees: list[Tree]
    config: GBTConfig
    n_features: int

    def to_json_dict(self) -> dict:
        return {
            "kind": "gbt",
            "base_score": self.base_score,
            "trees": [t.to_dict() for t in self.trees],
        }


def _as_matrix(X) -> np.ndarray:
    """2-D float view; a 1-D input is n samples of one feature."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _check_xy(X, y):
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise FitError("empty training set")
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"|X| = {X.shape[0]} but |y| = {y.shape[0]}")
    return X, y


def fit_forest(X, y, config: ForestConfig = ForestConfig()) -> ForestModel:
    """Grow the bootstrap ensemble; deterministic given config.seed.

    Each tree draws its resample from its own spawned PRNG substream, so
    fitting order (or parallel scheduling) cannot change the result.
    """
    X, y = _check_xy(X, y)
    n = X.shape[0]
    children = np.random.SeedSequence(config.seed).spawn(config.n_trees)
    trees = []
    for child in children:
        if config.bootstrap:
            idx = np.random.default_rng(child).integers(0, n, size=n)
            trees.append(_grow_variance_tree(X[idx], y[idx], config))
        else:
            trees.append(_grow_variance_tree(X, y, config))
    return ForestModel(trees=trees, config=config, n_features=X.shape[1])


def predict_forest(model: ForestModel, X) -> list[Prediction]:
    """Ensemble mean and population std of the per-tree predictions."""
    X = _as_matrix(X)
    if X.shape[1] != model.n_features:
        raise ShapeError(f"query has {X.shape[1]} features, model expects {model.n_features}")
    per_tree = np.stack([t.predict(X) for t in model.trees])
    mean = per_tree.mean(axis=0)
    std = per_tree.std(axis=0)
    return [Prediction(float(m), float(s)) for m, s in zip(mean, std)]


def fit_gbt(X, y, config: GBTConfig = GBTConfig()) -> GBTModel:
    """Boost squared-error residuals; base prediction is mean(y)."""
    X, y = _check_xy(X, y)
    base = float(y.mean())
    pred = np.full(y.shape[0], base)
    trees = []
    for _ in range(config.n_rounds):
        g = pred - y
        tree = _grow_gbt_tree(X, g, config)
        pred += tree.predict(X)
        trees.append(tree)
    return GBTModel(base_score=base, trees=trees, config=config, n_features=X.shape[1])


def stage_rounds(n_rounds: int, members: int = 10) -> list[int]:
    """Virtual-ensemble checkpoints: ~evenly spaced over rounds n/2..n."""
    marks = np.linspace(n_rounds / 2.0, n_rounds, members)
    return sorted({int(round(v)) for v in marks})


def staged_predictions(model: GBTModel, X, rounds: list[int]) -> np.ndarray:
    """(len(rounds), n_queries) matrix of predictions after each checkpoint."""
    X = _as_matrix(X)
    wanted = set(rounds)
    out = []
    cum = np.full(X.shape[0], model.base_score)
    if 0 in wanted:
        out.append(cum.copy())
    for r, tree in enumerate(model.trees, start=1):
        cum += tree.predict(X)
        if r in wanted:
            out.append(cum.copy())
    return np.stack(out)


def predict_gbt(model: GBTModel, X) -> list[Prediction]:
    """Full-ensemble mean; std from the staged virtual ensemble."""
    X = _as_matrix(X)
    if X.shape[1] != model.n_features:
        raise ShapeError(f"query has {X.shape[1]} features, model expects {model.n_features}")
    stages = staged_predictions(model, X, stage_rounds(model.config.n_rounds))
    mean = stages[-1]  # last checkpoint is always round n
    std = stages.std(axis=0)
    return [Prediction(float(m), float(s)) for m, s in zip(mean, std)]
