"""CART regression trees, random forests and squared-loss gradient boosting."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from aeris import checkpoint, kernels
from aeris.linear import contiguous_folds
from aeris.numcore.rng import SeededRng


@dataclass
class TreeNode:
    value: float
    n_samples: int
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self):
        return self.left is None


@dataclass
class TreeSpec:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")


@dataclass
class ForestSpec(TreeSpec):
    n_estimators: int = 100
    bootstrap: bool = True
    max_features: int | str | None = "third"

    def __post_init__(self):
        super().__post_init__()
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")


@dataclass
class BoostSpec(TreeSpec):
    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int | None = 3
    patience: int | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")


class RegressionTree:
    """A fitted tree stored both as linked nodes and as flat arrays for prediction."""

    def __init__(self, root, n_features):
        self.root = root
        self.n_features = n_features
        self._flatten()

    def _flatten(self):
        feat, thr, left, right, val = [], [], [], [], []
        stack = [self.root]
        index = {}
        order = []
        while stack:
            node = stack.pop()
            index[id(node)] = len(order)
            order.append(node)
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)
        for node in order:
            feat.append(node.feature if not node.is_leaf else -1)
            thr.append(node.threshold)
            val.append(node.value)
            left.append(index[id(node.left)] if not node.is_leaf else -1)
            right.append(index[id(node.right)] if not node.is_leaf else -1)
        self.nodes = order
        self.feature = np.array(feat, dtype=np.int64)
        self.threshold = np.array(thr)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(val)

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def depth(self):
        def d(node):
            return 0 if node.is_leaf else 1 + max(d(node.left), d(node.right))
        return d(self.root)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        idx = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[idx] >= 0
        while active.any():
            a = rows[active]
            node = idx[a]
            go_left = X[a, self.feature[node]] <= self.threshold[node]
            idx[a] = np.where(go_left, self.left[node], self.right[node])
            active = self.feature[idx] >= 0
        return self.value[idx]

    def to_list(self):
        return [
            {"feature": int(f), "threshold": float(t), "left": int(lc), "right": int(rc),
             "value": float(v), "n": int(n.n_samples)}
            for f, t, lc, rc, v, n in zip(self.feature, self.threshold, self.left,
                                          self.right, self.value, self.nodes)
        ]

    @classmethod
    def from_list(cls, rows, n_features):
        nodes = [TreeNode(r["value"], r["n"], r["feature"], r["threshold"]) for r in rows]
        for node, r in zip(nodes, rows):
            if r["left"] >= 0:
                node.left = nodes[r["left"]]
                node.right = nodes[r["right"]]
        return cls(nodes[0], n_features)


def _n_features_per_split(max_features, p):
    if max_features is None:
        return p
    if max_features == "third":
        return max(1, math.ceil(p / 3))
    return max(1, min(p, int(max_features)))


def fit_tree(X, y, spec=None, rng=None, max_features=None):
    """Greedy CART on squared error.

    Candidate thresholds are midpoints of consecutive distinct values; ties
    go to the lowest feature index, then the lowest threshold. With
    ``max_features`` below the feature count, each split considers a random
    subset drawn from ``rng``.
    """
    spec = spec or TreeSpec()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree to empty data")
    k = _n_features_per_split(max_features, p)
    if k < p and rng is None:
        raise ValueError("feature subsampling needs an rng")
    all_features = np.arange(p)

    root = TreeNode(float(y.mean()), n)
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        yy = y[idx]
        if (idx.size < spec.min_samples_split
                or (spec.max_depth is not None and depth >= spec.max_depth)
                or yy.max() == yy.min()):
            continue
        feats = all_features if k == p else np.sort(rng.choice(p, size=k, replace=False))
        f, thr, _ = kernels.best_split(X[idx], yy, feats, spec.min_samples_leaf)
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        node.feature, node.threshold = f, thr
        node.left = TreeNode(float(y[li].mean()), li.size)
        node.right = TreeNode(float(y[ri].mean()), ri.size)
        stack.append((node.right, ri, depth + 1))
        stack.append((node.left, li, depth + 1))
    return RegressionTree(root, p)


@dataclass
class RandomForest:
    trees: list
    spec: ForestSpec
    seed: int

    def predict(self, X):
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def to_dict(self):
        return {"model": "random-forest", "spec": asdict(self.spec), "seed": self.seed,
                "n_features": self.trees[0].n_features, "trees": [t.to_list() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        trees = [RegressionTree.from_list(t, d["n_features"]) for t in d["trees"]]
        return cls(trees, ForestSpec(**d["spec"]), d["seed"])


def fit_random_forest(X, y, spec=None, seed=0):
    """Bagged CART trees; tree ``i`` draws from child stream ``i`` of the seed."""
    spec = spec or ForestSpec()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    master = SeededRng(seed)
    tree_spec = TreeSpec(spec.max_depth, spec.min_samples_split, spec.min_samples_leaf)
    trees = []
    for i in range(spec.n_estimators):
        rng = master.spawn(i)
        idx = rng.integers(0, n, size=n) if spec.bootstrap else np.arange(n)
        trees.append(fit_tree(X[idx], y[idx], tree_spec, rng, spec.max_features))
    return RandomForest(trees, spec, seed)


@dataclass
class GradientBoosting:
    base: float
    trees: list
    spec: BoostSpec
    train_loss: list = field(default_factory=list, repr=False)
    val_loss: list = field(default_factory=list, repr=False)

    def predict(self, X, n_rounds=None):
        X = np.asarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.base)
        for t in self.trees[:n_rounds]:
            out += self.spec.learning_rate * t.predict(X)
        return out

    def to_dict(self):
        return {"model": "gbm", "spec": asdict(self.spec), "base": self.base,
                "n_features": self.trees[0].n_features if self.trees else 0,
                "trees": [t.to_list() for t in self.trees]}

    @classmethod
    def from_dict(cls, d):
        trees = [RegressionTree.from_list(t, d["n_features"]) for t in d["trees"]]
        return cls(d["base"], trees, BoostSpec(**d["spec"]))


def fit_gradient_boosting(X, y, spec=None, seed=0, X_val=None, y_val=None):
    """Squared-loss boosting: start from the mean and fit each tree to residuals.

    With validation data and ``spec.patience``, stops once the validation MSE
    has not improved for ``patience`` rounds and keeps the best prefix.
    """
    del seed  # the fit is deterministic; accepted for a uniform interface
    spec = spec or BoostSpec()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    tree_spec = TreeSpec(spec.max_depth, spec.min_samples_split, spec.min_samples_leaf)
    base = float(y.mean())
    pred = np.full(y.size, base)
    model = GradientBoosting(base, [], spec)
    model.train_loss.append(float(np.mean((y - pred) ** 2)))
    use_val = X_val is not None and spec.patience
    if use_val:
        vpred = np.full(len(y_val), base)
        model.val_loss.append(float(np.mean((y_val - vpred) ** 2)))
        best, best_round, wait = model.val_loss[0], 0, 0
    for m in range(spec.n_estimators):
        tree = fit_tree(X, y - pred, tree_spec)
        model.trees.append(tree)
        pred = pred + spec.learning_rate * tree.predict(X)
        model.train_loss.append(float(np.mean((y - pred) ** 2)))
        if use_val:
            vpred = vpred + spec.learning_rate * tree.predict(X_val)
            v = float(np.mean((y_val - vpred) ** 2))
            model.val_loss.append(v)
            if v < best:
                best, best_round, wait = v, m + 1, 0
            else:
                wait += 1
                if wait >= spec.patience:
                    model.trees = model.trees[:best_round]
                    break
    return model


def save_ensemble(model, path):
    checkpoint.save(path, "trees", model.to_dict())


def load_ensemble(path):
    d = checkpoint.load(path, "trees")
    return RandomForest.from_dict(d) if d["model"] == "random-forest" else GradientBoosting.from_dict(d)


def grid_search_trees(X, y, grids, kind="gbm", folds=3, seed=0):
    """Exhaustive search over the product of ``grids`` (field name -> values).

    Folds are contiguous in time. Highest mean negative MSE wins; ties go to
    fewer estimators, then shallower trees. Returns ``(best_spec, scores)``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    spec_cls, fitter = (BoostSpec, fit_gradient_boosting) if kind == "gbm" else (ForestSpec, fit_random_forest)
    keys = sorted(grids)
    if not keys or any(len(grids[k]) == 0 for k in keys):
        raise ValueError("grids must be non-empty")
    edges = contiguous_folds(X.shape[0], folds)
    results = []
    for combo in itertools.product(*(grids[k] for k in keys)):
        spec = spec_cls(**dict(zip(keys, combo)))
        fold_scores = []
        for lo, hi in edges:
            mask = np.ones(X.shape[0], dtype=bool)
            mask[lo:hi] = False
            model = fitter(X[mask], y[mask], spec, seed)
            err = y[lo:hi] - model.predict(X[lo:hi])
            fold_scores.append(-float(err @ err) / err.size)
        results.append((float(np.mean(fold_scores)), spec))

    def rank(item):
        score, spec = item
        depth = math.inf if spec.max_depth is None else spec.max_depth
        return (-score, spec.n_estimators, depth)

    best = min(results, key=rank)
    return best[1], results
