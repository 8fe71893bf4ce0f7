"""CART decision trees, random forests and multinomial gradient boosting.

Everything is numpy; nodes keep the per-node statistics (class counts,
impurity, fraction of training rows) that impurity-based importance needs.
Prediction goes through a flattened array form of the trees so that whole
ensembles are evaluated in one vectorized walk.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Iterator, Optional, Sequence

import numpy as np

from .data import Dataset
from .errors import DataError, NumericError, SchemaError

# Candidate splits whose impurity decrease is within this of the best are
# treated as ties (then: lowest feature index, lowest threshold).
TIE_TOL = 1e-12


def gini_impurity(class_counts) -> float:
    """Probability of mislabelling a random row drawn from the node."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("class counts must be nonnegative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("class counts sum to zero")
    p = counts / total
    return float(np.sum(p * (1.0 - p)))


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    threshold: float
    impurity_decrease: float


def _midpoint(lo: float, hi: float) -> float:
    t = (lo + hi) / 2.0
    # a midpoint that rounds up onto hi would send hi to the left child
    return lo if t == hi else t


class _Bins:
    """Column-wise ranks of X into one global bin index space.

    Bin ``offsets[f] + r`` holds the r-th smallest distinct value of
    feature f, so a node's split statistics are one ``bincount`` away.
    """

    def __init__(self, X: np.ndarray):
        n, F = X.shape
        self.codes = np.empty((n, F), dtype=np.intp)
        values, sizes = [], []
        offset = 0
        for f in range(F):
            uniq, inv = np.unique(X[:, f], return_inverse=True)
            self.codes[:, f] = inv + offset
            values.append(uniq)
            sizes.append(uniq.size)
            offset += uniq.size
        self.values = np.concatenate(values) if values else np.empty(0)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.intp)
        self.feature_of = np.repeat(np.arange(F), sizes)


def _scan_splits(bins: _Bins, idx, features, target, n_classes, min_samples_leaf, n_total):
    """Best split of rows ``idx`` over ``features``.

    ``target`` is class codes (Gini, ``n_classes`` > 0) or a regression
    target (squared error, ``n_classes`` == 0).  Both criteria reduce to
    maximizing  |left sums|^2/n_left + |right sums|^2/n_right.
    Returns (SplitCandidate, bin of the threshold's lower value) or None.
    """
    n = idx.size
    if n < 2 * min_samples_leaf or n < 2:
        return None
    V = bins.values.size
    G = bins.codes[np.ix_(idx, features)]
    if n_classes:
        y = target[idx]
        hist = np.bincount((G * n_classes + y[:, None]).ravel(),
                           minlength=V * n_classes).reshape(V, n_classes).astype(np.float64)
        count = hist.sum(axis=1)
        total = np.bincount(y, minlength=n_classes).astype(np.float64)
    else:
        r = target[idx]
        flat = G.ravel()
        hist = np.bincount(flat, weights=np.repeat(r, G.shape[1]), minlength=V)[:, None]
        count = np.bincount(flat, minlength=V).astype(np.float64)
        total = np.array([r.sum()])
    present = np.flatnonzero(count)
    feat = bins.feature_of[present]
    same = feat[:-1] == feat[1:]
    lo, hi = present[:-1][same], present[1:][same]
    if lo.size == 0:
        return None
    start = bins.offsets[feat[:-1][same]]
    cum = np.vstack([np.zeros((1, hist.shape[1])), np.cumsum(hist, axis=0)])
    ccount = np.concatenate([[0.0], np.cumsum(count)])
    left = cum[lo + 1] - cum[start]
    n_left = ccount[lo + 1] - ccount[start]
    right = total - left
    n_right = n - n_left
    proxy = np.einsum("ij,ij->i", left, left) / n_left + np.einsum("ij,ij->i", right, right) / n_right
    decrease = (proxy - np.dot(total, total) / n) / n_total
    if min_samples_leaf > 1:
        decrease = np.where((n_left >= min_samples_leaf) & (n_right >= min_samples_leaf),
                            decrease, -np.inf)
    best = decrease.max()
    if best == -np.inf:
        return None
    i = int(np.argmax(decrease >= best - TIE_TOL))
    threshold = _midpoint(float(bins.values[lo[i]]), float(bins.values[hi[i]]))
    split = SplitCandidate(int(bins.feature_of[lo[i]]), threshold, float(decrease[i]))
    return split, int(lo[i])


def best_split(X, y, candidate_features: Optional[Sequence[int]] = None,
               min_samples_leaf: int = 1, n_total: Optional[int] = None) -> Optional[SplitCandidate]:
    """Gini split maximizing w*C - w_left*C_left - w_right*C_right.

    Weights are fractions of ``n_total`` rows (default: the rows given).
    Returns None for a pure node or when no threshold leaves at least
    ``min_samples_leaf`` rows on each side.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise DataError("best_split needs at least one row")
    _, codes = np.unique(y, return_inverse=True)
    if codes.max() == 0:
        return None
    feats = np.arange(X.shape[1]) if candidate_features is None else np.sort(np.asarray(candidate_features))
    found = _scan_splits(_Bins(X), np.arange(X.shape[0]), feats, codes, int(codes.max()) + 1,
                         min_samples_leaf, n_total or X.shape[0])
    return None if found is None else found[0]


# ---------------------------------------------------------------------------
# Parameters


class ParamsMixin:
    _aliases: dict = {}

    @classmethod
    def from_dict(cls, d: Optional[dict]):
        d = dict(d or {})
        for alias, name in cls._aliases.items():
            if alias in d:
                d[name] = d.pop(alias)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


_ALIASES = {"max_feature": "max_features", "min_sample_split": "min_samples_split",
            "min_sample_leaf": "min_samples_leaf", "n_estimator": "n_estimators",
            "lr": "learning_rate"}


@dataclass(frozen=True)
class TreeParams(ParamsMixin):
    max_depth: Optional[int] = None
    max_features: Optional[int] = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    _aliases = _ALIASES

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split must be >= 2 and min_samples_leaf >= 1")


@dataclass(frozen=True)
class ForestParams(TreeParams):
    n_estimators: int = 100
    bootstrap: bool = True

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.max_features,
                          self.min_samples_split, self.min_samples_leaf)


@dataclass(frozen=True)
class GbmParams(TreeParams):
    max_depth: Optional[int] = 3
    n_estimators: int = 100
    learning_rate: float = 0.1

    def tree_params(self) -> TreeParams:
        return TreeParams(self.max_depth, self.max_features,
                          self.min_samples_split, self.min_samples_leaf)


# Best configurations reported for the survey data.
TUNED_DT = TreeParams(max_depth=20, max_features=61, min_samples_split=3, min_samples_leaf=3)
TUNED_RF = ForestParams(max_depth=6, max_features=61, min_samples_split=4, n_estimators=500)
TUNED_GB = GbmParams(learning_rate=0.1, max_depth=1, n_estimators=150)


# ---------------------------------------------------------------------------
# Tree structures


@dataclass(eq=False)
class TreeNode:
    n_samples: int
    weighted_n: float  # fraction of the tree's training rows reaching the node
    impurity: float
    value: np.ndarray  # class proportions, or [mean target] for regression
    class_counts: Optional[np.ndarray] = None
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def class_proportions(self) -> np.ndarray:
        return self.value

    def walk(self) -> Iterator["TreeNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)


@dataclass(frozen=True)
class _Flat:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    roots: np.ndarray
    depth: int


def _flatten(roots: Sequence[TreeNode]) -> _Flat:
    feature, threshold, left, right, value, root_ids = [], [], [], [], [], []
    depth = 0
    for root in roots:
        root_ids.append(len(feature))
        stack = [(root, None, None, 0)]
        while stack:
            node, parent, side, d = stack.pop()
            i = len(feature)
            depth = max(depth, d)
            if parent is not None:
                (left if side == 0 else right)[parent] = i
            value.append(node.value)
            if node.is_leaf:
                # leaves loop onto themselves so the walk can run a fixed depth
                feature.append(0)
                threshold.append(np.inf)
                left.append(i)
                right.append(i)
            else:
                feature.append(node.feature)
                threshold.append(node.threshold)
                left.append(-1)
                right.append(-1)
                stack.append((node.right, i, 1, d + 1))
                stack.append((node.left, i, 0, d + 1))
    return _Flat(np.array(feature, dtype=np.intp), np.array(threshold, dtype=np.float64),
                 np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
                 np.array(value, dtype=np.float64), np.array(root_ids, dtype=np.intp), depth)


def _apply(flat: _Flat, X: np.ndarray) -> np.ndarray:
    """Leaf index reached by every (row, tree) pair."""
    node = np.broadcast_to(flat.roots, (X.shape[0], flat.roots.size)).copy()
    rows = np.arange(X.shape[0])[:, None]
    for _ in range(flat.depth):
        go_left = X[rows, flat.feature[node]] <= flat.threshold[node]
        node = np.where(go_left, flat.left[node], flat.right[node])
    return node


def _check_width(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise SchemaError(f"expected rows of width {n_features}, got shape {X.shape}")
    return X


class _Classifier:
    classes: np.ndarray
    n_features: int

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes[np.argmax(proba, axis=1)]


@dataclass(eq=False)
class DecisionTreeModel(_Classifier):
    root: TreeNode
    classes: np.ndarray
    n_features: int
    params: TreeParams = field(default_factory=TreeParams)
    seed: int = 0
    criterion: str = "gini"  # or "squared_error" for boosting stages

    def __post_init__(self):
        self._flat = None

    @property
    def flat(self) -> _Flat:
        if self._flat is None:
            self._flat = _flatten([self.root])
        return self._flat

    @property
    def nodes(self) -> list[TreeNode]:
        return list(self.root.walk())

    @property
    def depth(self) -> int:
        return self.flat.depth

    def predict_proba(self, X) -> np.ndarray:
        X = _check_width(X, self.n_features)
        return self.flat.value[_apply(self.flat, X)[:, 0]]

    def predict_value(self, X) -> np.ndarray:
        """Regression output (boosting stages)."""
        return self.predict_proba(X)[:, 0]


def _grow(bins: _Bins, rows, target, n_classes, params: TreeParams, rng) -> TreeNode:
    """Greedy depth-first growth over ``rows`` (indices into ``bins``, may repeat)."""
    n_total = rows.size
    n_features = bins.codes.shape[1]
    max_depth = np.inf if params.max_depth is None else params.max_depth
    m = n_features if params.max_features is None else min(params.max_features, n_features)
    msl = params.min_samples_leaf

    def make(idx):
        if n_classes:
            counts = np.bincount(target[idx], minlength=n_classes).astype(np.float64)
            node = TreeNode(idx.size, idx.size / n_total, gini_impurity(counts),
                            counts / idx.size, counts)
            return node, np.count_nonzero(counts) > 1
        t = target[idx]
        node = TreeNode(idx.size, idx.size / n_total, float(np.var(t)), np.array([t.mean()]))
        return node, bool(np.ptp(t) > 0)

    root, mixed = make(rows)
    stack = [(root, rows, 0, mixed)]
    while stack:
        node, idx, depth, mixed = stack.pop()
        n = idx.size
        if depth >= max_depth or n < params.min_samples_split or n < 2 * msl or not mixed:
            continue
        if m < n_features:
            feats = np.sort(rng.choice(n_features, size=m, replace=False))
        else:
            feats = np.arange(n_features)
        found = _scan_splits(bins, idx, feats, target, n_classes, msl, n_total)
        if found is None:
            continue
        split, lo_bin = found
        go_left = bins.codes[idx, split.feature] <= lo_bin
        node.feature, node.threshold = split.feature, split.threshold
        left_idx, right_idx = idx[go_left], idx[~go_left]
        node.left, lmixed = make(left_idx)
        node.right, rmixed = make(right_idx)
        stack.append((node.right, right_idx, depth + 1, rmixed))
        stack.append((node.left, left_idx, depth + 1, lmixed))
    return root


def _xy(train: Dataset):
    if train.n_rows == 0:
        raise DataError("cannot fit on an empty training set")
    if train.has_missing():
        raise DataError("training data contains missing values; impute first")
    classes, codes = np.unique(train.y, return_inverse=True)
    return np.asarray(train.X), classes, codes


def fit_tree(train: Dataset, params: TreeParams = TreeParams(), seed: int = 0) -> DecisionTreeModel:
    X, classes, codes = _xy(train)
    root = _grow(_Bins(X), np.arange(X.shape[0]), codes, classes.size, params,
                 np.random.default_rng(seed))
    return DecisionTreeModel(root, classes, X.shape[1], params, seed)


def fit_regression_tree(X, target, params: TreeParams, rng=None, bins=None) -> DecisionTreeModel:
    """Squared-error tree; leaves predict the mean target."""
    X = np.asarray(X, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    rng = rng if rng is not None else np.random.default_rng(0)
    bins = bins if bins is not None else _Bins(X)
    root = _grow(bins, np.arange(X.shape[0]), target, 0, params, rng)
    return DecisionTreeModel(root, np.array([0]), X.shape[1], params, 0, "squared_error")


# ---------------------------------------------------------------------------
# Ensembles


@dataclass(eq=False)
class ForestModel(_Classifier):
    trees: list
    classes: np.ndarray
    n_features: int
    params: ForestParams = field(default_factory=ForestParams)
    seed: int = 0

    def __post_init__(self):
        self._flat = None

    @property
    def flat(self) -> _Flat:
        if self._flat is None:
            self._flat = _flatten([t.root for t in self.trees])
        return self._flat

    def predict_proba(self, X) -> np.ndarray:
        X = _check_width(X, self.n_features)
        return self.flat.value[_apply(self.flat, X)].mean(axis=1)


def _tree_rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def fit_forest(train: Dataset, params: ForestParams = ForestParams(), seed: int = 0) -> ForestModel:
    """Bagged trees; tree t draws from a stream derived from (seed, t)."""
    X, classes, codes = _xy(train)
    n = X.shape[0]
    tree_params = params.tree_params()
    bins = _Bins(X)
    trees = []
    for rng in _tree_rngs(seed, params.n_estimators):
        rows = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        root = _grow(bins, rows, codes, classes.size, tree_params, rng)
        trees.append(DecisionTreeModel(root, classes, X.shape[1], tree_params, 0))
    return ForestModel(trees, classes, X.shape[1], params, seed)


def _softmax_weighted(prior_counts, delta):
    """Softmax of log(prior) + delta, exact at delta == 0."""
    shifted = np.exp(delta - delta.max(axis=1, keepdims=True))
    w = prior_counts * shifted
    return w / w.sum(axis=1, keepdims=True)


@dataclass(eq=False)
class GbmModel(_Classifier):
    stages: list  # stages[r][k]: regression tree for class k in round r
    classes: np.ndarray
    n_features: int
    prior_counts: np.ndarray
    params: GbmParams = field(default_factory=GbmParams)
    seed: int = 0
    train_deviance: list = field(default_factory=list)

    def __post_init__(self):
        self._flat = None

    @property
    def learning_rate(self) -> float:
        return self.params.learning_rate

    @property
    def init_scores(self) -> np.ndarray:
        return np.log(self.prior_counts / self.prior_counts.sum())

    @property
    def flat(self) -> _Flat:
        if self._flat is None:
            self._flat = _flatten([t.root for stage in self.stages for t in stage])
        return self._flat

    def _delta(self, X) -> np.ndarray:
        K = self.n_classes
        if not self.stages:
            return np.zeros((X.shape[0], K))
        leaves = self.flat.value[_apply(self.flat, X), 0]
        return self.learning_rate * leaves.reshape(X.shape[0], len(self.stages), K).sum(axis=1)

    def decision_function(self, X) -> np.ndarray:
        X = _check_width(X, self.n_features)
        return self.init_scores + self._delta(X)

    def predict_proba(self, X) -> np.ndarray:
        X = _check_width(X, self.n_features)
        return _softmax_weighted(self.prior_counts, self._delta(X))


def multinomial_deviance(proba, codes) -> float:
    p = proba[np.arange(codes.size), codes]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def fit_gbm(train: Dataset, params: GbmParams = GbmParams(), seed: int = 0) -> GbmModel:
    """Multinomial-deviance boosting with one regression tree per class per round.

    Leaves hold the mean residual (one-hot target minus probability).
    """
    X, classes, codes = _xy(train)
    K = classes.size
    if K < 2:
        raise DataError("gradient boosting needs at least two classes")
    n = X.shape[0]
    Y = np.eye(K)[codes]
    prior_counts = Y.sum(axis=0)
    tree_params = params.tree_params()
    rng = np.random.default_rng(seed)
    bins = _Bins(X)
    delta = np.zeros((n, K))
    proba = _softmax_weighted(prior_counts, delta)
    deviance = [multinomial_deviance(proba, codes)]
    stages = []
    for _ in range(params.n_estimators):
        residual = Y - proba
        stage = []
        for k in range(K):
            tree = fit_regression_tree(X, residual[:, k], tree_params, rng, bins)
            stage.append(tree)
            delta[:, k] += params.learning_rate * tree.predict_value(X)
        stages.append(stage)
        proba = _softmax_weighted(prior_counts, delta)
        deviance.append(multinomial_deviance(proba, codes))
        if not np.isfinite(deviance[-1]):
            raise NumericError("boosting deviance became non-finite")
    return GbmModel(stages, classes, X.shape[1], prior_counts, params, seed, deviance)


def predict_proba(model, x) -> np.ndarray:
    """Class distribution(s) for one row (1-D result) or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    proba = model.predict_proba(x)
    return proba[0] if x.ndim == 1 else proba
