"""CART decision trees and a bagged random forest."""
from __future__ import annotations

import math

import numpy as np

from .base import FromScratchClassifier

# cap on n * features * classes handled per vectorized block
_BLOCK_BUDGET = 6_000_000


def _impurity_terms(counts, n, criterion):
    """Sum over children of n_child * impurity(child), up to constants.

    ``counts`` has classes on the last axis; ``n`` broadcasts against it.
    Lower is better.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "gini":
            # n * (1 - sum p^2) = n - sum(c^2) / n
            return n - np.where(n > 0, (counts * counts).sum(-1) / n, 0.0)
        # n * H = n log n - sum c log c
        clogc = np.where(counts > 0, counts * np.log(np.maximum(counts, 1)), 0.0).sum(-1)
        return np.where(n > 0, n * np.log(np.maximum(n, 1)), 0.0) - clogc


class DecisionTreeClassifier(FromScratchClassifier):
    """Greedy binary tree with gini or entropy impurity.

    ``splitter="best"`` scans every threshold between consecutive distinct
    values; ``"random"`` draws one uniform threshold per candidate feature and
    keeps the best of those.
    """

    def __init__(self, criterion="gini", max_depth=None, splitter="best",
                 max_features=None, min_samples_split=2, random_state=0):
        self.criterion = criterion
        self.max_depth = max_depth
        self.splitter = splitter
        self.max_features = max_features
        self.min_samples_split = min_samples_split
        self.random_state = random_state

    def _validate(self):
        if self.criterion not in ("gini", "entropy"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if self.splitter not in ("best", "random"):
            raise ValueError(f"unknown splitter {self.splitter!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")

    def _n_candidates(self, d):
        mf = self.max_features
        if mf is None:
            return d
        if mf == "sqrt":
            return max(1, int(math.sqrt(d)))
        if isinstance(mf, float):
            return max(1, int(mf * d))
        return max(1, min(d, int(mf)))

    def _fit(self, X, y, sample_weight=None):
        self._validate()
        rng = np.random.default_rng(self.random_state)
        K = len(self.classes_)
        n, d = X.shape
        self._n_classes = K
        onehot = np.zeros((n, K))
        onehot[np.arange(n), y] = 1.0
        if sample_weight is not None:
            onehot *= np.asarray(sample_weight, dtype=np.float64)[:, None]
        n_cand = self._n_candidates(d)
        max_depth = self.max_depth if self.max_depth is not None else np.inf

        feature, threshold, left, right, value, depth_of = [], [], [], [], [], []

        def new_node(dist, depth):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(dist)
            depth_of.append(depth)
            return len(feature) - 1

        root = new_node(onehot.sum(0), 0)
        stack = [(root, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            dist = value[node]
            if (depth_of[node] >= max_depth or len(idx) < self.min_samples_split
                    or np.count_nonzero(dist) <= 1):
                continue
            split = self._find_split(X, idx, onehot, n_cand, rng)
            if split is None:
                continue
            f, thr = split
            go_left = X[idx, f] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = f, thr
            left[node] = new_node(onehot[li].sum(0), depth_of[node] + 1)
            right[node] = new_node(onehot[ri].sum(0), depth_of[node] + 1)
            stack.append((right[node], ri))
            stack.append((left[node], li))

        self.tree_feature_ = np.asarray(feature, dtype=np.int64)
        self.tree_threshold_ = np.asarray(threshold, dtype=np.float64)
        self.tree_left_ = np.asarray(left, dtype=np.int64)
        self.tree_right_ = np.asarray(right, dtype=np.int64)
        self.tree_value_ = np.asarray(value, dtype=np.float64)
        self.tree_depth_ = np.asarray(depth_of, dtype=np.int64)

    def _find_split(self, X, idx, onehot, n_cand, rng):
        Xn = X[idx]
        varying = np.flatnonzero(Xn.max(axis=0) > Xn.min(axis=0))
        if varying.size == 0:
            return None
        if n_cand < X.shape[1]:
            # resample among non-constant features so a split is always possible
            varying = np.sort(rng.choice(varying, size=min(n_cand, varying.size), replace=False))
        Yn = onehot[idx]
        if self.splitter == "random":
            return self._random_split(Xn, Yn, varying, rng)
        return self._best_split(Xn, Yn, varying)

    def _best_split(self, Xn, Yn, features):
        n, K = Yn.shape
        total = Yn.sum(0)
        n_tot = total.sum()
        best = (np.inf, None, None)
        block = max(1, _BLOCK_BUDGET // max(1, n * K))
        for start in range(0, features.size, block):
            fs = features[start:start + block]
            V = Xn[:, fs]
            order = np.argsort(V, axis=0, kind="stable")
            Vs = np.take_along_axis(V, order, axis=0)
            L = np.cumsum(Yn[order], axis=0)[:-1]  # (n-1, B, K) left counts
            R = total - L
            nL = L.sum(-1)
            score = (_impurity_terms(L, nL, self.criterion)
                     + _impurity_terms(R, n_tot - nL, self.criterion))
            score[Vs[1:] <= Vs[:-1]] = np.inf
            flat = int(np.argmin(score))
            pos, b = divmod(flat, len(fs))
            if score[pos, b] < best[0]:
                thr = (float(Vs[pos, b]) + float(Vs[pos + 1, b])) / 2.0
                best = (score[pos, b], int(fs[b]), thr)
        if best[1] is None:
            return None
        return best[1], best[2]

    def _random_split(self, Xn, Yn, features, rng):
        V = Xn[:, features]
        lo, hi = V.min(axis=0), V.max(axis=0)
        thr = lo + rng.random(features.size) * (hi - lo)
        thr = np.minimum(thr, np.nextafter(hi, lo))
        go_left = (V <= thr).astype(np.float64)
        L = (Yn.T @ go_left).T  # (F, K)
        R = Yn.sum(0) - L
        nL, nR = L.sum(-1), R.sum(-1)
        score = _impurity_terms(L, nL, self.criterion) + _impurity_terms(R, nR, self.criterion)
        score[(nL == 0) | (nR == 0)] = np.inf
        b = int(np.argmin(score))
        if not np.isfinite(score[b]):
            return None
        return int(features[b]), float(thr[b])

    def apply(self, X):
        """Leaf index reached by each row."""
        X = self._check_predict_input(X)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.tree_feature_[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.tree_feature_[cur]] <= self.tree_threshold_[cur]
            node[active] = np.where(go_left, self.tree_left_[cur], self.tree_right_[cur])
            active = active[self.tree_feature_[node[active]] >= 0]
        return node

    def _scores(self, X):
        # X already validated by predict(); apply() revalidates cheaply
        return self.tree_value_[self.apply(X)]

    def predict_proba(self, X):
        counts = self.tree_value_[self.apply(X)]
        return counts / counts.sum(axis=1, keepdims=True)

    def get_depth(self) -> int:
        return int(self.tree_depth_.max())

    @property
    def n_leaves_(self) -> int:
        return int(np.count_nonzero(self.tree_feature_ < 0))


class RandomForestClassifier(FromScratchClassifier):
    """Bootstrap-aggregated trees with sqrt(D) candidate features per split.

    Prediction is a majority vote of the trees' labels (ties to the smaller
    class id); ``predict_proba`` returns the vote fractions.
    """

    def __init__(self, n_estimators=100, criterion="gini", max_depth=None,
                 max_features="sqrt", bootstrap=True, random_state=0):
        self.n_estimators = n_estimators
        self.criterion = criterion
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.random_state = random_state

    def _fit(self, X, y):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        n = len(X)
        seeds = np.random.SeedSequence(self.random_state).spawn(self.n_estimators)
        self.estimators_ = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            tree = DecisionTreeClassifier(
                criterion=self.criterion, max_depth=self.max_depth, splitter="best",
                max_features=self.max_features, random_state=int(rng.integers(2**32)),
            )
            if self.bootstrap:
                weights = np.bincount(rng.integers(n, size=n), minlength=n).astype(np.float64)
            else:
                weights = np.ones(n)
            keep = weights > 0
            # fit on the drawn rows; multiplicity enters through the class counts
            tree.classes_ = np.arange(len(self.classes_))
            tree.n_features_in_ = X.shape[1]
            tree._fit(X[keep], y[keep], sample_weight=weights[keep])
            self.estimators_.append(tree)

    def _votes(self, X):
        K = len(self.classes_)
        votes = np.zeros((len(X), K))
        rows = np.arange(len(X))
        for tree in self.estimators_:
            votes[rows, np.argmax(tree.tree_value_[tree.apply(X)], axis=1)] += 1
        return votes

    def _scores(self, X):
        return self._votes(X)

    def predict_proba(self, X):
        X = self._check_predict_input(X)
        return self._votes(X) / len(self.estimators_)
