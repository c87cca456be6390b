from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from .base import FromScratchClassifier


class KNeighborsClassifier(FromScratchClassifier):
    """k-nearest-neighbour vote under the Minkowski ``p`` distance.

    Equal distances are ordered by training index, vote ties go to the
    smaller class id. With ``weights="distance"`` a query that coincides with
    training points is decided by those points alone.
    """

    _dtype = np.float32

    def __init__(self, n_neighbors=5, weights="uniform", p=2, chunk_size=256):
        self.n_neighbors = n_neighbors
        self.weights = weights
        self.p = p
        self.chunk_size = chunk_size

    def _fit(self, X, y):
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        if self.weights not in ("uniform", "distance"):
            raise ValueError(f"unknown weights {self.weights!r}")
        if self.p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        self._X = np.ascontiguousarray(X)
        self._y = y

    def kneighbors(self, X):
        """``(distances, indices)`` of the k nearest training rows, nearest first."""
        X = self._check_predict_input(X)
        k = min(self.n_neighbors, len(self._X))
        metric = "cityblock" if self.p == 1 else "euclidean"
        dist_out = np.empty((len(X), k))
        idx_out = np.empty((len(X), k), dtype=np.int64)
        for s in range(0, len(X), self.chunk_size):
            D = cdist(X[s:s + self.chunk_size], self._X, metric=metric)
            # stable sort keeps the smaller training index first among equal distances
            order = np.argsort(D, axis=1, kind="stable")[:, :k]
            idx_out[s:s + len(D)] = order
            dist_out[s:s + len(D)] = np.take_along_axis(D, order, axis=1)
        return dist_out, idx_out

    def _scores(self, X):
        dist, idx = self.kneighbors(X)
        labels = self._y[idx]
        if self.weights == "uniform":
            w = np.ones_like(dist)
        else:
            exact = dist == 0
            with np.errstate(divide="ignore"):
                w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / dist)
        votes = np.zeros((len(X), len(self.classes_)))
        np.add.at(votes, (np.arange(len(X))[:, None], labels), w)
        return votes

    def predict_proba(self, X):
        votes = self._scores(X)
        return votes / votes.sum(axis=1, keepdims=True)
