"""Input validation shared by the from-scratch classifiers."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted


class EmptyClass(ValueError):
    pass


class NonFiniteFeature(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class Unsupported(AttributeError):
    """Raised when a model variant cannot produce probabilities."""


def check_features(X, dtype=np.float64) -> np.ndarray:
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    elif X.ndim > 2:
        X = X.reshape(len(X), -1)
    if not np.isfinite(X).all():
        raise NonFiniteFeature("features contain NaN or infinity")
    return X


def check_fit_data(X, y, dtype=np.float64):
    X = check_features(X, dtype)
    y = np.asarray(y).ravel()
    if len(y) != len(X):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} labels")
    if len(y) == 0:
        raise EmptyClass("no training samples")
    classes, y_idx = np.unique(y, return_inverse=True)
    return X, classes, y_idx


class FromScratchClassifier(ClassifierMixin, BaseEstimator):
    """Common predict/validation plumbing; subclasses implement ``_fit``."""

    _dtype = np.float64

    def fit(self, X, y):
        X, self.classes_, y_idx = check_fit_data(X, y, self._dtype)
        self.n_features_in_ = X.shape[1]
        self._fit(X, y_idx)
        return self

    def _check_predict_input(self, X) -> np.ndarray:
        check_is_fitted(self, "classes_")
        X = check_features(X, self._dtype)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(
                f"model expects {self.n_features_in_} features, got {X.shape[1]}"
            )
        return X

    def predict(self, X):
        # argmax takes the first maximum, so ties go to the smaller class id
        return self.classes_[np.argmax(self._scores(self._check_predict_input(X)), axis=1)]

    def _scores(self, X):
        raise NotImplementedError
