"""One-vs-rest linear classifiers trained by per-sample stochastic updates."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .base import FromScratchClassifier, Unsupported

LOSSES = ("hinge", "log", "perceptron", "modified_huber", "passive_aggressive")
PENALTIES = ("none", "l1", "l2", "elasticnet")


def loss_value(loss: str, margin):
    """Per-example loss as a function of the signed margin y * score."""
    m = np.asarray(margin, dtype=np.float64)
    if loss in ("hinge", "passive_aggressive"):
        return np.maximum(0.0, 1.0 - m)
    if loss == "perceptron":
        return np.maximum(0.0, -m)
    if loss == "log":
        return np.logaddexp(0.0, -m)
    if loss == "modified_huber":
        return np.where(m >= -1.0, np.maximum(0.0, 1.0 - m) ** 2, -4.0 * m)
    raise ValueError(f"unknown loss {loss!r}")


def loss_slope(loss: str, margin):
    """``-d loss / d margin`` (a subgradient where the loss has a kink)."""
    m = np.asarray(margin, dtype=np.float64)
    if loss in ("hinge", "passive_aggressive"):
        return (m < 1.0).astype(np.float64)
    if loss == "perceptron":
        return (m <= 0.0).astype(np.float64)
    if loss == "log":
        return expit(-m)
    if loss == "modified_huber":
        return np.where(m < -1.0, 4.0, np.where(m < 1.0, 2.0 * (1.0 - m), 0.0))
    raise ValueError(f"unknown loss {loss!r}")


class SGDClassifier(FromScratchClassifier):
    """Linear scores ``W x + b`` per class, fit one-vs-rest.

    Each step applies the penalty (L2 shrinkage, then L1 soft-thresholding)
    followed by the loss subgradient step. The step size is
    ``learning_rate / sqrt(epoch)``. ``loss="passive_aggressive"`` uses the
    closed-form PA-I step ``min(C, hinge / |x|^2)`` instead.
    """

    def __init__(self, loss="hinge", penalty="l2", alpha=1e-4, l1_ratio=0.15, C=1.0,
                 epochs=30, learning_rate=0.01, fit_intercept=True, shuffle=True,
                 random_state=0):
        self.loss = loss
        self.penalty = penalty
        self.alpha = alpha
        self.l1_ratio = l1_ratio
        self.C = C
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.fit_intercept = fit_intercept
        self.shuffle = shuffle
        self.random_state = random_state

    def _validate(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.penalty not in PENALTIES:
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self._alpha() < 0 or self.C <= 0 or self.learning_rate <= 0 or self.epochs < 0:
            raise ValueError("alpha, C, learning_rate and epochs must be positive")
        if not 0 <= self.l1_ratio <= 1:
            raise ValueError("l1_ratio must lie in [0, 1]")

    def _alpha(self) -> float:
        return self.alpha

    def _penalty_strengths(self):
        a = self._alpha()
        return {
            "none": (0.0, 0.0),
            "l2": (a, 0.0),
            "l1": (0.0, a),
            "elasticnet": (a * (1 - self.l1_ratio), a * self.l1_ratio),
        }[self.penalty]

    def _targets(self, y):
        K = len(self.classes_)
        T = -np.ones((len(y), K))
        T[np.arange(len(y)), y] = 1.0
        return T

    def _fit(self, X, y):
        self._validate()
        n, d = X.shape
        K = len(self.classes_)
        T = self._targets(y)
        self.coef_ = np.zeros((K, d))
        self.intercept_ = np.zeros(K)
        self.objective_history_ = []
        if K == 1:
            self.intercept_[:] = 1.0
            return
        rng = np.random.default_rng(self.random_state)
        l2, l1 = self._penalty_strengths()
        sq_norms = np.einsum("ij,ij->i", X, X) + (1.0 if self.fit_intercept else 0.0)
        W, b = self.coef_, self.intercept_
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(n) if self.shuffle else np.arange(n)
            eta = self.learning_rate / np.sqrt(epoch)
            for i in order:
                x, t = X[i], T[i]
                margin = t * (W @ x + b)
                if self.loss == "passive_aggressive":
                    hinge = np.maximum(0.0, 1.0 - margin)
                    step = t * np.minimum(self.C, hinge / sq_norms[i])
                else:
                    if l2:
                        W *= 1.0 - eta * l2
                    if l1:
                        np.copysign(np.maximum(np.abs(W) - eta * l1, 0.0), W, out=W)
                    step = eta * t * loss_slope(self.loss, margin)
                active = np.flatnonzero(step)
                if active.size:
                    W[active] += np.outer(step[active], x)
                    if self.fit_intercept:
                        b[active] += step[active]
            self.objective_history_.append(self.objective(X, y))

    def objective(self, X, y) -> float:
        """Mean training loss over all one-vs-rest problems plus the penalty."""
        T = self._targets(y)
        margins = T * (X @ self.coef_.T + self.intercept_)
        loss = self.loss if self.loss != "passive_aggressive" else "hinge"
        l2, l1 = self._penalty_strengths()
        reg = 0.5 * l2 * np.sum(self.coef_ ** 2) + l1 * np.sum(np.abs(self.coef_))
        return float(loss_value(loss, margins).sum(axis=1).mean() + reg)

    def decision_function(self, X):
        X = self._check_predict_input(X)
        return self._scores(X)

    def _scores(self, X):
        return X @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        if self.loss != "log":
            raise Unsupported(f"probabilities need loss='log', not {self.loss!r}")
        X = self._check_predict_input(X)
        if len(self.classes_) == 1:
            return np.ones((len(X), 1))
        p = expit(self._scores(X))
        return p / p.sum(axis=1, keepdims=True)


class Perceptron(SGDClassifier):
    def __init__(self, penalty="none", alpha=1e-4, l1_ratio=0.15, epochs=30,
                 learning_rate=0.01, fit_intercept=True, shuffle=True, random_state=0):
        super().__init__(loss="perceptron", penalty=penalty, alpha=alpha, l1_ratio=l1_ratio,
                         epochs=epochs, learning_rate=learning_rate,
                         fit_intercept=fit_intercept, shuffle=shuffle, random_state=random_state)


class PassiveAggressiveClassifier(SGDClassifier):
    def __init__(self, C=1.0, epochs=30, fit_intercept=True, shuffle=True, random_state=0):
        super().__init__(loss="passive_aggressive", penalty="none", C=C, epochs=epochs,
                         fit_intercept=fit_intercept, shuffle=shuffle, random_state=random_state)


class LogisticRegression(SGDClassifier):
    """Log loss with penalty strength ``alpha = 1 / (C * n_samples)``."""

    def __init__(self, C=1.0, penalty="l2", l1_ratio=0.15, epochs=30, learning_rate=0.01,
                 fit_intercept=True, shuffle=True, random_state=0):
        super().__init__(loss="log", penalty=penalty, C=C, l1_ratio=l1_ratio, epochs=epochs,
                         learning_rate=learning_rate, fit_intercept=fit_intercept,
                         shuffle=shuffle, random_state=random_state)

    def _alpha(self) -> float:
        return 1.0 / (self.C * self.n_train_)

    def _fit(self, X, y):
        self.n_train_ = len(X)
        super()._fit(X, y)
