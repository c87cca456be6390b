from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .base import FromScratchClassifier


class GaussianNB(FromScratchClassifier):
    """Per-class independent Gaussians.

    ``priors="uniform"`` gives every class probability 1/K, ``"empirical"``
    uses class frequencies, or pass an explicit sequence. Variances are
    floored at ``var_floor`` times the largest feature variance so constant
    pixels do not produce infinite log-densities.
    """

    def __init__(self, priors="uniform", var_floor=1e-9):
        self.priors = priors
        self.var_floor = var_floor

    def _fit(self, X, y):
        K = len(self.classes_)
        counts = np.bincount(y, minlength=K).astype(np.float64)
        self.theta_ = np.zeros((K, X.shape[1]))
        self.var_ = np.zeros((K, X.shape[1]))
        for c in range(K):
            Xc = X[y == c]
            self.theta_[c] = Xc.mean(axis=0)
            self.var_[c] = Xc.var(axis=0)
        self.epsilon_ = self.var_floor * float(X.var(axis=0).max())
        if self.epsilon_ == 0:
            self.epsilon_ = self.var_floor
        self.var_ = np.maximum(self.var_, self.epsilon_)
        if isinstance(self.priors, str):
            if self.priors == "uniform":
                prior = np.full(K, 1.0 / K)
            elif self.priors == "empirical":
                prior = counts / counts.sum()
            else:
                raise ValueError(f"unknown priors {self.priors!r}")
        else:
            prior = np.asarray(self.priors, dtype=np.float64)
            if prior.shape != (K,) or not np.isclose(prior.sum(), 1.0) or (prior < 0).any():
                raise ValueError("priors must be K non-negative numbers summing to 1")
        self.class_log_prior_ = np.log(prior)

    def joint_log_likelihood(self, X):
        X = self._check_predict_input(X)
        return self._scores(X)

    def _scores(self, X):
        norm = -0.5 * np.log(2.0 * np.pi * self.var_).sum(axis=1)
        quad = np.empty((len(X), len(self.classes_)))
        for c in range(len(self.classes_)):
            # direct form; the expanded quadratic cancels badly at floored variances
            quad[:, c] = (((X - self.theta_[c]) ** 2) / self.var_[c]).sum(axis=1)
        return self.class_log_prior_ + norm - 0.5 * quad

    def predict_proba(self, X):
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))
