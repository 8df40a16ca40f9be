from __future__ import annotations

import numpy as np

from fairlens.models.base import Model, TrainingError, sigmoid


class _Linear(Model):
    def __init__(self, schema, config, seed=0):
        super().__init__(schema, config, seed)
        self.w = np.zeros(self.n_features)
        self.b = 0.0

    def margin(self, Z):
        return Z @ self.w + self.b

    def _proba(self, Z):
        return sigmoid(self.margin(Z))

    def get_params(self):
        return {"w": self.w, "b": np.array([self.b])}

    def set_params(self, params):
        self.w = np.asarray(params["w"], dtype=float).reshape(self.n_features)
        self.b = float(np.asarray(params["b"]).reshape(-1)[0])


class LogisticModel(_Linear):
    """Logistic regression fitted by full-batch gradient descent on cross-entropy."""

    kind = "LR"

    def fit(self, Z, y, rng):
        self.continue_training(Z, y, self.config.iterations, rng)

    def continue_training(self, Z, y, epochs, rng):
        lr = self.config.learning_rate
        n = len(Z)
        for it in range(epochs):
            p = sigmoid(self.margin(Z))
            err = p - y
            self.w -= lr * (Z.T @ err) / n
            self.b -= lr * float(err.mean())
            if not np.isfinite(self.b) or not np.all(np.isfinite(self.w)):
                raise TrainingError(f"non-finite parameters at iteration {it}")


class LinearSVM(_Linear):
    """Linear SVM: hinge loss with L2 penalty, mini-batch SGD.

    Labels are mapped to -1/+1; the probability is the sigmoid of the margin.
    """

    kind = "SVM"

    def fit(self, Z, y, rng):
        self.continue_training(Z, y, self.config.epochs, rng)

    def continue_training(self, Z, y, epochs, rng):
        cfg = self.config
        s = np.where(y == 1, 1.0, -1.0)
        n = len(Z)
        for epoch in range(epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                zb, sb = Z[idx], s[idx]
                viol = sb * (zb @ self.w + self.b) < 1.0
                gw = cfg.l2 * self.w - (zb[viol] * sb[viol, None]).sum(axis=0) / len(idx)
                gb = -sb[viol].sum() / len(idx)
                self.w -= cfg.learning_rate * gw
                self.b -= cfg.learning_rate * gb
            if not np.isfinite(self.b) or not np.all(np.isfinite(self.w)):
                raise TrainingError(f"non-finite parameters at epoch {epoch}")
