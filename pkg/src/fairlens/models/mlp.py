from __future__ import annotations

import numpy as np

from fairlens.models.base import Model, TrainingError, sigmoid


class Nadam:
    """Adam with Nesterov momentum, as in Dozat (2016) without momentum decay."""

    def __init__(self, shapes, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2, t = self.b1, self.b2, self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** (t + 1))
            g_hat = g / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            p -= self.lr * (b1 * m_hat + (1 - b1) * g_hat) / (np.sqrt(v_hat) + self.eps)


class MLP(Model):
    """Fully connected ReLU network with a single sigmoid output unit.

    ``layer_widths`` lists every layer including the output, so the default
    ``(30, 20, 15, 10, 5, 1)`` has five hidden layers.  Trained with binary
    cross-entropy and Nadam on mini-batches.
    """

    kind = "MLP"

    def __init__(self, schema, config, seed=0):
        super().__init__(schema, config, seed)
        sizes = [self.n_features, *config.layer_widths]
        self.weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        self.biases = [np.zeros(b) for b in sizes[1:]]

    def init_params(self, rng):
        for i, W in enumerate(self.weights):
            limit = np.sqrt(6.0 / (W.shape[0] + W.shape[1]))
            self.weights[i] = rng.uniform(-limit, limit, size=W.shape)
            self.biases[i] = np.zeros(W.shape[1])

    def _forward(self, Z):
        acts = [Z]
        h = Z
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ W + b
            h = sigmoid(a) if i == last else np.maximum(a, 0.0)
            acts.append(h)
        return acts

    def _proba(self, Z):
        h = Z
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            a = h @ W + b
            h = sigmoid(a) if i == last else np.maximum(a, 0.0)
        return h[:, 0]

    def _backward(self, acts, delta):
        """Backpropagate ``delta`` (gradient w.r.t. the output pre-activation)."""
        gW, gb = [], []
        for i in range(len(self.weights) - 1, -1, -1):
            gW.append(acts[i].T @ delta)
            gb.append(delta.sum(axis=0))
            delta = delta @ self.weights[i].T
            if i > 0:
                delta = delta * (acts[i] > 0)
        return gW[::-1], gb[::-1], delta

    def input_gradient(self, X) -> np.ndarray:
        """d p(class 1) / d (scaled input), one row per instance."""
        X = np.asarray(X)
        Z = self.scale(np.atleast_2d(X))
        acts = self._forward(Z)
        p = acts[-1]
        _, _, dz = self._backward(acts, p * (1.0 - p))
        return dz[0] if X.ndim == 1 else dz

    def fit(self, Z, y, rng):
        self.init_params(rng)
        self.continue_training(Z, y, self.config.epochs, rng)

    def continue_training(self, Z, y, epochs, rng):
        cfg = self.config
        params = self.weights + self.biases
        opt = Nadam([p.shape for p in params], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
        yy = y.astype(float)[:, None]
        n = len(Z)
        for epoch in range(epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                acts = self._forward(Z[idx])
                p = np.clip(acts[-1], 1e-12, 1 - 1e-12)
                total -= float(np.sum(yy[idx] * np.log(p) + (1 - yy[idx]) * np.log(1 - p)))
                # sigmoid + cross-entropy: d loss / d pre-activation = p - y
                gW, gb, _ = self._backward(acts, (acts[-1] - yy[idx]) / len(idx))
                opt.step(params, gW + gb)
            if not np.isfinite(total):
                raise TrainingError(f"non-finite loss in epoch {epoch}")
        self.last_loss = total / max(n, 1)

    def get_params(self):
        d = {}
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            d[f"W{i}"] = W
            d[f"b{i}"] = b
        return d

    def set_params(self, params):
        n = len(self.weights)
        self.weights = [np.asarray(params[f"W{i}"], dtype=float) for i in range(n)]
        self.biases = [np.asarray(params[f"b{i}"], dtype=float) for i in range(n)]
