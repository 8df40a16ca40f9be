from __future__ import annotations

import numpy as np

from fairlens.models.base import Model


def _gini(pos, tot):
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(tot > 0, pos / tot, 0.0)
    return 2.0 * p * (1.0 - p)


class DecisionTree(Model):
    """CART classifier with Gini impurity.

    Splits are searched exhaustively over every attribute; because attributes are
    small integer domains the per-node search is a bincount per attribute.
    Nodes are stored in flat arrays (``feature == -1`` marks a leaf).
    """

    kind = "DT"

    def __init__(self, schema, config, seed=0):
        super().__init__(schema, config, seed)
        self.feature = np.array([-1])
        self.threshold = np.array([0.0])
        self.left = np.array([-1])
        self.right = np.array([-1])
        self.value = np.array([0.5])

    def fit(self, Z, y, rng=None):
        cfg = self.config
        span = self._span.astype(int)
        codes = np.rint(Z * self._span).astype(np.int64)
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[idx].mean()) if len(idx) else 0.0)
            return len(feature) - 1

        root = new_node(np.arange(len(y)))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            n = len(idx)
            pos = y[idx].sum()
            if depth >= cfg.max_depth or pos == 0 or pos == n or n < 2 * cfg.min_leaf:
                continue
            parent = _gini(pos, n)
            best = None  # (impurity, feature, cut code)
            yi = y[idx]
            for j in range(self.n_features):
                c = codes[idx, j]
                tot = np.bincount(c, minlength=span[j] + 1)
                ones = np.bincount(c, weights=yi, minlength=span[j] + 1)
                ltot = np.cumsum(tot)[:-1]
                lpos = np.cumsum(ones)[:-1]
                rtot = n - ltot
                rpos = pos - lpos
                ok = (ltot >= cfg.min_leaf) & (rtot >= cfg.min_leaf) & (tot[:-1] > 0)
                if not ok.any():
                    continue
                imp = (ltot * _gini(lpos, ltot) + rtot * _gini(rpos, rtot)) / n
                imp = np.where(ok, imp, np.inf)
                k = int(np.argmin(imp))
                if best is None or imp[k] < best[0] - 1e-12:
                    best = (float(imp[k]), j, k)
            if best is None or best[0] >= parent - 1e-12:
                continue
            _, j, k = best
            cj = codes[idx, j]
            # threshold halfway between the last code on the left and the next present code
            nxt = cj[cj > k].min()
            feature[node] = j
            threshold[node] = (k + nxt) / 2.0 / self._span[j]
            go_left = cj <= k
            li, ri = idx[go_left], idx[~go_left]
            left[node] = new_node(li)
            right[node] = new_node(ri)
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.feature = np.array(feature, dtype=np.int64)
        self.threshold = np.array(threshold, dtype=float)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.value = np.array(value, dtype=float)

    def continue_training(self, Z, y, epochs, rng):
        # trees cannot resume: refit on the given data
        self.fit(Z, y, rng)

    def leaves(self, Z) -> np.ndarray:
        node = np.zeros(len(Z), dtype=np.int64)
        rows = np.arange(len(Z))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r = rows[inner]
            n = node[inner]
            go_left = Z[r, f[inner]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])

    def _proba(self, Z):
        return self.value[self.leaves(Z)]

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def get_params(self):
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}

    def set_params(self, params):
        self.feature = np.asarray(params["feature"], dtype=np.int64)
        self.threshold = np.asarray(params["threshold"], dtype=float)
        self.left = np.asarray(params["left"], dtype=np.int64)
        self.right = np.asarray(params["right"], dtype=np.int64)
        self.value = np.asarray(params["value"], dtype=float)
