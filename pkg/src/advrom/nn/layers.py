"""Layers with explicit forward caches and hand-written backward passes.

Every layer follows the same contract: ``forward`` records what ``backward``
needs, ``backward(dy)`` accumulates parameter gradients into ``self.grads``
and returns the gradient with respect to the layer input.  All arrays are
float64 and batched along axis 0.
"""
import numpy as np

from ..errors import ArgumentError, StateError


def glorot_uniform(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = None

    def config(self):
        return {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a forward pass")
        cache, self._cache = self._cache, None
        return cache

    def forward(self, x, train=False, rng=None, update_stats=True):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Dense(Layer):
    """``y = x W^T + b`` with ``W`` of shape (out, in)."""

    kind = "dense"

    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        self.n_in, self.n_out = int(n_in), int(n_out)
        if rng is None:
            W = np.zeros((self.n_out, self.n_in))
        else:
            W = glorot_uniform(rng, self.n_in, self.n_out, (self.n_out, self.n_in))
        self.params = {"W": W, "b": np.zeros(self.n_out)}
        self.zero_grad()

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def forward(self, x, train=False, rng=None, update_stats=True):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ArgumentError(f"dense layer expects width {self.n_in}, got {x.shape[-1]}")
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy):
        x = self._need_cache()
        x2, dy2 = x.reshape(-1, self.n_in), dy.reshape(-1, self.n_out)
        self.grads["W"] += dy2.T @ x2
        self.grads["b"] += dy2.sum(axis=0)
        return dy @ self.params["W"]


class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope=0.3):
        super().__init__()
        self.slope = float(slope)

    def config(self):
        return {"slope": self.slope}

    def forward(self, x, train=False, rng=None, update_stats=True):
        self._cache = x >= 0
        return np.where(self._cache, x, self.slope * x)

    def backward(self, dy):
        pos = self._need_cache()
        return np.where(pos, dy, self.slope * dy)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, train=False, rng=None, update_stats=True):
        y = np.tanh(x)
        self._cache = y
        return y

    def backward(self, dy):
        y = self._need_cache()
        return dy * (1.0 - y * y)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, train=False, rng=None, update_stats=True):
        y = sigmoid(np.asarray(x, dtype=np.float64))
        self._cache = y
        return y

    def backward(self, dy):
        y = self._need_cache()
        return dy * y * (1.0 - y)


class BatchNorm(Layer):
    """Per-feature batch normalisation.

    ``momentum`` weights the old running statistic (Keras convention):
    ``running = momentum * running + (1 - momentum) * batch``.
    """

    kind = "batchnorm"

    def __init__(self, n_features, momentum=0.99, eps=1e-5):
        super().__init__()
        if not 0.0 < momentum < 1.0:
            raise ArgumentError("batch-norm momentum must lie in (0, 1)")
        if eps < 0:
            raise ArgumentError("batch-norm epsilon must be non-negative")
        self.n_features = int(n_features)
        self.momentum, self.eps = float(momentum), float(eps)
        self.params = {"gamma": np.ones(self.n_features), "beta": np.zeros(self.n_features)}
        self.buffers = {"running_mean": np.zeros(self.n_features),
                        "running_var": np.ones(self.n_features)}
        self.zero_grad()

    def config(self):
        return {"n_features": self.n_features, "momentum": self.momentum, "eps": self.eps}

    def forward(self, x, train=False, rng=None, update_stats=True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ArgumentError(f"batch-norm expects (batch, {self.n_features}), got {x.shape}")
        g, b = self.params["gamma"], self.params["beta"]
        if train:
            if x.shape[0] < 2:
                raise ArgumentError("batch-norm in train mode needs batch size >= 2")
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            if update_stats:
                mom = self.momentum
                self.buffers["running_mean"] = mom * self.buffers["running_mean"] + (1 - mom) * mu
                self.buffers["running_var"] = mom * self.buffers["running_var"] + (1 - mom) * var
        else:
            mu, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv_std
        self._cache = (train, xhat, inv_std)
        return g * xhat + b

    def backward(self, dy):
        train, xhat, inv_std = self._need_cache()
        self.grads["gamma"] += np.sum(dy * xhat, axis=0)
        self.grads["beta"] += dy.sum(axis=0)
        dxhat = dy * self.params["gamma"]
        if not train:
            return dxhat * inv_std
        B = dy.shape[0]
        return inv_std / B * (B * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at train time."""

    kind = "dropout"

    def __init__(self, rate=0.5):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, train=False, rng=None, update_stats=True):
        if not train or self.rate == 0.0:
            self._cache = 1.0
            return x
        if rng is None:
            raise ArgumentError("dropout in train mode needs an rng")
        mask = (rng.random(np.shape(x)) >= self.rate) / (1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, dy):
        return dy * self._need_cache()


class LSTM(Layer):
    """Single LSTM layer over a (batch, time, features) sequence.

    Gate weights are stored stacked in one ``W`` of shape (4H, D + H) acting on
    ``[x_t, h_{t-1}]``, rows ordered input, forget, output, candidate.
    Returns the last hidden state, or all of them with ``return_sequences``.
    """

    kind = "lstm"
    GATES = ("input", "forget", "output", "candidate")

    def __init__(self, n_in, hidden, rng=None, return_sequences=False, forget_bias=1.0):
        super().__init__()
        self.n_in, self.hidden = int(n_in), int(hidden)
        self.return_sequences = bool(return_sequences)
        H, D = self.hidden, self.n_in
        if rng is None:
            W = np.zeros((4 * H, D + H))
        else:
            W = np.concatenate([glorot_uniform(rng, D + H, H, (H, D + H)) for _ in range(4)])
        b = np.zeros(4 * H)
        if rng is not None:
            b[H:2 * H] = forget_bias
        self.params = {"W": W, "b": b}
        self.zero_grad()

    def config(self):
        return {"n_in": self.n_in, "hidden": self.hidden,
                "return_sequences": self.return_sequences}

    def gate(self, name):
        """(weights, bias) view of one gate."""
        k = self.GATES.index(name)
        H = self.hidden
        return self.params["W"][k * H:(k + 1) * H], self.params["b"][k * H:(k + 1) * H]

    def _cell(self, x, h, c):
        H = self.hidden
        xh = np.concatenate([x, h], axis=-1)
        a = xh @ self.params["W"].T + self.params["b"]
        i = sigmoid(a[..., :H])
        f = sigmoid(a[..., H:2 * H])
        o = sigmoid(a[..., 2 * H:3 * H])
        g = np.tanh(a[..., 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        return o * tc, c_new, (xh, i, f, o, g, c, tc)

    def forward(self, x, train=False, rng=None, update_stats=True):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ArgumentError(f"LSTM expects (batch, time, {self.n_in}), got {x.shape}")
        B, T, _ = x.shape
        h = np.zeros((B, self.hidden))
        c = np.zeros((B, self.hidden))
        steps, hs = [], []
        for t in range(T):
            h, c, saved = self._cell(x[:, t], h, c)
            steps.append(saved)
            hs.append(h)
        self._cache = steps
        return np.stack(hs, axis=1) if self.return_sequences else h

    def backward(self, dy):
        steps = self._need_cache()
        T, H, D = len(steps), self.hidden, self.n_in
        B = steps[0][0].shape[0]
        if self.return_sequences:
            dhs = dy
        else:
            dhs = np.zeros((B, T, H))
            dhs[:, -1] = dy
        W = self.params["W"]
        dW = np.zeros_like(W)
        db = np.zeros(4 * H)
        dx = np.zeros((B, T, D))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            xh, i, f, o, g, c_prev, tc = steps[t]
            dh = dhs[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            da = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 do * o * (1 - o), dg * (1 - g * g)], axis=1)
            dW += da.T @ xh
            db += da.sum(axis=0)
            dxh = da @ W
            dx[:, t] = dxh[:, :D]
            dh_next = dxh[:, D:]
        self.grads["W"] += dW
        self.grads["b"] += db
        return dx


LAYER_KINDS = {cls.kind: cls for cls in (Dense, LeakyReLU, Tanh, Sigmoid, BatchNorm, Dropout, LSTM)}


# functional forms --------------------------------------------------------

def dense_forward(layer: Dense, x):
    return layer.forward(x)


def leaky_relu(x, slope=0.3):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, x, slope * x)


def batchnorm_forward(layer: BatchNorm, x, mode="train"):
    if mode not in ("train", "infer"):
        raise ArgumentError(f"mode must be 'train' or 'infer', got {mode!r}")
    return layer.forward(x, train=(mode == "train"))


def dropout_forward(x, rate, mode, rng=None):
    return Dropout(rate).forward(np.asarray(x, dtype=np.float64), train=(mode == "train"), rng=rng)


def lstm_step(layer: LSTM, x, h, c):
    """One cell update; returns ``(h', c')``."""
    x, h, c = (np.asarray(a, dtype=np.float64) for a in (x, h, c))
    if x.shape[-1] != layer.n_in or h.shape[-1] != layer.hidden or c.shape != h.shape:
        raise ArgumentError("lstm_step: shape mismatch between input/state and layer")
    h_new, c_new, _ = layer._cell(x, h, c)
    return h_new, c_new
