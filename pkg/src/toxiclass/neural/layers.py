"""Layers with hand-derived backward passes.

Every layer caches what its backward pass needs during forward; the intended
call pattern is one forward followed by one backward per instance (models are
single-threaded per instance). Parameter gradients accumulate into
``Param.grad`` buffers and are zeroed explicitly between optimizer steps.
"""

from __future__ import annotations

import numpy as np

DEFAULT_LEAKY_SLOPE = 0.01


def relu(x):
    return np.maximum(0.0, x)


def leaky_relu(x, slope: float = DEFAULT_LEAKY_SLOPE):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0.0, x, slope * x)


def sigmoid(x):
    """Numerically stable branch form: never exponentiates a large positive."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(v):
    v = np.asarray(v, dtype=np.float64)
    shifted = v - v.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


class Param:
    """Named parameter tensor with a same-shaped gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


def glorot(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = shape[-1], shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def params(self) -> list[Param]:
        return []

    def weight_params(self) -> list[Param]:
        """Parameters subject to L2 (weight matrices, not biases)."""
        return []

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()


class Dense(Layer):
    """y = W x + b over vectors."""

    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.w = Param("w", glorot(rng, (n_out, n_in)))
        self.b = Param("b", np.zeros(n_out))
        self._x = None

    def params(self):
        return [self.w, self.b]

    def weight_params(self):
        return [self.w]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.w.value.shape[1],):
            raise ValueError(
                f"dense expects input of shape ({self.w.value.shape[1]},), "
                f"got {x.shape}"
            )
        self._x = x
        return self.w.value @ x + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy = np.asarray(dy, dtype=np.float64)
        self.w.grad += np.outer(dy, self._x)
        self.b.grad += dy
        return self.w.value.T @ dy


class Conv1D(Layer):
    """Valid (no-padding) cross-correlation along the sequence axis."""

    kind = "conv1d"

    def __init__(self, kernel_size: int, c_in: int, c_out: int,
                 rng: np.random.Generator):
        limit = np.sqrt(6.0 / (kernel_size * c_in + c_out))
        self.filters = Param(
            "filters", rng.uniform(-limit, limit, size=(kernel_size, c_in, c_out))
        )
        self.b = Param("b", np.zeros(c_out))
        self.kernel_size = kernel_size
        self._x = None

    def params(self):
        return [self.filters, self.b]

    def weight_params(self):
        return [self.filters]

    def out_length(self, length: int) -> int:
        return length - self.kernel_size + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        length, c_in = x.shape
        k = self.kernel_size
        if length < k:
            raise ValueError(f"sequence length {length} shorter than kernel {k}")
        if c_in != self.filters.value.shape[1]:
            raise ValueError(
                f"conv1d expects {self.filters.value.shape[1]} channels, got {c_in}"
            )
        self._x = x
        out_len = length - k + 1
        y = np.tile(self.b.value, (out_len, 1))
        for j in range(k):
            y += x[j:j + out_len] @ self.filters.value[j]
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy = np.asarray(dy, dtype=np.float64)
        x = self._x
        out_len = dy.shape[0]
        dx = np.zeros_like(x)
        for j in range(self.kernel_size):
            self.filters.grad[j] += x[j:j + out_len].T @ dy
            dx[j:j + out_len] += dy @ self.filters.value[j].T
        self.b.grad += dy.sum(axis=0)
        return dx


class MaxPool1D(Layer):
    """Non-overlapping max pooling over time, stride = pool, remainder dropped.

    Backward routes each output's gradient to the first argmax in its window.
    """

    kind = "maxpool1d"

    def __init__(self, pool: int = 2):
        self.pool = pool
        self._argmax = None
        self._in_shape = None

    def out_length(self, length: int) -> int:
        return length // self.pool

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        length, channels = x.shape
        if length < self.pool:
            raise ValueError(f"sequence length {length} shorter than pool {self.pool}")
        out_len = length // self.pool
        windows = x[: out_len * self.pool].reshape(out_len, self.pool, channels)
        self._argmax = windows.argmax(axis=1)  # first occurrence per window
        self._in_shape = x.shape
        return windows.max(axis=1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy = np.asarray(dy, dtype=np.float64)
        dx = np.zeros(self._in_shape)
        out_len, channels = dy.shape
        rows = np.arange(out_len)[:, None] * self.pool + self._argmax
        cols = np.broadcast_to(np.arange(channels), (out_len, channels))
        np.add.at(dx, (rows, cols), dy)
        return dx


class MaxOverTime(Layer):
    """Masked elementwise max over the time axis: (L, d) -> (d,).

    A fully masked input yields zeros (degenerate flag set); backward then
    routes nothing.
    """

    kind = "max_over_time"

    def __init__(self):
        self._rows = None
        self._in_shape = None
        self.degenerate = False

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        self._in_shape = x.shape
        valid = np.ones(x.shape[0], dtype=bool) if mask is None else np.asarray(mask) > 0.5
        if not valid.any():
            self.degenerate = True
            self._rows = None
            return np.zeros(x.shape[1], dtype=np.float64)
        self.degenerate = False
        idx = np.flatnonzero(valid)
        sub = x[idx]
        self._rows = idx[sub.argmax(axis=0)]  # first argmax among valid rows
        return sub.max(axis=0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = np.zeros(self._in_shape)
        if self._rows is not None:
            np.add.at(dx, (self._rows, np.arange(len(dy))), dy)
        return dx


class Dropout(Layer):
    """Inverted dropout: training scales survivors by 1/(1-rate); inference
    is the identity."""

    kind = "dropout"

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._scale_mask = None

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not train or self.rate == 0.0:
            self._scale_mask = None
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep = rng.random(x.shape) >= self.rate
        self._scale_mask = keep / (1.0 - self.rate)
        return x * self._scale_mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._scale_mask is None:
            return np.asarray(dy, dtype=np.float64)
        return dy * self._scale_mask


class ReLULayer(Layer):
    kind = "relu"

    def forward(self, x):
        self._pos = np.asarray(x) > 0.0
        return np.where(self._pos, x, 0.0)

    def backward(self, dy):
        return np.where(self._pos, dy, 0.0)


class LeakyReLULayer(Layer):
    kind = "leaky_relu"

    def __init__(self, slope: float = DEFAULT_LEAKY_SLOPE):
        self.slope = slope

    def forward(self, x):
        self._pos = np.asarray(x) > 0.0
        return np.where(self._pos, x, self.slope * np.asarray(x))

    def backward(self, dy):
        return np.where(self._pos, dy, self.slope * np.asarray(dy))


class SigmoidLayer(Layer):
    kind = "sigmoid"

    def forward(self, x):
        self._y = sigmoid(x)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class LSTM(Layer):
    """Single-direction LSTM over an (L, D) sequence, h0 = c0 = 0.

    Gate layout in the stacked 4h dimension: input, forget, candidate, output.
    Masked steps copy both states forward unchanged and contribute no
    gradient.
    """

    kind = "lstm"

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.w_x = Param("w_x", glorot(rng, (4 * hidden_dim, input_dim)))
        self.w_h = Param("w_h", glorot(rng, (4 * hidden_dim, hidden_dim)))
        self.b = Param("b", np.zeros(4 * hidden_dim))
        self._cache = None

    def params(self):
        return [self.w_x, self.w_h, self.b]

    def weight_params(self):
        return [self.w_x, self.w_h]

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        length, dim = x.shape
        if dim != self.input_dim:
            raise ValueError(f"lstm expects input dim {self.input_dim}, got {dim}")
        h_dim = self.hidden_dim
        valid = np.ones(length, dtype=bool) if mask is None else np.asarray(mask) > 0.5
        h = np.zeros(h_dim)
        c = np.zeros(h_dim)
        out = np.zeros((length, h_dim))
        steps = []
        for t in range(length):
            if not valid[t]:
                steps.append(None)
                out[t] = h
                continue
            z = self.w_x.value @ x[t] + self.w_h.value @ h + self.b.value
            i = sigmoid(z[:h_dim])
            f = sigmoid(z[h_dim:2 * h_dim])
            g = np.tanh(z[2 * h_dim:3 * h_dim])
            o = sigmoid(z[3 * h_dim:])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            steps.append((x[t], h, c, i, f, g, o, tanh_c))
            h, c = h_new, c_new
            out[t] = h
        self._cache = (steps, x.shape)
        return out

    def backward(self, dout: np.ndarray) -> np.ndarray:
        steps, in_shape = self._cache
        h_dim = self.hidden_dim
        dx = np.zeros(in_shape)
        dh_next = np.zeros(h_dim)
        dc_next = np.zeros(h_dim)
        for t in range(len(steps) - 1, -1, -1):
            dh = dout[t] + dh_next
            if steps[t] is None:
                dh_next = dh
                continue
            x_t, h_prev, c_prev, i, f, g, o, tanh_c = steps[t]
            dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g ** 2),
                dh * tanh_c * o * (1.0 - o),
            ])
            self.w_x.grad += np.outer(dz, x_t)
            self.w_h.grad += np.outer(dz, h_prev)
            self.b.grad += dz
            dx[t] = self.w_x.value.T @ dz
            dh_next = self.w_h.value.T @ dz
            dc_next = dc * f
        return dx


class BiLSTM(Layer):
    """Forward and reversed LSTMs, outputs concatenated per timestep."""

    kind = "bilstm"

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.hidden_dim = hidden_dim
        self.fwd = LSTM(input_dim, hidden_dim, rng)
        self.bwd = LSTM(input_dim, hidden_dim, rng)

    def params(self):
        return self.fwd.params() + self.bwd.params()

    def weight_params(self):
        return self.fwd.weight_params() + self.bwd.weight_params()

    def forward(self, x: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
        h_f = self.fwd.forward(x, mask)
        rev_mask = None if mask is None else np.asarray(mask)[::-1]
        h_b = self.bwd.forward(np.asarray(x, dtype=np.float64)[::-1], rev_mask)[::-1]
        return np.concatenate([h_f, h_b], axis=1)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        h = self.hidden_dim
        dx_f = self.fwd.backward(dout[:, :h])
        dx_b = self.bwd.backward(dout[::-1, h:])[::-1]
        return dx_f + dx_b


class Attention(Layer):
    """Scalar-score attention over hidden states.

    Scores s_t = w . H_t + b; weights are the masked softmax of s (masked
    positions effectively score -inf); the context vector is the
    weight-convex combination of the rows of H.
    """

    kind = "attention"

    def __init__(self, dim: int, rng: np.random.Generator):
        self.w = Param("w", glorot(rng, (1, dim)).reshape(dim))
        self.b = Param("b", np.zeros(1))
        self._cache = None

    def params(self):
        return [self.w, self.b]

    def weight_params(self):
        return [self.w]

    def forward(self, h: np.ndarray, mask: np.ndarray | None = None):
        h = np.asarray(h, dtype=np.float64)
        length = h.shape[0]
        valid = np.ones(length, dtype=bool) if mask is None else np.asarray(mask) > 0.5
        if not valid.any():
            raise ValueError("attention over a fully masked sequence")
        scores = h @ self.w.value + self.b.value[0]
        shifted = np.where(valid, scores - scores[valid].max(), -np.inf)
        ex = np.exp(shifted)  # exp(-inf) = 0 at masked positions
        alpha = ex / ex.sum()
        z = alpha @ h
        self._cache = (h, alpha)
        return alpha, z

    def backward(self, dz: np.ndarray, dalpha: np.ndarray | None = None) -> np.ndarray:
        h, alpha = self._cache
        da = h @ np.asarray(dz, dtype=np.float64)
        if dalpha is not None:
            da = da + dalpha
        dh = np.outer(alpha, dz)
        ds = alpha * (da - alpha @ da)  # softmax backward; masked rows have alpha=0
        self.w.grad += h.T @ ds
        self.b.grad += ds.sum()
        dh += np.outer(ds, self.w.value)
        return dh
