"""Layer inventory for the MC-CNN and DeepConvLSTM stacks.

Every layer works on float64 numpy arrays. ``forward`` optionally records the
intermediate values needed by ``backward``; inference with ``record=False``
touches no layer state at all, so one trained model can serve several
threads at once.

Array layouts:
    Conv1D / BatchNorm1D / MaxPool1D   [batch, channels, time]
    LSTM                               [batch, time, features]
    Dense                              [batch, features]
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class ShapeError(ValueError):
    """Input shape is incompatible with a layer's parameters."""


class NotFittedError(RuntimeError):
    """Eval-mode BatchNorm was asked for running statistics it never collected."""


def _uniform(rng: np.random.Generator, bound: float, shape) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class Layer:
    kind = "Layer"

    def __init__(self, name: str = ""):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        # non-trainable state that still has to be serialized
        self.buffers: dict[str, np.ndarray] = {}
        self._cache = None
        # gradient checks set this to a list to collect the kink pattern of each forward
        self.pattern_log: list | None = None

    def hyper(self) -> dict:
        return {}

    def forward(self, x: np.ndarray, train: bool = False, record: bool | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self):
        for key, value in self.params.items():
            self.grads[key] = np.zeros_like(value)

    def children(self) -> list["Layer"]:
        return []

    def named_parameters(self, prefix: str = ""):
        """Yields (qualified name, owning layer, key) for every trainable tensor."""
        for key in self.params:
            yield f"{prefix}{key}", self, key

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.kind} {self.name!r}: backward called without a recorded forward")
        return self._cache

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.hyper().items())
        return f"{self.kind}({args})"


class Conv1D(Layer):
    """Valid (unpadded) 1-D convolution; weight is [out, in, kernel]."""

    kind = "Conv1D"

    def __init__(self, in_channels: int, out_channels: int, kernel_length: int = 5, stride: int = 1,
                 rng: np.random.Generator | None = None, name: str = ""):
        super().__init__(name)
        if kernel_length < 1 or stride < 1:
            raise ValueError("kernel_length and stride must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_length = kernel_length
        self.stride = stride
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(in_channels * kernel_length)
        self.params["weight"] = _uniform(rng, bound, (out_channels, in_channels, kernel_length))
        self.params["bias"] = np.zeros(out_channels, dtype=DTYPE)
        self.zero_grad()

    def hyper(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_length": self.kernel_length, "stride": self.stride}

    def output_length(self, length: int) -> int:
        return (length - self.kernel_length) // self.stride + 1

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ShapeError(f"Conv1D {self.name!r} expects [B, {self.in_channels}, L], got {list(x.shape)}")
        B, C, L = x.shape
        k = self.kernel_length
        if L < k:
            raise ShapeError(f"Conv1D {self.name!r}: input length {L} shorter than kernel {k}")
        L_out = self.output_length(L)
        # [B, C, L_out, k] -> [B, L_out, C*k]
        cols = sliding_window_view(x, k, axis=2)[:, :, ::self.stride, :]
        cols = cols.transpose(0, 2, 1, 3).reshape(B, L_out, C * k)
        w = self.params["weight"].reshape(self.out_channels, C * k)
        out = cols @ w.T + self.params["bias"]
        if record:
            self._cache = (x.shape, cols)
        return out.transpose(0, 2, 1)

    def backward(self, dout):
        (B, C, L), cols = self._need_cache()
        k, s, O = self.kernel_length, self.stride, self.out_channels
        L_out = dout.shape[2]
        d = dout.transpose(0, 2, 1)  # [B, L_out, O]
        self.grads["weight"] = (d.reshape(-1, O).T @ cols.reshape(-1, C * k)).reshape(O, C, k)
        self.grads["bias"] = d.sum(axis=(0, 1))
        dcols = (d @ self.params["weight"].reshape(O, C * k)).reshape(B, L_out, C, k)
        dcols = dcols.transpose(0, 2, 1, 3)  # [B, C, L_out, k]
        dx = np.zeros((B, C, L), dtype=DTYPE)
        span = s * (L_out - 1) + 1
        for j in range(k):
            dx[:, :, j:j + span:s] += dcols[:, :, :, j]
        return dx


class BatchNorm1D(Layer):
    """Per-channel normalization over batch (and time, for 3-D input)."""

    kind = "BatchNorm1D"

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1, name: str = ""):
        super().__init__(name)
        if eps <= 0:
            raise ValueError("BatchNorm epsilon must be > 0")
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.params["gamma"] = np.ones(channels, dtype=DTYPE)
        self.params["beta"] = np.zeros(channels, dtype=DTYPE)
        self.buffers["running_mean"] = np.zeros(channels, dtype=DTYPE)
        self.buffers["running_var"] = np.ones(channels, dtype=DTYPE)
        self.buffers["batches_seen"] = np.zeros(1, dtype=DTYPE)
        self.zero_grad()

    def hyper(self):
        return {"channels": self.channels, "eps": self.eps, "momentum": self.momentum}

    def _axes_and_view(self, x):
        if x.ndim == 3:
            return (0, 2), (1, -1, 1)
        if x.ndim == 2:
            return (0,), (1, -1)
        raise ShapeError(f"BatchNorm1D expects 2-D or 3-D input, got {list(x.shape)}")

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        if x.shape[1] != self.channels:
            raise ShapeError(f"BatchNorm1D {self.name!r} expects {self.channels} channels, got {x.shape[1]}")
        axes, view = self._axes_and_view(x)
        gamma = self.params["gamma"].reshape(view)
        beta = self.params["beta"].reshape(view)
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            n = x.size // self.channels
            m = self.momentum
            unbiased = var * n / (n - 1) if n > 1 else var
            self.buffers["running_mean"] = (1 - m) * self.buffers["running_mean"] + m * mean
            self.buffers["running_var"] = (1 - m) * self.buffers["running_var"] + m * unbiased
            self.buffers["batches_seen"] = self.buffers["batches_seen"] + 1
        else:
            if self.buffers["batches_seen"][0] == 0:
                raise NotFittedError(f"BatchNorm1D {self.name!r} has no running statistics; "
                                     "run at least one training-mode batch first")
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(view)) * inv_std.reshape(view)
        if record:
            self._cache = (train, xhat, inv_std, axes, view)
        return gamma * xhat + beta

    def backward(self, dout):
        train, xhat, inv_std, axes, view = self._need_cache()
        gamma = self.params["gamma"].reshape(view)
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        dxhat = dout * gamma
        if not train:
            return dxhat * inv_std.reshape(view)
        n = dout.size // self.channels
        sum_d = dxhat.sum(axis=axes, keepdims=True)
        sum_dx = (dxhat * xhat).sum(axis=axes, keepdims=True)
        return inv_std.reshape(view) / n * (n * dxhat - sum_d - xhat * sum_dx)


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        if record:
            self._cache = x > 0
        if self.pattern_log is not None:
            self.pattern_log.append(x > 0)
        return np.maximum(x, 0.0)

    def backward(self, dout):
        return dout * self._need_cache()


class MaxPool1D(Layer):
    """Non-overlapping max pooling along time; a trailing remainder is dropped."""

    kind = "MaxPool1D"

    def __init__(self, pool_length: int = 2, name: str = ""):
        super().__init__(name)
        if pool_length < 1:
            raise ValueError("pool length must be >= 1")
        self.pool_length = pool_length

    def hyper(self):
        return {"pool_length": self.pool_length}

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        B, C, L = x.shape
        p = self.pool_length
        L_out = L // p
        if L_out < 1:
            raise ShapeError(f"MaxPool1D {self.name!r}: length {L} shorter than pool {p}")
        blocks = x[:, :, :L_out * p].reshape(B, C, L_out, p)
        idx = blocks.argmax(axis=3)
        out = np.take_along_axis(blocks, idx[..., None], axis=3)[..., 0]
        if self.pattern_log is not None:
            self.pattern_log.append(idx)
        if record:
            self._cache = (x.shape, idx)
        return out

    def backward(self, dout):
        (B, C, L), idx = self._need_cache()
        p = self.pool_length
        L_out = idx.shape[2]
        blocks = np.zeros((B, C, L_out, p), dtype=DTYPE)
        np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=3)
        dx = np.zeros((B, C, L), dtype=DTYPE)
        dx[:, :, :L_out * p] = blocks.reshape(B, C, L_out * p)
        return dx


class Dropout(Layer):
    """Inverted dropout: survivors scaled by 1/(1-p) in training, identity in eval."""

    kind = "Dropout"

    def __init__(self, p: float = 0.5, rng: np.random.Generator | None = None, name: str = ""):
        super().__init__(name)
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng(0)
        # when set, reused instead of sampling (finite-difference checks need a fixed mask)
        self.frozen_mask: np.ndarray | None = None

    def hyper(self):
        return {"p": self.p}

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        if not train or self.p == 0.0:
            if record:
                self._cache = 1.0
            return x
        if self.frozen_mask is not None and self.frozen_mask.shape == x.shape:
            mask = self.frozen_mask
        else:
            mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        if record:
            self._cache = mask
        return x * mask

    def backward(self, dout):
        return dout * self._need_cache()


class Flatten(Layer):
    kind = "Flatten"

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        if record:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._need_cache())


class Dense(Layer):
    """Fully connected layer; weight is [out, in]."""

    kind = "Dense"

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None,
                 name: str = ""):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(in_features)
        self.params["weight"] = _uniform(rng, bound, (out_features, in_features))
        self.params["bias"] = np.zeros(out_features, dtype=DTYPE)
        self.zero_grad()

    def hyper(self):
        return {"in_features": self.in_features, "out_features": self.out_features}

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeError(f"Dense {self.name!r} expects [B, {self.in_features}], got {list(x.shape)}")
        if record:
            self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dout):
        x = self._need_cache()
        self.grads["weight"] = dout.T @ x
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.params["weight"]


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LSTM(Layer):
    """Single-layer unidirectional LSTM, gate order (input, forget, candidate, output).

    ``weight_ih`` is [4H, F], ``weight_hh`` is [4H, H], ``bias`` is [4H].
    """

    kind = "LSTM"

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator | None = None,
                 forget_bias: float = 1.0, name: str = ""):
        super().__init__(name)
        self.input_size = input_size
        self.hidden_size = hidden_size
        rng = rng if rng is not None else np.random.default_rng(0)
        H = hidden_size
        bound = 1.0 / np.sqrt(H)
        self.params["weight_ih"] = _uniform(rng, bound, (4 * H, input_size))
        self.params["weight_hh"] = _uniform(rng, bound, (4 * H, H))
        bias = np.zeros(4 * H, dtype=DTYPE)
        bias[H:2 * H] = forget_bias
        self.params["bias"] = bias
        self.final_state = None
        self.zero_grad()

    def hyper(self):
        return {"input_size": self.input_size, "hidden_size": self.hidden_size}

    def forward(self, x, train=False, record=None, h0=None, c0=None):
        record = train if record is None else record
        hs, state, steps = self.run(x, h0, c0)
        if record:
            self._cache = (x, steps)
            self.final_state = state
        return hs

    def run(self, x, h0=None, c0=None):
        """Pure recurrence: returns (hidden sequence, (h_T, c_T), per-step values)."""
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeError(f"LSTM {self.name!r} expects [B, T, {self.input_size}], got {list(x.shape)}")
        B, T, _ = x.shape
        if T == 0:
            raise ShapeError("LSTM input has no time steps")
        H = self.hidden_size
        h = np.zeros((B, H), dtype=DTYPE) if h0 is None else np.asarray(h0, dtype=DTYPE)
        c = np.zeros((B, H), dtype=DTYPE) if c0 is None else np.asarray(c0, dtype=DTYPE)
        if h.shape != (B, H) or c.shape != (B, H):
            raise ShapeError(f"LSTM initial state must be [{B}, {H}]")
        w_ih, w_hh, b = self.params["weight_ih"], self.params["weight_hh"], self.params["bias"]
        xw = x @ w_ih.T + b  # [B, T, 4H]
        hs = np.empty((B, T, H), dtype=DTYPE)
        steps = []
        for t in range(T):
            z = xw[:, t] + h @ w_hh.T
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs[:, t] = h
            steps.append((h_prev, c_prev, i, f, g, o, tc))
        return hs, (h, c), steps

    def backward(self, dout):
        x, steps = self._need_cache()
        B, T, _ = x.shape
        H = self.hidden_size
        w_hh = self.params["weight_hh"]
        dz_all = np.empty((B, T, 4 * H), dtype=DTYPE)
        dh_next = np.zeros((B, H), dtype=DTYPE)
        dc_next = np.zeros((B, H), dtype=DTYPE)
        dw_hh = np.zeros_like(w_hh)
        for t in reversed(range(T)):
            h_prev, c_prev, i, f, g, o, tc = steps[t]
            dh = dout[:, t] + dh_next
            do = dh * tc
            dc = dc_next + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dz_all[:, t] = dz
            dw_hh += dz.T @ h_prev
            dh_next = dz @ w_hh
        flat_dz = dz_all.reshape(B * T, 4 * H)
        self.grads["weight_ih"] = flat_dz.T @ x.reshape(B * T, -1)
        self.grads["weight_hh"] = dw_hh
        self.grads["bias"] = flat_dz.sum(axis=0)
        return dz_all @ self.params["weight_ih"]


class LastStep(Layer):
    """Selects the final time step of a [B, T, F] sequence."""

    kind = "LastStep"

    def forward(self, x, train=False, record=None):
        record = train if record is None else record
        if record:
            self._cache = x.shape
        return x[:, -1, :]

    def backward(self, dout):
        shape = self._need_cache()
        dx = np.zeros(shape, dtype=DTYPE)
        dx[:, -1, :] = dout
        return dx


class Transpose(Layer):
    """Swaps the channel and time axes of a 3-D array."""

    kind = "Transpose"

    def forward(self, x, train=False, record=None):
        return x.transpose(0, 2, 1)

    def backward(self, dout):
        return dout.transpose(0, 2, 1)


class Sequential(Layer):
    kind = "Sequential"

    def __init__(self, layers: list[Layer], name: str = ""):
        super().__init__(name)
        self.layers = list(layers)

    def forward(self, x, train=False, record=None):
        for layer in self.layers:
            x = layer.forward(x, train=train, record=record)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def children(self):
        return self.layers

    def named_parameters(self, prefix: str = ""):
        for layer in self.layers:
            yield from layer.named_parameters(f"{prefix}{layer.name}.")


def conv1d_forward(x: np.ndarray, layer: Conv1D) -> np.ndarray:
    return layer.forward(np.asarray(x, dtype=DTYPE), train=False, record=False)


def layer_forward(layer: Layer, x: np.ndarray, mode: str = "eval") -> np.ndarray:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return layer.forward(np.asarray(x, dtype=DTYPE), train=(mode == "train"))


def lstm_forward(sequence: np.ndarray, layer: LSTM, h0=None, c0=None):
    """Returns (hidden_sequence [B, T, H], (h_T, c_T))."""
    hs, state, _ = layer.run(np.asarray(sequence, dtype=DTYPE), h0, c0)
    return hs, state
