"""Small dense Q-network with hand-written backprop, Adam/SGD and weight files.

Weights are stored as ``W[k]`` of shape ``(fan_in, fan_out)`` so a batch
forward pass is ``relu(x @ W + b)`` for hidden layers and linear at the output.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"QNET"
FORMAT_VERSION = 1


class QNetwork:
    """Fully connected network, ReLU hidden layers, linear output."""

    def __init__(self, layer_sizes, rng: np.random.Generator | None = None, init: str = "he_uniform"):
        self.layer_sizes = [int(n) for n in layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("need at least input and output sizes, all positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            if init == "he_uniform":
                limit = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            elif init == "zeros":
                w = np.zeros((fan_in, fan_out))
            else:
                raise ValueError(f"unknown init {init!r}")
            self.weights.append(w.astype(np.float64))
            self.biases.append(np.zeros(fan_out))

    @property
    def state_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def action_count(self) -> int:
        return self.layer_sizes[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.state_dim:
            raise ValueError(f"dimension mismatch: expected {self.state_dim}, got {x.shape[-1]}")
        return x

    def forward(self, x) -> np.ndarray:
        """Q-values for one state (1-D) or a batch (2-D)."""
        h = self._check_input(x)
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    __call__ = forward

    def _forward_cache(self, x):
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0) if k < last else z
            acts.append(h)
        return acts, pre

    def loss_and_grads(self, states, actions, targets, loss: str = "mse", huber_delta: float = 1.0):
        """Loss on the chosen-action outputs and its parameter gradients.

        Returns ``(loss, grads)`` with grads ordered like :meth:`params`.
        """
        x = self._check_input(np.atleast_2d(states))
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        n = x.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        acts, pre = self._forward_cache(x)
        rows = np.arange(n)
        err = acts[-1][rows, actions] - targets
        if loss == "mse":
            value = float(np.mean(err**2))
            d_err = 2.0 * err / n
        elif loss == "huber":
            a = np.abs(err)
            quad = a <= huber_delta
            value = float(np.mean(np.where(quad, 0.5 * err**2, huber_delta * (a - 0.5 * huber_delta))))
            d_err = np.where(quad, err, huber_delta * np.sign(err)) / n
        else:
            raise ValueError(f"unknown loss {loss!r}")
        delta = np.zeros_like(acts[-1])
        delta[rows, actions] = d_err
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w[k] = acts[k].T @ delta
            grads_b[k] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ self.weights[k].T) * (pre[k - 1] > 0.0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads.extend((gw, gb))
        return value, grads

    def copy_from(self, src: "QNetwork") -> None:
        copy_weights(src, self)

    def clone(self) -> "QNetwork":
        net = QNetwork(self.layer_sizes, init="zeros")
        copy_weights(self, net)
        return net

    def save(self, path) -> None:
        save_weights(self, path)

    @classmethod
    def load(cls, path) -> "QNetwork":
        return load_weights(path)


class SGD:
    def __init__(self, lr: float = 5e-4):
        self.lr = lr

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    """Adaptive moment estimation with the usual bias correction."""

    def __init__(self, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params, grads) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        step = self.lr * np.sqrt(corr2) / corr1
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= step * m / (np.sqrt(v) + self.eps * np.sqrt(corr2))


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return SGD(lr)
    raise ValueError(f"unknown optimizer {name!r}")


def forward(net: QNetwork, state) -> np.ndarray:
    return net.forward(state)


def train_step(net: QNetwork, states, actions, targets, optimizer=None, loss: str = "mse") -> float:
    """One gradient step on the chosen-action squared error; returns the loss before the step."""
    optimizer = optimizer if optimizer is not None else SGD(5e-4)
    value, grads = net.loss_and_grads(states, actions, targets, loss=loss)
    optimizer.step(net.params(), grads)
    return value


def copy_weights(src: QNetwork, dst: QNetwork) -> None:
    if src.layer_sizes != dst.layer_sizes:
        raise ValueError(f"shape mismatch: {src.layer_sizes} vs {dst.layer_sizes}")
    for s, d in zip(src.params(), dst.params()):
        np.copyto(d, s)


def gradient_check(net: QNetwork, state, action: int, target: float, h: float = 1e-5, grad_fn=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``grad_fn(net, states, actions, targets)`` may replace the analytic
    gradient (used to sanity-check the checker itself).
    """
    states = np.atleast_2d(np.asarray(state, dtype=np.float64))
    actions = np.atleast_1d(action)
    targets = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if grad_fn is None:
        _, analytic = net.loss_and_grads(states, actions, targets)
    else:
        analytic = grad_fn(net, states, actions, targets)
    worst = 0.0
    for p, g in zip(net.params(), analytic):
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            plus, _ = net.loss_and_grads(states, actions, targets)
            flat[i] = old - h
            minus, _ = net.loss_and_grads(states, actions, targets)
            flat[i] = old
            numeric = (plus - minus) / (2.0 * h)
            scale = max(abs(numeric), abs(gflat[i]))
            err = abs(numeric - gflat[i]) / scale if scale > 1e-7 else abs(numeric - gflat[i])
            worst = max(worst, err)
    return worst


def save_weights(net: QNetwork, path) -> None:
    """Little-endian file: magic, version, layer count, sizes, then float64 params."""
    sizes = net.layer_sizes
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, len(sizes)) + struct.pack(f"<{len(sizes)}I", *sizes)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params())
    Path(path).write_bytes(header + body)


def load_weights(path) -> QNetwork:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not a weight file")
    version, n = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    sizes = list(struct.unpack_from(f"<{n}I", data, 12))
    offset = 12 + 4 * n
    net = QNetwork(sizes, init="zeros")
    for p in net.params():
        count = p.size
        chunk = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        p[...] = chunk.reshape(p.shape)
        offset += 8 * count
    if offset != len(data):
        raise ValueError(f"{path}: trailing or missing bytes")
    return net
