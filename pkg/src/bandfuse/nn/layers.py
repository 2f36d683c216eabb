"""Layers with explicit forward/backward passes, SGD, and a gradient checker.

Everything runs in float64. Layers cache whatever the backward pass needs,
so a layer instance is single-stream: call forward, then backward, in that
order. Parameter gradients accumulate until ``zero_grad``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..rng import Xorshift64Star
from . import kernels


class TrainingError(RuntimeError):
    """Non-finite gradient or loss during optimisation."""


@dataclass
class SgdConfig:
    learning_rate: float = 1e-4
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


class Param:
    """A trainable array with its accumulated gradient."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


def _uniform_array(rng: Xorshift64Star, shape, scale: float) -> np.ndarray:
    flat = np.array([rng.uniform(-scale, scale) for _ in range(int(np.prod(shape)))])
    return flat.reshape(shape)


def glorot_uniform(rng: Xorshift64Star, shape, fan_in: int, fan_out: int) -> np.ndarray:
    return _uniform_array(rng, shape, math.sqrt(6.0 / (fan_in + fan_out)))


class Layer:
    kind = "activation"

    def params(self) -> list:
        return []

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    """y = x @ W.T + b over the trailing axis; x is (n, fan_in)."""

    kind = "dense"

    def __init__(self, fan_in: int, fan_out: int, rng: Xorshift64Star, name: str = "dense"):
        self.w = Param(f"{name}.w", glorot_uniform(rng, (fan_out, fan_in), fan_in, fan_out))
        self.b = Param(f"{name}.b", np.zeros(fan_out))
        self._x = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.w.value.shape[1]:
            raise ValueError(
                f"{self.w.name}: expected (n, {self.w.value.shape[1]}), got {x.shape}"
            )
        self._x = x
        return x @ self.w.value.T + self.b.value

    def backward(self, grad):
        self.w.grad += grad.T @ self._x
        self.b.grad += grad.sum(axis=0)
        return grad @ self.w.value


class Conv3x3(Layer):
    """Same-padded 3x3 convolution (cross-correlation); x is (n, Cin, h, w)."""

    kind = "conv3x3"

    def __init__(self, c_in: int, c_out: int, rng: Xorshift64Star, name: str = "conv"):
        fan_in, fan_out = c_in * 9, c_out * 9
        self.w = Param(f"{name}.w", glorot_uniform(rng, (c_out, c_in, 3, 3), fan_in, fan_out))
        self.b = Param(f"{name}.b", np.zeros(c_out))
        self._x = None

    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.w.value.shape[1]:
            raise ValueError(
                f"{self.w.name}: expected (n, {self.w.value.shape[1]}, h, w), got {x.shape}"
            )
        self._x = np.ascontiguousarray(x)
        return kernels.conv3x3_forward(self._x, self.w.value, self.b.value)

    def backward(self, grad):
        gx, gw, gb = kernels.conv3x3_backward(self._x, self.w.value, grad)
        self.w.grad += gw
        self.b.grad += gb
        return gx


def elu(x: np.ndarray) -> np.ndarray:
    """ELU with alpha=1: x for x > 0, exp(x) - 1 otherwise."""
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Elu(Layer):
    def forward(self, x):
        self._x = x
        self._y = elu(x)
        return self._y

    def backward(self, grad):
        return grad * np.where(self._x > 0, 1.0, self._y + 1.0)


class Sigmoid(Layer):
    def forward(self, x):
        self._y = sigmoid(x)
        return self._y

    def backward(self, grad):
        return grad * self._y * (1.0 - self._y)


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2; odd trailing row/col dropped (floor rule)."""

    kind = "pool2x2"

    def forward(self, x):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        if h2 < 1 or w2 < 1:
            raise ValueError(f"cannot 2x2-pool spatial dims {h}x{w}")
        win = x[:, :, :2 * h2, :2 * w2].reshape(n, c, h2, 2, w2, 2)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
        self._arg = win.argmax(axis=-1)
        self._shape = (n, c, h, w)
        return np.take_along_axis(win, self._arg[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self._shape
        h2, w2 = h // 2, w // 2
        gwin = np.zeros((n, c, h2, w2, 4))
        np.put_along_axis(gwin, self._arg[..., None], grad[..., None], axis=-1)
        gx = np.zeros(self._shape)
        gx[:, :, :2 * h2, :2 * w2] = (
            gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
        )
        return gx


class Upsample2x(Layer):
    """Nearest-neighbor 2x upsampling; backward is the 2x2 block-sum adjoint."""

    kind = "upsample2x"

    def forward(self, x):
        self._shape = x.shape
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad):
        n, c, h, w = self._shape
        return grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))


class NearestResize(Layer):
    """Nearest-neighbor resize to a fixed spatial size (index = floor(i*in/out))."""

    kind = "upsample2x"

    def __init__(self, out_h: int, out_w: int):
        self.out_h, self.out_w = out_h, out_w

    def forward(self, x):
        n, c, h, w = x.shape
        self._shape = x.shape
        self._ri = (np.arange(self.out_h) * h) // self.out_h
        self._ci = (np.arange(self.out_w) * w) // self.out_w
        return x[:, :, self._ri][:, :, :, self._ci]

    def backward(self, grad):
        gx = np.zeros(self._shape)
        # accumulate over all output pixels mapping to the same source pixel
        np.add.at(gx, (slice(None), slice(None), self._ri[:, None], self._ci[None, :]), grad)
        return gx


class Sequential(Layer):
    def __init__(self, layers: list):
        self.layers = list(layers)

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad


def sgd_step(params: list, learning_rate: float) -> None:
    """Plain SGD: p <- p - lr * grad. Rejects non-finite gradients."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter {p.name!r}")
        p.value -= learning_rate * p.grad


def finite_diff_check(fragment: Layer, x: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    A quadratic loss head 0.5*sum(y^2) is attached to the fragment output;
    the check covers the input and every parameter. Relative error is
    |a - n| / max(1e-8, |a| + |n|).
    """
    x = np.asarray(x, dtype=np.float64)

    def loss_at(xv):
        y = fragment.forward(xv)
        return 0.5 * float(np.sum(y * y))

    fragment.zero_grad()
    y = fragment.forward(x)
    gx = fragment.backward(y.copy())

    def rel_err(a, n):
        return abs(a - n) / max(1e-8, abs(a) + abs(n))

    worst = 0.0
    xp = x.copy()
    flat = xp.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        lp = loss_at(xp)
        flat[i] = orig - eps
        lm = loss_at(xp)
        flat[i] = orig
        worst = max(worst, rel_err(gx.reshape(-1)[i], (lp - lm) / (2 * eps)))

    for p in fragment.params():
        vflat = p.value.reshape(-1)
        gflat = p.grad.reshape(-1)
        for i in range(vflat.size):
            orig = vflat[i]
            vflat[i] = orig + eps
            lp = loss_at(x)
            vflat[i] = orig - eps
            lm = loss_at(x)
            vflat[i] = orig
            worst = max(worst, rel_err(gflat[i], (lp - lm) / (2 * eps)))
    return worst
