"""Network building blocks with explicit reverse-mode gradients.

Every layer exposes ``forward(x) -> (out, cache)`` and
``backward(cache, dout) -> (dx, grads)`` where ``grads`` maps parameter keys
to arrays matching ``param_items()``. Gradients are exact (they are checked
against central finite differences in the test suite), and everything is
float64 numpy — no autodiff framework.

Weight initialization is uniform fan-in scaling, U[-1/sqrt(fan_in),
+1/sqrt(fan_in)], drawn from an explicit generator so a fixed seed gives
identical networks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Dense:
    """Affine map (B, n_in) -> (B, n_out)."""

    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(n_in)
        self.name = name
        self.W = rng.uniform(-bound, bound, size=(n_in, n_out))
        self.b = rng.uniform(-bound, bound, size=n_out)

    def param_items(self):
        return [(f"{self.name}.W", self.W), (f"{self.name}.b", self.b)]

    def set_param(self, key: str, value: np.ndarray):
        attr = key.rsplit(".", 1)[1]
        setattr(self, attr, value)

    def forward(self, x):
        return x @ self.W + self.b, x

    def backward(self, cache, dout):
        x = cache
        grads = {f"{self.name}.W": x.T @ dout, f"{self.name}.b": dout.sum(axis=0)}
        return dout @ self.W.T, grads


class ReLU:
    def param_items(self):
        return []

    def forward(self, x):
        out = np.maximum(x, 0.0)
        return out, x > 0.0

    def backward(self, cache, dout):
        return dout * cache, {}


class Conv1dCircular:
    """1-D convolution with circular padding, stride 1, (B, C_in, T) -> (B, C_out, T).

    Circular padding keeps the layer exactly translation-equivariant: rolling
    the input by one bin rolls the output by one bin, which is the property
    the pose-standardization baseline comparisons rely on.
    """

    def __init__(self, name: str, c_in: int, c_out: int, kernel_size: int, rng):
        if kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd for centered circular padding")
        bound = 1.0 / np.sqrt(c_in * kernel_size)
        self.name = name
        self.kernel_size = kernel_size
        self.W = rng.uniform(-bound, bound, size=(c_out, c_in, kernel_size))
        self.b = rng.uniform(-bound, bound, size=c_out)

    def param_items(self):
        return [(f"{self.name}.W", self.W), (f"{self.name}.b", self.b)]

    def set_param(self, key: str, value: np.ndarray):
        attr = key.rsplit(".", 1)[1]
        setattr(self, attr, value)

    @staticmethod
    def _windows(x, k):
        pad = k // 2
        xpad = np.concatenate([x[..., -pad:], x, x[..., :pad]], axis=-1)
        return sliding_window_view(xpad, k, axis=-1)  # (B, C, T, k)

    def forward(self, x):
        win = self._windows(x, self.kernel_size)
        out = np.tensordot(win, self.W, axes=([1, 3], [1, 2]))  # (B, T, C_out)
        out = out.transpose(0, 2, 1) + self.b[None, :, None]
        return out, (x, win)

    def backward(self, cache, dout):
        x, win = cache
        grads = {
            f"{self.name}.W": np.tensordot(dout, win, axes=([0, 2], [0, 2])),
            f"{self.name}.b": dout.sum(axis=(0, 2)),
        }
        # dx is the circular correlation of dout with the kernel-reversed,
        # channel-transposed weights; reuses the same windowing machinery.
        dwin = self._windows(dout, self.kernel_size)  # (B, C_out, T, k)
        w_rev = self.W[:, :, ::-1]
        dx = np.tensordot(dwin, w_rev, axes=([1, 3], [0, 2])).transpose(0, 2, 1)
        return dx, grads


class AvgPool1d:
    """Non-overlapping average pooling (stride must equal the window size)."""

    def __init__(self, size: int, stride: int):
        if stride != size:
            raise ValueError("only stride == size pooling is supported")
        self.size = size

    def param_items(self):
        return []

    def forward(self, x):
        b, c, t = x.shape
        t_out = t // self.size
        used = t_out * self.size
        out = x[..., :used].reshape(b, c, t_out, self.size).mean(axis=-1)
        return out, (x.shape, used)

    def backward(self, cache, dout):
        shape, used = cache
        dx = np.zeros(shape)
        dx[..., :used] = np.repeat(dout / self.size, self.size, axis=-1)
        return dx, {}
