"""Layer objects: parameter containers plus a forward call.

Layers are thin wrappers over the functional ops in ``tensor``. Weight
matrices and convolution kernels are initialized fan-in-scaled uniform,
U(-1/sqrt(fan_in), +1/sqrt(fan_in)); biases start at zero, batch-norm
scales at one. Construction order fixes rng consumption, so the same seed
always yields bit-identical parameters.
"""

from __future__ import annotations

import numpy as np

from gaitxfer.numerics import tensor as T


def _uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base: named parameters, named non-trainable buffers, a forward call."""

    def params(self):
        return {}

    def buffers(self):
        return {}

    def no_decay_names(self):
        """Parameter names exempt from L2 weight decay (biases, norm scales)."""
        return set()

    def __call__(self, x, *, training=False, rng=None):
        raise NotImplementedError


class Conv1d(Layer):
    def __init__(self, c_in, c_out, width, *, rng, dtype=np.float64, name="conv"):
        self.name = name
        self.weight = T.Tensor(
            _uniform_init(rng, (c_out, c_in, width), c_in * width, dtype), requires_grad=True
        )
        self.bias = T.Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def no_decay_names(self):
        return {f"{self.name}.bias"}

    def __call__(self, x, *, training=False, rng=None):
        return T.conv1d(x, self.weight, self.bias)


class Dense(Layer):
    def __init__(self, d_in, d_out, *, rng, dtype=np.float64, name="dense"):
        self.name = name
        self.weight = T.Tensor(_uniform_init(rng, (d_in, d_out), d_in, dtype), requires_grad=True)
        self.bias = T.Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)

    def params(self):
        return {f"{self.name}.weight": self.weight, f"{self.name}.bias": self.bias}

    def no_decay_names(self):
        return {f"{self.name}.bias"}

    def __call__(self, x, *, training=False, rng=None):
        return T.dense_affine(x, self.weight, self.bias)


class BatchNorm1d(Layer):
    def __init__(self, channels, *, dtype=np.float64, name="bn", momentum=0.1, eps=1e-5):
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.gamma = T.Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = T.Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)

    def params(self):
        return {f"{self.name}.gamma": self.gamma, f"{self.name}.beta": self.beta}

    def buffers(self):
        return {
            f"{self.name}.running_mean": self.running_mean,
            f"{self.name}.running_var": self.running_var,
        }

    def no_decay_names(self):
        return {f"{self.name}.gamma", f"{self.name}.beta"}

    def __call__(self, x, *, training=False, rng=None):
        return T.batchnorm1d(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training,
            momentum=self.momentum,
            eps=self.eps,
        )


class ReLU(Layer):
    def __call__(self, x, *, training=False, rng=None):
        return T.relu(x)


class Dropout(Layer):
    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def __call__(self, x, *, training=False, rng=None):
        return T.dropout(x, self.rate, training, rng)


class AvgPoolSame(Layer):
    def __init__(self, width):
        self.width = width

    def __call__(self, x, *, training=False, rng=None):
        return T.avg_pool_same(x, self.width)


class Stack(Layer):
    """Run sub-layers in order, checking that the temporal extent survives."""

    def __init__(self, layers):
        self.layers = list(layers)

    def params(self):
        out = {}
        for layer in self.layers:
            out.update(layer.params())
        return out

    def buffers(self):
        out = {}
        for layer in self.layers:
            out.update(layer.buffers())
        return out

    def no_decay_names(self):
        out = set()
        for layer in self.layers:
            out |= layer.no_decay_names()
        return out

    def __call__(self, x, *, training=False, rng=None):
        t_in = x.data.shape[-1]
        for layer in self.layers:
            x = layer(x, training=training, rng=rng)
            if x.data.shape[-1] != t_in:
                raise RuntimeError(
                    f"{type(layer).__name__} changed temporal extent {t_in} -> {x.data.shape[-1]}"
                )
        return x
