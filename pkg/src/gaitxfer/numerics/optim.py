"""Named parameter sets and Adam / SGD update steps.

L2 regularization enters as weight decay added to the gradients of decay-
eligible tensors (weight matrices and kernels); biases and norm scales are
exempt. Decaying via the gradient keeps the training loss itself equal to
the plain data term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gaitxfer.numerics.tensor import Tensor


class ParameterSet:
    """Ordered, uniquely named map of trainable tensors."""

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._no_decay: set[str] = set()

    def add(self, name, t, *, decay=True):
        if name in self._tensors:
            raise ValueError(f"duplicate parameter name {name!r}")
        if not isinstance(t, Tensor):
            raise TypeError(f"parameter {name!r} must be a Tensor")
        self._tensors[name] = t
        if not decay:
            self._no_decay.add(name)

    def add_layer(self, layer):
        no_decay = layer.no_decay_names()
        for name, t in layer.params().items():
            self.add(name, t, decay=name not in no_decay)

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self):
        return list(self._tensors)

    def decays(self, name):
        return name not in self._no_decay

    @property
    def total_count(self):
        return sum(t.data.size for t in self._tensors.values())


@dataclass
class OptimizerState:
    kind: str  # "adam" | "sgd"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def make_optimizer_state(kind, *, learning_rate=1e-3, weight_decay=0.0,
                         beta1=0.9, beta2=0.999, eps=1e-8):
    if kind not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer kind {kind!r}")
    return OptimizerState(kind=kind, learning_rate=learning_rate,
                          weight_decay=weight_decay, beta1=beta1, beta2=beta2, eps=eps)


def zero_grads(params):
    for _, t in params.items():
        t.grad = None


def collect_grads(params):
    """Snapshot .grad buffers (missing gradients count as zero)."""
    out = {}
    for name, t in params.items():
        out[name] = t.grad if t.grad is not None else np.zeros_like(t.data)
    return out


def optimizer_step(params, grads, state):
    """Update parameters in place from a name -> gradient map."""
    state.step_count += 1
    t = state.step_count
    lr = state.learning_rate
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name!r} shape {p.data.shape}"
            )
        if state.weight_decay != 0.0 and params.decays(name):
            g = g + state.weight_decay * p.data
        if state.kind == "sgd":
            p.data -= lr * g
        else:
            m = state.m.get(name)
            if m is None:
                m = state.m[name] = np.zeros_like(p.data)
                state.v[name] = np.zeros_like(p.data)
            v = state.v[name]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            m_hat = m / (1.0 - state.beta1 ** t)
            v_hat = v / (1.0 - state.beta2 ** t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
