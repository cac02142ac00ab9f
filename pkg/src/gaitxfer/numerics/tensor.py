"""Reverse-mode autodiff over numpy arrays.

A Tensor wraps an ndarray plus an optional gradient buffer and a closure
that routes upstream gradients to its parents. Graphs are built eagerly by
the op functions below and freed once ``backward`` has run. Ops never
mutate their inputs; convolutions accept either a single frame (C, T) or a
batch (B, C, T).
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def backward(self):
        """Backpropagate from a scalar output (seed gradient 1)."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar output, got shape {self.data.shape}"
            )
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            # free graph references as we go
            node._parents = ()
            node._backward = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _needs_grad(*tensors):
    return any(t.requires_grad for t in tensors)


def _make(data, parents, backward_fn):
    if _needs_grad(*parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward_fn)
    return Tensor(data)


# ---------------------------------------------------------------------------
# elementwise / reduction ops


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")
    out_data = a.data + b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(out_data, (a, b), backward_fn)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")
    out_data = a.data * b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(out_data, (a, b), backward_fn)


def reduce_sum(x):
    x = _as_tensor(x)
    out_data = np.asarray(x.data.sum())

    def backward_fn(g):
        x._accumulate(np.broadcast_to(g, x.data.shape))

    return _make(out_data, (x,), backward_fn)


def relu(x):
    x = _as_tensor(x)
    out_data = np.maximum(x.data, 0)

    def backward_fn(g):
        x._accumulate(g * (x.data > 0))

    return _make(out_data, (x,), backward_fn)


def dropout(x, rate, training, rng=None):
    """Inverted dropout: kept units scaled by 1/(1-rate); identity at inference."""
    x = _as_tensor(x)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        def backward_fn(g):
            x._accumulate(g)

        return _make(x.data, (x,), backward_fn)
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    keep = (rng.random(x.data.shape, dtype=np.float32) >= rate).astype(x.data.dtype)
    keep *= x.data.dtype.type(1.0 / (1.0 - rate))  # 0 or 1/(1-rate) in one mask
    out_data = x.data * keep

    def backward_fn(g):
        x._accumulate(g * keep)

    return _make(out_data, (x,), backward_fn)


def pointwise(x, kind, rate=0.0, training=False, rng=None):
    """Dispatch for the two pointwise layer kinds used by the pipeline."""
    if kind == "relu":
        return relu(x)
    if kind == "dropout":
        return dropout(x, rate, training, rng)
    raise ValueError(f"unknown pointwise kind {kind!r}")


# ---------------------------------------------------------------------------
# affine / convolution


def dense_affine(x, weight, bias):
    """out[b, j] = sum_i x[b, i] * weight[i, j] + bias[j]"""
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ValueError(
            f"dense_affine expects 2-D input and weight, got {x.data.shape} and {weight.data.shape}"
        )
    if x.data.shape[1] != weight.data.shape[0]:
        raise ValueError(
            f"dense_affine: input dim {x.data.shape[1]} does not match weight rows {weight.data.shape[0]}"
        )
    if bias.data.shape != (weight.data.shape[1],):
        raise ValueError(
            f"dense_affine: bias shape {bias.data.shape} does not match output dim {weight.data.shape[1]}"
        )
    out_data = x.data @ weight.data + bias.data

    def backward_fn(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data.T)
        if weight.requires_grad:
            weight._accumulate(x.data.T @ g)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return _make(out_data, (x, weight, bias), backward_fn)


def _promote_ct(x_data):
    """(C, T) -> (1, C, T); returns (array, had_batch_dim)."""
    if x_data.ndim == 2:
        return x_data[None], False
    if x_data.ndim == 3:
        return x_data, True
    raise ValueError(f"expected (C, T) or (B, C, T), got shape {x_data.shape}")


def conv1d(x, kernels, bias):
    """Stride-1 cross-correlation with zero same-padding; temporal length preserved.

    x: (C_in, T) or (B, C_in, T); kernels: (C_out, C_in, W) with W odd;
    bias: (C_out,). Output has the same temporal extent as the input.
    Computed as one batched matrix product per kernel tap over shifted
    views of the padded input, which avoids column-matrix copies.
    """
    x, kernels, bias = _as_tensor(x), _as_tensor(kernels), _as_tensor(bias)
    if kernels.data.ndim != 3:
        raise ValueError(f"conv1d kernels must be (C_out, C_in, W), got {kernels.data.shape}")
    c_out, c_in, width = kernels.data.shape
    if width % 2 != 1:
        raise ValueError(f"conv1d kernel width must be odd, got {width}")
    xd, batched = _promote_ct(x.data)
    b, c_x, t = xd.shape
    if c_x != c_in:
        raise ValueError(
            f"conv1d: input has {c_x} channels but kernels expect {c_in}"
        )
    if bias.data.shape != (c_out,):
        raise ValueError(f"conv1d: bias shape {bias.data.shape} does not match {c_out} output channels")
    pad = (width - 1) // 2

    def tap_stack(source):
        # (B, W*C_in, T): the W shifted padded views stacked channel-wise,
        # contiguous so the batched matmul below stays on the BLAS path
        padded = np.zeros((b, c_in, t + 2 * pad), dtype=xd.dtype)
        padded[:, :, pad:pad + t] = source
        return np.concatenate([padded[:, :, w:w + t] for w in range(width)], axis=1)

    # rows flattened in (tap, channel) order to match tap_stack
    k2 = np.ascontiguousarray(kernels.data.transpose(0, 2, 1)).reshape(c_out, width * c_in)
    out_data = np.matmul(k2, tap_stack(xd)) + bias.data[:, None]
    if not batched:
        out_data = out_data[0]

    def backward_fn(g):
        g3 = g[None] if not batched else g
        if kernels.requires_grad:
            # recomputing the tap stack keeps graph memory flat
            gk2 = np.matmul(g3, tap_stack(xd).transpose(0, 2, 1)).sum(axis=0)
            kernels._accumulate(gk2.reshape(c_out, width, c_in).transpose(0, 2, 1))
        if bias.requires_grad:
            bias._accumulate(g3.sum(axis=(0, 2)))
        if x.requires_grad:
            gcat = np.matmul(k2.T, g3)
            gx_pad = np.zeros((b, c_in, t + 2 * pad), dtype=xd.dtype)
            for w in range(width):
                gx_pad[:, :, w:w + t] += gcat[:, w * c_in:(w + 1) * c_in]
            gx = gx_pad[:, :, pad:pad + t]
            x._accumulate(gx if batched else gx[0])

    return _make(out_data, (x, kernels, bias), backward_fn)


def global_avg_pool(x):
    """Mean over the temporal axis: (C, T) -> (C,) or (B, C, T) -> (B, C)."""
    x = _as_tensor(x)
    xd, batched = _promote_ct(x.data)
    t = xd.shape[2]
    if t < 1:
        raise ValueError("global_avg_pool: empty temporal axis")
    out_data = xd.mean(axis=2)
    if not batched:
        out_data = out_data[0]

    def backward_fn(g):
        g3 = g[None] if not batched else g
        gx = np.repeat(g3[:, :, None] / t, t, axis=2).astype(xd.dtype)
        x._accumulate(gx if batched else gx[0])

    return _make(out_data, (x,), backward_fn)


def avg_pool_same(x, width):
    """Stride-1 window averaging with zero padding; output length equals input length.

    Zero padding is counted in the divisor, which keeps the op linear.
    """
    x = _as_tensor(x)
    if width < 1:
        raise ValueError(f"avg_pool_same width must be >= 1, got {width}")
    xd, batched = _promote_ct(x.data)
    b, c, t = xd.shape
    pad_l = (width - 1) // 2
    pad_r = width // 2
    x_pad = np.zeros((b, c, t + pad_l + pad_r), dtype=xd.dtype)
    x_pad[:, :, pad_l:pad_l + t] = xd
    out3 = np.zeros((b, c, t), dtype=xd.dtype)
    for w in range(width):
        out3 += x_pad[:, :, w:w + t]
    out3 /= width
    out_data = out3 if batched else out3[0]

    def backward_fn(g):
        g3 = g[None] if not batched else g
        gx_pad = np.zeros((b, c, t + pad_l + pad_r), dtype=xd.dtype)
        for w in range(width):
            gx_pad[:, :, w:w + t] += g3
        gx = gx_pad[:, :, pad_l:pad_l + t] / width
        x._accumulate(gx if batched else gx[0])

    return _make(out_data, (x,), backward_fn)


def channel_concat(a, b):
    """Concatenate along the channel axis; gradients route back to each source."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != b.data.ndim:
        raise ValueError(
            f"channel_concat: rank mismatch {a.data.shape} vs {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-1]:
        raise ValueError(
            f"channel_concat: temporal extents differ ({a.data.shape[-1]} vs {b.data.shape[-1]})"
        )
    axis = a.data.ndim - 2
    c_a = a.data.shape[axis]
    out_data = np.concatenate([a.data, b.data], axis=axis)

    def backward_fn(g):
        ga, gb = np.split(g, [c_a], axis=axis)
        if a.requires_grad:
            a._accumulate(ga)
        if b.requires_grad:
            b._accumulate(gb)

    return _make(out_data, (a, b), backward_fn)


def batchnorm1d(x, gamma, beta, running_mean, running_var, training, momentum=0.1, eps=1e-5):
    """Per-channel batch normalization over the batch and temporal axes.

    Training uses biased batch statistics and updates the running buffers in
    place; inference reads the running buffers and touches nothing.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    xd, batched = _promote_ct(x.data)
    b, c, t = xd.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError(
            f"batchnorm1d: scale/shift shape {gamma.data.shape}/{beta.data.shape} does not match {c} channels"
        )
    if training:
        mean = xd.mean(axis=(0, 2))
        var = xd.var(axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean.astype(xd.dtype)
        var = running_var.astype(xd.dtype)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mean[:, None]) * inv_std[:, None]
    out3 = gamma.data[:, None] * xhat + beta.data[:, None]
    out_data = out3 if batched else out3[0]

    def backward_fn(g):
        g3 = g[None] if not batched else g
        if gamma.requires_grad:
            gamma._accumulate((g3 * xhat).sum(axis=(0, 2)))
        if beta.requires_grad:
            beta._accumulate(g3.sum(axis=(0, 2)))
        if x.requires_grad:
            gs = g3 * gamma.data[:, None]
            if training:
                m = b * t
                gx = (inv_std[:, None] / m) * (
                    m * gs
                    - gs.sum(axis=(0, 2))[:, None]
                    - xhat * (gs * xhat).sum(axis=(0, 2))[:, None]
                )
            else:
                gx = gs * inv_std[:, None]
            gx = gx.astype(xd.dtype, copy=False)
            x._accumulate(gx if batched else gx[0])

    return _make(out_data, (x, gamma, beta), backward_fn)


# ---------------------------------------------------------------------------
# losses


def mse_loss(prediction, target):
    prediction, target = _as_tensor(prediction), _as_tensor(target)
    if prediction.data.shape != target.data.shape:
        raise ValueError(
            f"mse_loss: shape mismatch {prediction.data.shape} vs {target.data.shape}"
        )
    diff = prediction.data - target.data
    n = diff.size
    out_data = np.asarray((diff * diff).mean())

    def backward_fn(g):
        scale = g * 2.0 / n
        if prediction.requires_grad:
            prediction._accumulate(scale * diff)
        if target.requires_grad:
            target._accumulate(-scale * diff)

    return _make(out_data, (prediction, target), backward_fn)


def softmax(logits):
    """Plain numpy softmax over the last axis (no graph)."""
    z = np.asarray(logits)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean over the batch of -log softmax(logits)[label]; labels are int indices."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ValueError(f"softmax_cross_entropy expects (B, K) logits, got {logits.data.shape}")
    b, k = logits.data.shape
    if labels.shape != (b,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {b}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    out_data = np.asarray((logsumexp - z[np.arange(b), labels]).mean())
    probs = np.exp(z - logsumexp[:, None])

    def backward_fn(g):
        grad = probs.copy()
        grad[np.arange(b), labels] -= 1.0
        logits._accumulate((g / b) * grad)

    return _make(out_data, (logits,), backward_fn)


def loss(kind, prediction, target):
    """Dispatch for the two loss kinds used by the pipeline."""
    if kind == "mse":
        return mse_loss(prediction, target)
    if kind == "softmax_cross_entropy":
        return softmax_cross_entropy(prediction, target)
    raise ValueError(f"unknown loss kind {kind!r}")
