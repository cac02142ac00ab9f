"""Target-task classifiers: a fixed-width MLP and a linear SVM.

The MLP is four ReLU dense layers of 64, 128, 128, 64 units, each
followed by dropout, ending in a softmax layer; weights carry an L2
penalty. The SVM is a primal subgradient machine on the hinge loss with
step size 1/(lambda*t). Both train deterministically from a seed and on
any of the feature-vector kinds.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics as N
from .dataio import ModelArchive
from .numerics.layers import Dense

logger = logging.getLogger(__name__)

MLP_WIDTHS = (64, 128, 128, 64)


@dataclass
class MlpModel:
    input_dim: int
    n_classes: int
    layers: list  # four hidden Dense layers plus the output Dense
    params: N.ParameterSet
    dropout_rate: float = 0.2
    l2_strength: float = 1e-4
    seed: int = 42
    loss_history: list = field(default_factory=list)
    trained_on: str = None

    @property
    def param_count(self):
        return self.params.total_count


@dataclass
class SvmModel:
    weight: np.ndarray
    bias: float
    lam: float
    trained_on: str = None


def build_mlp(input_dim, n_classes=2, seed=42, *, dropout_rate=0.2, l2_strength=1e-4):
    """Fresh MLP with the frozen width sequence; same seed, same weights."""
    if input_dim < 1:
        raise ValueError(f"input_dim must be positive, got {input_dim}")
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    rng = np.random.default_rng([seed, 0x317])
    dims = (input_dim, *MLP_WIDTHS, n_classes)
    layers = [
        Dense(dims[i], dims[i + 1], rng=rng, dtype=np.float32, name=f"mlp.layer{i}")
        for i in range(len(dims) - 1)
    ]
    params = N.ParameterSet()
    for layer in layers:
        params.add_layer(layer)
    return MlpModel(
        input_dim=input_dim,
        n_classes=n_classes,
        layers=layers,
        params=params,
        dropout_rate=dropout_rate,
        l2_strength=l2_strength,
        seed=seed,
    )


def _mlp_logits(model, x, training, rng):
    h = x
    for layer in model.layers[:-1]:
        h = N.relu(layer(h))
        h = N.dropout(h, model.dropout_rate, training, rng)
    return model.layers[-1](h)


def _as_features(features, dtype=np.float32):
    arr = np.asarray(features, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim != 2:
        raise ValueError(f"features must be a vector or an n x d matrix, got shape {arr.shape}")
    return arr


def train_mlp(model, features, labels, *, learning_rate=1e-3, batch_size=32, epochs=300,
              patience=20, seed=None, fingerprint=None):
    """Minimize cross-entropy plus the weight L2 penalty; returns the model.

    Runs at most `epochs` passes, stopping early once the epoch training
    loss has not improved for `patience` consecutive epochs. Fully
    deterministic given the seed.
    """
    x_all = _as_features(features)
    y_all = np.asarray(labels, dtype=np.int64)
    if x_all.shape[1] != model.input_dim:
        raise ValueError(f"features have dim {x_all.shape[1]}, model expects {model.input_dim}")
    if len(y_all) != len(x_all):
        raise ValueError("features and labels disagree in length")
    if y_all.min() < 0 or y_all.max() >= model.n_classes:
        raise ValueError(
            f"labels must lie in [0, {model.n_classes}), got range "
            f"[{y_all.min()}, {y_all.max()}]"
        )
    seed = model.seed if seed is None else seed
    rng = np.random.default_rng([seed, 0x714])
    state = N.make_optimizer_state("adam", learning_rate=learning_rate)
    n = len(x_all)
    weight_names = [name for name in model.params.names() if model.params.decays(name)]

    best = np.inf
    stale = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits = _mlp_logits(model, N.Tensor(x_all[idx]), True, rng)
            loss = N.softmax_cross_entropy(logits, y_all[idx])
            if model.l2_strength > 0.0:
                penalty = None
                for name in weight_names:
                    w = model.params[name]
                    term = N.reduce_sum(N.mul(w, w))
                    penalty = term if penalty is None else N.add(penalty, term)
                loss = N.add(loss, N.mul(penalty, N.Tensor(np.float32(model.l2_strength))))
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: non-finite loss "
                    f"(learning rate {learning_rate} may be too high)"
                )
            N.zero_grads(model.params)
            loss.backward()
            N.optimizer_step(model.params, N.collect_grads(model.params), state)
            epoch_loss += value * len(idx)
        epoch_loss /= n
        model.loss_history.append(epoch_loss)
        if epoch_loss < best - 1e-12:
            best = epoch_loss
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                logger.info("early stop at epoch %d (no improvement for %d)", epoch, patience)
                break
    if fingerprint is not None:
        model.trained_on = fingerprint
    return model


def predict_mlp_proba(model, features):
    """Class probabilities in inference mode (dropout off, deterministic)."""
    x = _as_features(features)
    if x.shape[1] != model.input_dim:
        raise ValueError(f"features have dim {x.shape[1]}, model expects {model.input_dim}")
    logits = _mlp_logits(model, N.Tensor(x), False, None)
    return N.softmax(logits.data)


def train_linear_svm(features, labels, lam=1e-3, epochs=200, seed=42, *, fingerprint=None):
    """Full-batch primal subgradient descent on the hinge objective.

    Objective: lam/2 ||w||^2 + mean_i max(0, 1 - y_i (w.x_i + b)), with
    binary labels {0,1} mapped to {-1,+1} and step size 1/(lam*t) at
    epoch t. The update rule is deterministic; the seed parameter is
    accepted for interface symmetry with the MLP trainer.
    """
    del seed  # full-batch updates from w=0 have no random choices
    x = _as_features(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) != 2:
        raise ValueError(f"need exactly 2 classes for the SVM, got {list(classes)}")
    sign = np.where(y == classes.max(), 1.0, -1.0)
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    n, d = x.shape
    w = np.zeros(d)
    b = 0.0
    for t in range(1, epochs + 1):
        step = 1.0 / (lam * t)
        margins = sign * (x @ w + b)
        violators = margins < 1.0
        grad_w = lam * w
        grad_b = 0.0
        if violators.any():
            grad_w = grad_w - (sign[violators, None] * x[violators]).sum(axis=0) / n
            grad_b = -sign[violators].sum() / n
        w -= step * grad_w
        b -= step * grad_b
    if not (np.isfinite(w).all() and np.isfinite(b)):
        raise RuntimeError("SVM training produced non-finite parameters")
    return SvmModel(weight=w, bias=float(b), lam=lam, trained_on=fingerprint)


def svm_objective(model, features, labels):
    """Regularized hinge objective value (diagnostic)."""
    x = _as_features(features, dtype=np.float64)
    y = np.asarray(labels)
    sign = np.where(y == np.unique(y).max(), 1.0, -1.0)
    margins = sign * (x @ model.weight + model.bias)
    hinge = np.maximum(0.0, 1.0 - margins).mean()
    return 0.5 * model.lam * float(model.weight @ model.weight) + float(hinge)


def predict(model, features):
    """Class indices for one vector or a batch; same rule either way.

    MLP: argmax of the softmax output. SVM: 1 when w.x + b >= 0 else 0.
    """
    single = np.asarray(features).ndim == 1
    if isinstance(model, MlpModel):
        proba = predict_mlp_proba(model, features)
        out = proba.argmax(axis=1)
    elif isinstance(model, SvmModel):
        x = _as_features(features, dtype=np.float64)
        if x.shape[1] != model.weight.shape[0]:
            raise ValueError(
                f"features have dim {x.shape[1]}, model expects {model.weight.shape[0]}"
            )
        out = (x @ model.weight + model.bias >= 0.0).astype(np.int64)
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    return int(out[0]) if single else out


def mlp_to_archive(model):
    tensors = {name: tensor.data for name, tensor in model.params.items()}
    if model.loss_history:
        tensors["loss_history"] = np.asarray(model.loss_history, dtype=np.float64)
    provenance = {"seed": model.seed}
    if model.trained_on is not None:
        provenance["dataset_fingerprint"] = model.trained_on
    return ModelArchive(
        kind="mlp",
        config={
            "input_dim": model.input_dim,
            "n_classes": model.n_classes,
            "dropout_rate": model.dropout_rate,
            "l2_strength": model.l2_strength,
            "seed": model.seed,
        },
        tensors=tensors,
        provenance=provenance,
    )


def mlp_from_archive(archive):
    if archive.kind != "mlp":
        raise ValueError(f"expected an mlp archive, got kind {archive.kind!r}")
    cfg = archive.config
    model = build_mlp(
        cfg["input_dim"],
        cfg["n_classes"],
        cfg["seed"],
        dropout_rate=cfg["dropout_rate"],
        l2_strength=cfg["l2_strength"],
    )
    for name, tensor in model.params.items():
        stored = archive.tensors.get(name)
        if stored is None:
            raise ValueError(f"archive is missing parameter {name!r}")
        tensor.data = stored.astype(np.float32, copy=True)
    history = archive.tensors.get("loss_history")
    if history is not None:
        model.loss_history = [float(v) for v in history]
    model.trained_on = archive.provenance.get("dataset_fingerprint")
    return model


def svm_to_archive(model):
    provenance = {}
    if model.trained_on is not None:
        provenance["dataset_fingerprint"] = model.trained_on
    return ModelArchive(
        kind="svm",
        config={"lam": model.lam},
        tensors={
            "weight": np.asarray(model.weight, dtype=np.float64),
            "bias": np.asarray([model.bias], dtype=np.float64),
        },
        provenance=provenance,
    )


def svm_from_archive(archive):
    if archive.kind != "svm":
        raise ValueError(f"expected an svm archive, got kind {archive.kind!r}")
    return SvmModel(
        weight=archive.tensors["weight"],
        bias=float(archive.tensors["bias"][0]),
        lam=archive.config["lam"],
        trained_on=archive.provenance.get("dataset_fingerprint"),
    )
