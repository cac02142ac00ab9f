"""Latent feature variants and dimensionality reduction.

Turns per-sensor encoder latents into classifier-ready vectors three
ways: flattening plus PCA (unconstrained), per-channel temporal
averaging (constrained), and a raw-signal PCA baseline that never sees
the encoder. PCA is always fit on training vectors only; the model
remembers a fingerprint of what it was fit on so leakage is detectable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataio import ModelArchive
from .sigprep import CANONICAL_SENSOR_ORDER

logger = logging.getLogger(__name__)

FEATURE_KINDS = ("unconstrained_pca", "constrained_gap", "raw_pca", "statfeat")


@dataclass
class PcaModel:
    """Orthonormal basis of the top-variance directions of centered data."""

    mean: np.ndarray  # (d,)
    components: np.ndarray  # (k, d), rows orthonormal, eigenvalue-descending
    explained_variance: np.ndarray  # (k,)
    explained_ratio: np.ndarray  # (k,)
    fitted_on: str = None  # fingerprint of the training vectors

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def d(self):
        return self.components.shape[1]


def _sorted_eig(sym):
    # eigh returns ascending order; we want descending eigenvalues
    values, vectors = np.linalg.eigh(sym)
    order = np.argsort(values)[::-1]
    return values[order], vectors[:, order]


def _fix_signs(components):
    # convention: each component's largest-magnitude coordinate is positive
    flips = np.sign(components[np.arange(components.shape[0]), np.abs(components).argmax(axis=1)])
    flips[flips == 0] = 1.0
    return components * flips[:, None]


def vectors_fingerprint(matrix):
    """Content hash of a feature matrix, for the PCA leakage guard."""
    import hashlib

    arr = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64))
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def fit_pca(matrix, k):
    """Fit PCA on n x d training vectors, keeping at most min(d, n-1) axes.

    Uses the sample covariance (n-1 denominator). When d > n the n x n
    Gram matrix of centered rows is eigendecomposed instead and its
    eigenvectors mapped back to d-space, which is exact and avoids the
    infeasible d x d covariance.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"fit_pca expects an n x d matrix, got shape {matrix.shape}")
    n, d = matrix.shape
    if n < 2:
        raise ValueError(f"fit_pca needs at least 2 training vectors, got {n}")
    limit = min(d, n - 1)
    if k > limit:
        logger.warning("requested %d components, clamping to min(d, n-1) = %d", k, limit)
        k = limit
    if k < 1:
        raise ValueError(f"component count must be positive, got {k}")

    mean = matrix.mean(axis=0)
    centered = matrix - mean
    total_variance = float((centered * centered).sum() / (n - 1))
    if d <= n:
        cov = (centered.T @ centered) / (n - 1)
        values, vectors = _sorted_eig(cov)
        components = vectors[:, :k].T
        variance = values[:k]
    else:
        gram = (centered @ centered.T) / (n - 1)
        values, vectors = _sorted_eig(gram)
        variance = values[:k]
        # map Gram eigenvectors u to data-space directions X^T u / ||X^T u||
        basis = centered.T @ vectors[:, :k]
        norms = np.linalg.norm(basis, axis=0)
        norms[norms < 1e-12] = 1.0
        components = (basis / norms).T
    variance = np.clip(variance, 0.0, None)
    if total_variance <= 0.0:
        ratio = np.zeros(k)
    else:
        ratio = variance / total_variance
    return PcaModel(
        mean=mean,
        components=_fix_signs(components),
        explained_variance=variance,
        explained_ratio=ratio,
        fitted_on=vectors_fingerprint(matrix),
    )


def pca_transform(model, x):
    """Project vectors onto the fitted basis: components @ (x - mean)."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != model.d:
        raise ValueError(
            f"pca_transform expects vectors of length {model.d}, got shape {np.shape(x)}"
        )
    out = (arr - model.mean) @ model.components.T
    return out[0] if single else out


def pca_reconstruct(model, z):
    """Back-projection from component space; exact when k is full rank."""
    arr = np.asarray(z, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None]
    if arr.shape[1] != model.k:
        raise ValueError(f"expected {model.k} component coordinates, got {arr.shape[1]}")
    out = arr @ model.components + model.mean
    return out[0] if single else out


def _check_latents(latents_by_sensor, order):
    order = tuple(order)
    missing = [s for s in order if s not in latents_by_sensor]
    if missing:
        raise ValueError(f"missing latents for sensors {missing}")
    shapes = {np.shape(latents_by_sensor[s]) for s in order}
    if len(shapes) != 1:
        raise ValueError(f"latent shapes disagree across sensors: {sorted(shapes)}")
    (shape,) = shapes
    if len(shape) != 2:
        raise ValueError(f"latents must be channels x time, got shape {shape}")
    return order


def vectorize_latents(latents_by_sensor, order=CANONICAL_SENSOR_ORDER):
    """Flatten per-sensor latents to one vector in (sensor, channel, time) order."""
    order = _check_latents(latents_by_sensor, order)
    return np.concatenate(
        [np.asarray(latents_by_sensor[s], dtype=np.float64).reshape(-1) for s in order]
    )


def devectorize_latents(vector, order=CANONICAL_SENSOR_ORDER, channels=32, time_steps=250):
    """Inverse of vectorize_latents for the given geometry."""
    order = tuple(order)
    vector = np.asarray(vector)
    block = channels * time_steps
    if vector.shape != (block * len(order),):
        raise ValueError(
            f"expected a vector of length {block * len(order)}, got shape {vector.shape}"
        )
    return {
        s: vector[i * block : (i + 1) * block].reshape(channels, time_steps)
        for i, s in enumerate(order)
    }


def gap_features(latents_by_sensor, order=CANONICAL_SENSOR_ORDER):
    """Per-channel temporal mean of each sensor's latent map, concatenated."""
    order = _check_latents(latents_by_sensor, order)
    return np.concatenate(
        [np.asarray(latents_by_sensor[s], dtype=np.float64).mean(axis=1) for s in order]
    )


def raw_baseline(frame):
    """Flatten a stacked frame in (sensor, axis, time) order, no encoder."""
    return np.asarray(frame.data, dtype=np.float64).reshape(-1)


def devectorize_raw(vector, sensors, time_steps=250):
    """Inverse of raw_baseline for the given sensor list."""
    sensors = tuple(sensors)
    vector = np.asarray(vector)
    expected = 3 * time_steps * len(sensors)
    if vector.shape != (expected,):
        raise ValueError(f"expected a vector of length {expected}, got shape {vector.shape}")
    return vector.reshape(3 * len(sensors), time_steps)


def to_archive(model):
    """Persist a fitted PCA basis (64-bit, to keep the roundtrip exact)."""
    provenance = {}
    if model.fitted_on is not None:
        provenance["dataset_fingerprint"] = model.fitted_on
    return ModelArchive(
        kind="pca",
        config={"k": int(model.k), "d": int(model.d)},
        tensors={
            "mean": np.asarray(model.mean, dtype=np.float64),
            "components": np.asarray(model.components, dtype=np.float64),
            "explained_variance": np.asarray(model.explained_variance, dtype=np.float64),
            "explained_ratio": np.asarray(model.explained_ratio, dtype=np.float64),
        },
        provenance=provenance,
    )


def from_archive(archive):
    if archive.kind != "pca":
        raise ValueError(f"expected a pca archive, got kind {archive.kind!r}")
    model = PcaModel(
        mean=archive.tensors["mean"],
        components=archive.tensors["components"],
        explained_variance=archive.tensors["explained_variance"],
        explained_ratio=archive.tensors["explained_ratio"],
        fitted_on=archive.provenance.get("dataset_fingerprint"),
    )
    if model.components.shape != (archive.config["k"], archive.config["d"]):
        raise ValueError(
            f"archive components shape {model.components.shape} disagrees with "
            f"config (k={archive.config['k']}, d={archive.config['d']})"
        )
    return model
