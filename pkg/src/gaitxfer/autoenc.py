"""Temporal densely-connected convolutional autoencoder.

The encoder maps a 3x250 single-sensor frame to a 32x250 latent map
through an initial wide convolution and two dense blocks joined by a
compressing transition; the decoder mirrors that path back to 3
channels. Every stage is stride-1 and length-preserving, so the
temporal extent never changes. Trained with mean-squared reconstruction
error; the frozen encoder is the transferable feature extractor.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import numerics as N
from .dataio import ModelArchive
from .numerics.layers import AvgPoolSame, BatchNorm1d, Conv1d, Dropout, Layer, ReLU, Stack

logger = logging.getLogger(__name__)

# parameter total of the reference architecture this design calibrates to
REFERENCE_PARAM_COUNT = 264265

_PRECISIONS = {"f4": np.float32, "f8": np.float64}


@dataclass(frozen=True)
class AutoencoderConfig:
    dense_blocks_per_side: int = 2
    layers_per_block: int = 4
    bottleneck_size: int = 4
    initial_filters: int = 32
    initial_kernel_width: int = 7
    initial_pool_width: int = 3
    growth_filters: int = 16
    kernel_width: int = 3
    transition_pool_size: int = 2
    stride: int = 1
    theta: float = 0.5
    dropout_rate: float = 0.2
    latent_channels: int = 32
    use_batchnorm: bool = True
    use_pooling: bool = True  # stride-1 window averaging; off skips pools entirely
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 30
    seed: int = 42
    precision: str = "f4"

    def __post_init__(self):
        if self.stride != 1:
            raise ValueError("only stride 1 is supported; it keeps the temporal extent fixed")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        counts = (
            "dense_blocks_per_side",
            "layers_per_block",
            "bottleneck_size",
            "initial_filters",
            "initial_kernel_width",
            "initial_pool_width",
            "growth_filters",
            "kernel_width",
            "transition_pool_size",
            "latent_channels",
        )
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("initial_kernel_width", "kernel_width"):
            if getattr(self, name) % 2 == 0:
                raise ValueError(f"{name} must be odd for same-length convolution")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(_PRECISIONS)}")

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]


class _DenseLayer(Layer):
    """Two composite units; output concatenates the input with new channels."""

    def __init__(self, name, c_in, cfg, rng):
        mid = cfg.bottleneck_size * cfg.growth_filters
        self.squeeze = _composite(f"{name}.squeeze", c_in, mid, cfg.kernel_width, cfg, rng)
        self.grow = _composite(f"{name}.grow", mid, cfg.growth_filters, cfg.kernel_width, cfg, rng)
        self.c_out = c_in + cfg.growth_filters

    def params(self):
        return {**self.squeeze.params(), **self.grow.params()}

    def buffers(self):
        return {**self.squeeze.buffers(), **self.grow.buffers()}

    def no_decay_names(self):
        return self.squeeze.no_decay_names() | self.grow.no_decay_names()

    def __call__(self, x, *, training=False, rng=None):
        fresh = self.squeeze(x, training=training, rng=rng)
        fresh = self.grow(fresh, training=training, rng=rng)
        return N.channel_concat(x, fresh)


def _composite(name, c_in, c_out, width, cfg, rng, dropout=True):
    """Norm-activate-convolve(-drop) unit in the dense-connectivity style."""
    layers = []
    if cfg.use_batchnorm:
        layers.append(BatchNorm1d(c_in, dtype=cfg.dtype, name=f"{name}.bn"))
    layers.append(ReLU())
    layers.append(Conv1d(c_in, c_out, width, rng=rng, dtype=cfg.dtype, name=f"{name}.conv"))
    if dropout and cfg.dropout_rate > 0.0:
        layers.append(Dropout(cfg.dropout_rate))
    return Stack(layers)


def _coder(name, cfg, in_channels, out_channels, rng):
    """Shared block layout of the encoder and (mirrored) decoder.

    stem conv (wide) -> dense blocks with transitions between them ->
    1-wide projection conv to out_channels. Returns (stack, stage list)
    where the stage list records (label, channels) for reporting.
    """
    layers = []
    stages = []
    stem = [
        Conv1d(
            in_channels,
            cfg.initial_filters,
            cfg.initial_kernel_width,
            rng=rng,
            dtype=cfg.dtype,
            name=f"{name}.stem.conv",
        )
    ]
    if cfg.use_batchnorm:
        stem.append(BatchNorm1d(cfg.initial_filters, dtype=cfg.dtype, name=f"{name}.stem.bn"))
    stem.append(ReLU())
    if cfg.use_pooling:
        stem.append(AvgPoolSame(cfg.initial_pool_width))
    layers.append(Stack(stem))
    stages.append(("stem", cfg.initial_filters))

    channels = cfg.initial_filters
    for b in range(cfg.dense_blocks_per_side):
        if b > 0:
            compressed = int(np.floor(cfg.theta * channels))
            transition = [
                _composite(f"{name}.trans{b}", channels, compressed, 1, cfg, rng, dropout=False)
            ]
            if cfg.use_pooling:
                transition.append(AvgPoolSame(cfg.transition_pool_size))
            layers.append(Stack(transition))
            channels = compressed
            stages.append((f"transition{b}", channels))
        block = []
        for i in range(cfg.layers_per_block):
            layer = _DenseLayer(f"{name}.block{b}.layer{i}", channels, cfg, rng)
            block.append(layer)
            channels = layer.c_out
        layers.append(Stack(block))
        stages.append((f"block{b}", channels))

    layers.append(_composite(f"{name}.proj", channels, out_channels, 1, cfg, rng, dropout=False))
    stages.append(("projection", out_channels))
    return Stack(layers), stages


@dataclass
class AutoencoderModel:
    config: AutoencoderConfig
    encoder: Layer
    decoder: Layer
    params: N.ParameterSet
    loss_history: list = field(default_factory=list)
    trained_on: str = None
    stages: dict = field(default_factory=dict)

    @property
    def param_count(self):
        return self.params.total_count


def build_autoencoder(config=None, seed=None):
    """Construct an untrained model; the same seed rebuilds it bit-identically."""
    cfg = config if config is not None else AutoencoderConfig()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    rng = np.random.default_rng([cfg.seed, 0xAE])
    encoder, enc_stages = _coder("enc", cfg, 3, cfg.latent_channels, rng)
    decoder, dec_stages = _coder("dec", cfg, cfg.latent_channels, 3, rng)
    params = N.ParameterSet()
    params.add_layer(encoder)
    params.add_layer(decoder)
    model = AutoencoderModel(
        config=cfg,
        encoder=encoder,
        decoder=decoder,
        params=params,
        stages={"encoder": enc_stages, "decoder": dec_stages},
    )
    logger.info(
        "built autoencoder: %d trainable parameters (reference %d, %+.2f%%)",
        model.param_count,
        REFERENCE_PARAM_COUNT,
        100.0 * (model.param_count - REFERENCE_PARAM_COUNT) / REFERENCE_PARAM_COUNT,
    )
    return model


def parameter_summary(model):
    """Per-stage trainable-parameter accounting plus the reference delta."""
    groups = {}
    for name, tensor in model.params.items():
        prefix = ".".join(name.split(".")[:2])
        groups[prefix] = groups.get(prefix, 0) + tensor.data.size
    total = model.param_count
    return {
        "total": total,
        "reference_total": REFERENCE_PARAM_COUNT,
        "delta_percent": 100.0 * (total - REFERENCE_PARAM_COUNT) / REFERENCE_PARAM_COUNT,
        "groups": groups,
        "encoder_stages": list(model.stages.get("encoder", [])),
        "decoder_stages": list(model.stages.get("decoder", [])),
    }


def _frame_matrix(frames, dtype):
    data = [f.data if hasattr(f, "data") else f for f in frames]
    batch = np.stack([np.asarray(d, dtype=dtype) for d in data])
    if batch.ndim != 3 or batch.shape[1] != 3:
        raise ValueError(f"expected a batch of 3-channel frames, got shape {batch.shape}")
    return batch


def train_autoencoder(model, frames, *, epochs=None, learning_rate=None, batch_size=None,
                      seed=None, fingerprint=None):
    """Train in place to reconstruct the given frames; returns the model.

    Batches are reshuffled every epoch from the seed, loss_history gains
    one mean reconstruction MSE per epoch, and a non-finite loss aborts
    with a diagnostic rather than training onward.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    learning_rate = cfg.learning_rate if learning_rate is None else learning_rate
    batch_size = cfg.batch_size if batch_size is None else batch_size
    seed = cfg.seed if seed is None else seed
    if not frames:
        raise ValueError("no frames to train on")

    batch_all = _frame_matrix(frames, cfg.dtype)
    n = batch_all.shape[0]
    state = N.make_optimizer_state("adam", learning_rate=learning_rate)
    rng = np.random.default_rng([seed, 0x7E])

    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            chunk = batch_all[order[start : start + batch_size]]
            x = N.Tensor(chunk)
            recon = model.decoder(model.encoder(x, training=True, rng=rng), training=True, rng=rng)
            loss = N.mse_loss(recon, N.Tensor(chunk))
            value = float(loss.data)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}: non-finite loss "
                    f"(learning rate {learning_rate} may be too high)"
                )
            N.zero_grads(model.params)
            loss.backward()
            N.optimizer_step(model.params, N.collect_grads(model.params), state)
            epoch_loss += value * chunk.shape[0]
        model.loss_history.append(epoch_loss / n)
    if fingerprint is not None:
        model.trained_on = fingerprint
    return model


def _check_frame_shape(model, data):
    expected = (3, 250)
    if data.shape != expected:
        raise ValueError(f"encoder expects a {expected[0]}x{expected[1]} frame, got {data.shape}")


def encode(model, frame):
    """Frozen-encoder latent map for one frame; inference mode, deterministic."""
    data = np.asarray(frame.data if hasattr(frame, "data") else frame)
    _check_frame_shape(model, data)
    out = model.encoder(N.Tensor(data.astype(model.config.dtype)), training=False)
    return out.data


def encode_batch(model, frames):
    """Latents for many frames at once: (B, latent_channels, 250)."""
    batch = _frame_matrix(frames, model.config.dtype)
    for item in batch:
        _check_frame_shape(model, item)
    out = model.encoder(N.Tensor(batch), training=False)
    return out.data


def reconstruct(model, frame):
    """Full encode-decode pass in inference mode (for loss inspection)."""
    data = np.asarray(frame.data if hasattr(frame, "data") else frame)
    _check_frame_shape(model, data)
    x = N.Tensor(data.astype(model.config.dtype))
    return model.decoder(model.encoder(x, training=False), training=False).data


def to_archive(model):
    """Package config, parameters, and norm statistics for persistence."""
    tensors = {}
    for name, tensor in model.params.items():
        tensors[name] = tensor.data
    for holder in (model.encoder, model.decoder):
        for name, buf in holder.buffers().items():
            tensors[f"buffer.{name}"] = buf
    if model.loss_history:
        tensors["loss_history"] = np.asarray(model.loss_history, dtype=np.float64)
    provenance = {"seed": model.config.seed}
    if model.trained_on is not None:
        provenance["dataset_fingerprint"] = model.trained_on
    return ModelArchive(
        kind="autoencoder",
        config=dataclasses.asdict(model.config),
        tensors=tensors,
        provenance=provenance,
    )


def from_archive(archive):
    """Rebuild a model from an archive; parameters restore bit-exactly."""
    if archive.kind != "autoencoder":
        raise ValueError(f"expected an autoencoder archive, got kind {archive.kind!r}")
    cfg = AutoencoderConfig(**archive.config)
    model = build_autoencoder(cfg)
    for name, tensor in model.params.items():
        stored = archive.tensors.get(name)
        if stored is None:
            raise ValueError(f"archive is missing parameter {name!r}")
        if stored.shape != tensor.data.shape:
            raise ValueError(
                f"archive parameter {name!r} has shape {stored.shape}, "
                f"model expects {tensor.data.shape}"
            )
        tensor.data = stored.astype(cfg.dtype, copy=True)
    for holder in (model.encoder, model.decoder):
        for name, buf in holder.buffers().items():
            stored = archive.tensors.get(f"buffer.{name}")
            if stored is None:
                raise ValueError(f"archive is missing buffer {name!r}")
            buf[...] = stored
    history = archive.tensors.get("loss_history")
    if history is not None:
        model.loss_history = [float(v) for v in history]
    model.trained_on = archive.provenance.get("dataset_fingerprint")
    return model
