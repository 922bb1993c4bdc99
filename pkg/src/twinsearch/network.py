"""Twin feature-extractor: declarative build, shared-weight embedding, checkpoints.

One Network instance serves both twin slots; embed_pair simply runs the same
layer stack twice, so any parameter update is visible to both passes by
construction.

Checkpoint format: magic b"SCBR", format version u32 LE, header length u32 LE,
canonical JSON header (config, seed, parameter manifest), then each parameter
tensor as little-endian float64 in manifest order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .layers import Conv2D, Dropout, GlobalMaxPool, LayerGrads, MaxPool2D, ReLU, ResidualBlock

CHECKPOINT_MAGIC = b"SCBR"
CHECKPOINT_VERSION = 1


@dataclass
class NetworkConfig:
    """Declarative description of the twin feature extractor."""

    input_shape: tuple[int, int, int]
    head_filters: list[int]
    head_strides: list[int]
    residual_filters: list[int]
    kernel_size: int = 3
    embedding_dim: int = 2
    dropout_rate: float = 0.25
    preset_name: str = "custom"

    def validate(self) -> None:
        if len(self.head_filters) != len(self.head_strides):
            raise ConfigError(
                f"head_filters ({len(self.head_filters)}) and head_strides "
                f"({len(self.head_strides)}) must have equal length"
            )
        if not self.head_filters:
            raise ConfigError("head_filters must not be empty")
        if not self.residual_filters:
            raise ConfigError("residual_filters must not be empty")
        if self.residual_filters[-1] != self.head_filters[-1]:
            raise ConfigError(
                "identity skip needs residual block output channels "
                f"({self.residual_filters[-1]}) to equal its input channels "
                f"({self.head_filters[-1]})"
            )
        if self.embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if len(self.input_shape) != 3 or any(v < 1 for v in self.input_shape):
            raise ConfigError(f"input_shape must be three positive extents, got {self.input_shape}")


_PRESETS = {
    "breast-twins": dict(
        input_shape=(224, 224, 3),
        head_filters=[32, 64, 128, 256],
        head_strides=[1, 2, 2, 2],
        residual_filters=[64, 32, 1, 256],
    ),
    "skin-twins": dict(
        input_shape=(512, 512, 3),
        head_filters=[32, 64, 128, 256],
        head_strides=[1, 2, 2, 2],
        residual_filters=[32, 16, 1, 256],
    ),
    "desk": dict(
        input_shape=(64, 64, 3),
        head_filters=[8, 16],
        head_strides=[1, 2],
        residual_filters=[8, 4, 1, 16],
    ),
}


def preset_config(name: str, input_shape: tuple[int, int, int] | None = None) -> NetworkConfig:
    """Return a named preset, optionally rebound to a different input size."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    kwargs = dict(_PRESETS[name])
    if input_shape is not None:
        kwargs["input_shape"] = tuple(input_shape)
    cfg = NetworkConfig(preset_name=name, **kwargs)
    cfg.validate()
    return cfg


def preset_names() -> list[str]:
    return sorted(_PRESETS)


class Network:
    """Layered model with shared parameter storage for both twin slots."""

    def __init__(self, config: NetworkConfig, layers: list, seed: int, mode: str = "training"):
        self.config = config
        self.layers = layers
        self.seed = seed
        self.mode = mode

    @property
    def embedding_dim(self) -> int:
        return self.config.embedding_dim

    def parameters(self) -> list[np.ndarray]:
        """Live parameter arrays in layer order; mutations affect both twins."""
        return [p for layer in self.layers for p in layer.params]

    @property
    def params(self) -> list[np.ndarray]:
        # layer-protocol alias so finite_diff_check can probe a whole network
        return self.parameters()

    def forward(self, x: np.ndarray, training: bool | None = None, rng=None):
        """Run the stack, returning (embedding, tape) for a later backward."""
        if training is None:
            training = self.mode == "training"
        tape = []
        h = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            h, ctx = layer.forward(h, training=training, rng=rng)
            tape.append(ctx)
        return h, tape

    def backward(self, tape: list, grad_out: np.ndarray) -> LayerGrads:
        """Backpropagate through a recorded tape; grads align with parameters()."""
        g = np.asarray(grad_out, dtype=np.float64)
        rev_param_grads: list[list[np.ndarray]] = []
        for layer, ctx in zip(reversed(self.layers), reversed(tape)):
            grads = layer.backward(ctx, g)
            g = grads.grad_input
            rev_param_grads.append(grads.grad_params)
        flat = [p for grads in reversed(rev_param_grads) for p in grads]
        return LayerGrads(g, flat)

    def _check_input(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        if image.shape != tuple(self.config.input_shape):
            raise DimensionError(
                f"input shape {image.shape} does not match configured "
                f"{tuple(self.config.input_shape)}"
            )
        return image

    def embed(self, image: np.ndarray) -> np.ndarray:
        """Deterministic feature vector for one patch (dropout disabled)."""
        image = self._check_input(image)
        out, _ = self.forward(image, training=False)
        return out

    def embed_pair(self, x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        """Embed both inputs through the shared weights and return their distance."""
        v1 = self.embed(x1)
        v2 = self.embed(x2)
        return v1, v2, float(np.sqrt(((v1 - v2) ** 2).sum()))

    def forward_trace(self, image: np.ndarray):
        """Inference forward keeping every layer's output and ctx (for saliency)."""
        image = self._check_input(image)
        trace = []
        h = image
        for layer in self.layers:
            h, ctx = layer.forward(h, training=False, rng=None)
            trace.append((layer, h, ctx))
        return h, trace


def _conv_out(extent: int, kernel: int, stride: int) -> int:
    return (extent - kernel) // stride + 1


def build_network(config: NetworkConfig, seed: int) -> Network:
    """Assemble the layer stack and initialize parameters from the seed.

    Kernels draw uniform from +/- sqrt(6 / fan_in); biases start at zero.
    Raises ConfigError naming the layer where spatial extent would collapse
    below the kernel or pool window.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    k = config.kernel_size
    h, w, c = config.input_shape

    def make_conv(name: str, in_c: int, out_c: int, stride: int, padding: str) -> Conv2D:
        fan_in = k * k * in_c
        limit = math.sqrt(6.0 / fan_in)
        kernels = rng.uniform(-limit, limit, size=(k, k, in_c, out_c))
        return Conv2D(kernels, np.zeros(out_c), stride=stride, padding=padding, name=name)

    layers: list = []
    for i, (filters, stride) in enumerate(zip(config.head_filters, config.head_strides)):
        name = f"head_conv_{i}"
        if h < k or w < k:
            raise ConfigError(f"layer {name}: spatial extent {h}x{w} below kernel {k}x{k}")
        layers.append(make_conv(name, c, filters, stride, "valid"))
        layers.append(ReLU())
        h, w, c = _conv_out(h, k, stride), _conv_out(w, k, stride), filters

    if h < 2 or w < 2:
        raise ConfigError(f"layer max_pool: spatial extent {h}x{w} below pool window 2x2")
    layers.append(MaxPool2D(window=2, stride=2))
    h, w = _conv_out(h, 2, 2), _conv_out(w, 2, 2)
    layers.append(Dropout(config.dropout_rate))

    res_convs = []
    in_c = c
    for i, filters in enumerate(config.residual_filters):
        res_convs.append(make_conv(f"residual_conv_{i}", in_c, filters, 1, "same"))
        in_c = filters
    layers.append(ResidualBlock(res_convs))

    if h < k or w < k:
        raise ConfigError(f"layer embedding_conv: spatial extent {h}x{w} below kernel {k}x{k}")
    layers.append(make_conv("embedding_conv", c, config.embedding_dim, 1, "valid"))
    h, w = _conv_out(h, k, 1), _conv_out(w, k, 1)
    layers.append(GlobalMaxPool())

    return Network(config, layers, seed=seed, mode="training")


def _named_params(network: Network) -> list[tuple[str, np.ndarray]]:
    named = []
    for layer in network.layers:
        if isinstance(layer, Conv2D):
            named.append((f"{layer.name}/kernels", layer.kernels))
            named.append((f"{layer.name}/bias", layer.bias))
        elif isinstance(layer, ResidualBlock):
            for conv in layer.convs:
                named.append((f"{conv.name}/kernels", conv.kernels))
                named.append((f"{conv.name}/bias", conv.bias))
    return named


def save_checkpoint(network: Network, path) -> None:
    named = _named_params(network)
    header = {
        "config": {**asdict(network.config), "input_shape": list(network.config.input_shape)},
        "seed": network.seed,
        "manifest": [{"name": name, "shape": list(arr.shape)} for name, arr in named],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> Network:
    """Rebuild a network from a checkpoint file; rejects wrong magic or version."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"not a checkpoint file: bad magic {blob[:4]!r}")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    header_len = struct.unpack("<I", blob[8:12])[0]
    header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))

    cfg_dict = dict(header["config"])
    cfg_dict["input_shape"] = tuple(cfg_dict["input_shape"])
    config = NetworkConfig(**cfg_dict)
    network = build_network(config, seed=header["seed"])
    network.mode = "inference"

    offset = 12 + header_len
    named = dict(_named_params(network))
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = blob[offset : offset + 8 * count]
        if len(raw) != 8 * count:
            raise DataError(f"checkpoint truncated at parameter {entry['name']}")
        offset += 8 * count
        target = named.get(entry["name"])
        if target is None or target.shape != shape:
            raise DataError(f"checkpoint manifest does not match architecture at {entry['name']}")
        target[...] = np.frombuffer(raw, dtype="<f8").reshape(shape)
    if offset != len(blob):
        raise DataError("checkpoint has trailing bytes beyond the manifest")
    return network
