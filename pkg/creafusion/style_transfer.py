"""Neural style transfer on a VGG-19-shaped convolutional network.

The network is a sequence of 3x3 stride-1 zero-padded ReLU convolutions and
2x2 mean-pooling layers. Content is represented by raw feature maps and style
by Gram matrices normalised by ``C * M``. Synthesis starts from seeded white
noise and runs fixed-step gradient descent on

``L = alpha * 1/2 sum_content ||F(x) - F(p)||^2
    + beta * sum_style w_l ||G(x) - G(a)||^2``

with ``w_l = 1 / |style layers|`` and pixels clamped to [0, 1] after every
step.

Weight files (``CBMW1``) are binary: the magic bytes, then one record per conv
layer holding a little-endian u32 name length, the UTF-8 name, four u32 dims
``(out, in, 3, 3)``, the weights, and the biases as little-endian f32 in
out-channel-major order.

Example
-------
>>> net = vgg19_spec(base_width=8, seed=3)
>>> result = synthesize(net, draft, style, SynthesisConfig(iters=50))
"""

from __future__ import annotations

import dataclasses as dc
import enum
import logging
import math
import struct
import typing as typ

import numpy as np

from .errors import (
    DimensionMismatchError,
    FormatError,
    NonFiniteError,
    ValidationError,
)
from .imaging import ImageTensor
from .numeric_core import GradTape, Node, seeded_rng

if typ.TYPE_CHECKING:
    import collections.abc as cabc
    from pathlib import Path

    import numpy.typing as npt

logger = logging.getLogger(__name__)

WEIGHT_MAGIC: bytes = b"CBMW1"
DEFAULT_CONTENT_LAYERS: tuple[str, ...] = ("conv4_2",)
DEFAULT_STYLE_LAYERS: tuple[str, ...] = (
    "conv1_1",
    "conv2_1",
    "conv3_1",
    "conv4_1",
    "conv5_1",
)
# Convolutions per block and width multiplier per block.
VGG19_BLOCKS: tuple[tuple[int, int], ...] = ((2, 1), (2, 2), (4, 4), (4, 8), (4, 8))

type ConvWeights = tuple[np.ndarray, np.ndarray]


class LayerKind(enum.StrEnum):
    """Layer types understood by the forward pass."""

    CONV = "conv"
    POOL = "pool"


@dc.dataclass(frozen=True)
class LayerSpec:
    """One named layer; ``out_channels`` is set for convolutions only."""

    name: str
    kind: LayerKind
    out_channels: int | None = None


@dc.dataclass(frozen=True, eq=False)
class ConvNetSpec:
    """Layer list, per-convolution weights, and the loss layer sets."""

    layers: tuple[LayerSpec, ...]
    weights: cabc.Mapping[str, ConvWeights]
    content_layers: tuple[str, ...] = DEFAULT_CONTENT_LAYERS
    style_layers: tuple[str, ...] = DEFAULT_STYLE_LAYERS
    in_channels: int = 3

    def __post_init__(self) -> None:
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            msg = "Layer names must be unique"
            raise ValidationError(msg)
        channels = self.in_channels
        for layer in self.layers:
            if layer.kind is LayerKind.POOL:
                continue
            if layer.name not in self.weights:
                msg = f"No weights for convolution {layer.name!r}"
                raise ValidationError(msg)
            kernel, bias = self.weights[layer.name]
            expected = (layer.out_channels, channels, 3, 3)
            if kernel.shape != expected or bias.shape != (layer.out_channels,):
                msg = (
                    f"Weights for {layer.name!r} have shapes {kernel.shape}/"
                    f"{bias.shape}; expected {expected}"
                )
                raise ValidationError(msg)
            if not (np.all(np.isfinite(kernel)) and np.all(np.isfinite(bias))):
                msg = f"Weights for {layer.name!r} are not finite"
                raise ValidationError(msg)
            channels = typ.cast("int", layer.out_channels)
        if unknown := [
            name
            for name in (*self.content_layers, *self.style_layers)
            if name not in names
        ]:
            msg = f"Unknown loss layers: {', '.join(unknown)}"
            raise ValidationError(msg)

    @property
    def conv_count(self) -> int:
        """Number of convolution layers."""
        return sum(layer.kind is LayerKind.CONV for layer in self.layers)

    @property
    def pool_count(self) -> int:
        """Number of pooling layers."""
        return sum(layer.kind is LayerKind.POOL for layer in self.layers)

    def index_of(self, name: str) -> int:
        """Position of layer ``name``."""
        for index, layer in enumerate(self.layers):
            if layer.name == name:
                return index
        msg = f"Unknown layer {name!r}"
        raise ValidationError(msg)

    def required_size(self, names: cabc.Iterable[str]) -> int:
        """Smallest side that survives every pool up to the deepest of ``names``."""
        deepest = max((self.index_of(name) for name in names), default=-1)
        pools = sum(
            layer.kind is LayerKind.POOL for layer in self.layers[: deepest + 1]
        )
        return 2**pools

    def with_loss_layers(
        self, content: cabc.Sequence[str], style: cabc.Sequence[str]
    ) -> ConvNetSpec:
        """Copy of this net with different content and style layer sets."""
        return dc.replace(
            self, content_layers=tuple(content), style_layers=tuple(style)
        )


@dc.dataclass(frozen=True)
class SynthesisConfig:
    """Descent settings for ``synthesize``."""

    alpha: float = 1.0
    beta: float = 1000.0
    iters: int = 50
    step: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alpha < 0.0 or self.beta < 0.0:
            msg = f"alpha and beta must be non-negative; got {self.alpha}, {self.beta}"
            raise ValidationError(msg)
        if self.iters < 1:
            msg = f"iters must be at least 1; got {self.iters}"
            raise ValidationError(msg)
        if not self.step > 0.0:
            msg = f"step must be positive; got {self.step}"
            raise ValidationError(msg)


@dc.dataclass(frozen=True, eq=False)
class LossTerms:
    """Content and style terms, their weighted total, and d(total)/dx."""

    content: float
    style: float
    total: float
    gradient: np.ndarray


@dc.dataclass(frozen=True, eq=False)
class SynthesisResult:
    """Synthesised image and the loss at every iterate."""

    image: ImageTensor
    losses: tuple[float, ...]


def he_weights(
    rng: np.random.Generator, out_channels: int, in_channels: int
) -> ConvWeights:
    """He-normal 3x3 kernels with zero biases."""
    std = math.sqrt(2.0 / (9 * in_channels))
    kernel = rng.normal(0.0, std, size=(out_channels, in_channels, 3, 3))
    return kernel, np.zeros(out_channels)


def build_net(
    layers: cabc.Sequence[LayerSpec],
    *,
    seed: int = 0,
    content_layers: cabc.Sequence[str] = DEFAULT_CONTENT_LAYERS,
    style_layers: cabc.Sequence[str] = DEFAULT_STYLE_LAYERS,
    weights: cabc.Mapping[str, ConvWeights] | None = None,
) -> ConvNetSpec:
    """Assemble a net, drawing He-normal weights for layers not in ``weights``."""
    rng = seeded_rng(seed)
    resolved: dict[str, ConvWeights] = {}
    channels = 3
    for layer in layers:
        if layer.kind is LayerKind.POOL:
            continue
        out = typ.cast("int", layer.out_channels)
        drawn = he_weights(rng, out, channels)
        resolved[layer.name] = (weights or {}).get(layer.name, drawn)
        channels = out
    return ConvNetSpec(
        layers=tuple(layers),
        weights=resolved,
        content_layers=tuple(content_layers),
        style_layers=tuple(style_layers),
    )


def vgg19_layers(base_width: int = 8) -> tuple[LayerSpec, ...]:
    """The 16-convolution, 5-pool VGG-19 topology at width ``base_width``."""
    layers: list[LayerSpec] = []
    for block, (convs, multiplier) in enumerate(VGG19_BLOCKS, start=1):
        layers.extend(
            LayerSpec(f"conv{block}_{i}", LayerKind.CONV, base_width * multiplier)
            for i in range(1, convs + 1)
        )
        layers.append(LayerSpec(f"pool{block}", LayerKind.POOL))
    return tuple(layers)


def vgg19_spec(
    base_width: int = 8,
    seed: int = 0,
    *,
    content_layers: cabc.Sequence[str] = DEFAULT_CONTENT_LAYERS,
    style_layers: cabc.Sequence[str] = DEFAULT_STYLE_LAYERS,
    weights: cabc.Mapping[str, ConvWeights] | None = None,
) -> ConvNetSpec:
    """VGG-19-shaped net with seeded weights unless ``weights`` supplies them."""
    if base_width < 1:
        msg = f"base_width must be positive; got {base_width}"
        raise ValidationError(msg)
    return build_net(
        vgg19_layers(base_width),
        seed=seed,
        content_layers=content_layers,
        style_layers=style_layers,
        weights=weights,
    )


def _to_chw(image: ImageTensor | npt.ArrayLike) -> np.ndarray:
    pixels = image.pixels if isinstance(image, ImageTensor) else np.asarray(image)
    array = np.asarray(pixels, dtype=np.float64)
    if array.ndim != 3 or array.shape[2] != 3:  # noqa: PLR2004
        msg = f"Images must have shape (H, W, 3); got {array.shape}"
        raise DimensionMismatchError(msg)
    return np.ascontiguousarray(array.transpose(2, 0, 1))


def _forward(
    tape: GradTape,
    net: ConvNetSpec,
    x: Node | np.ndarray,
    wanted: cabc.Collection[str],
) -> dict[str, Node]:
    """Record the forward pass up to the deepest wanted layer."""
    height, width = x.shape[1:]
    need = net.required_size(wanted)
    if min(height, width) < need:
        msg = (
            f"Image of {height}x{width} is too small; "
            f"the requested layers need {need}"
        )
        raise ValidationError(msg)
    deepest = max((net.index_of(name) for name in wanted), default=-1)
    outputs: dict[str, Node] = {}
    current: Node | np.ndarray = x
    for layer in net.layers[: deepest + 1]:
        if layer.kind is LayerKind.POOL:
            current = tape.mean_pool(current)
        else:
            kernel, bias = net.weights[layer.name]
            current = tape.relu(tape.conv2d(current, kernel, bias))
        if layer.name in wanted:
            outputs[layer.name] = current
    return outputs


def extract_features(
    net: ConvNetSpec,
    image: ImageTensor | npt.ArrayLike,
    layers: cabc.Collection[str] | None = None,
) -> dict[str, np.ndarray]:
    """Return (C, H, W) feature maps for ``layers`` (default: every layer).

    Raises
    ------
    ValidationError
        If the image is smaller than the pooling depth of the requested
        layers allows.
    """
    wanted = set(layers) if layers is not None else {layer.name for layer in net.layers}
    tape = GradTape()
    nodes = _forward(tape, net, _to_chw(image), wanted)
    return {name: node.value for name, node in nodes.items()}


def gram(features: npt.ArrayLike) -> np.ndarray:
    """Gram matrix ``F F^T / (C * M)`` of a (C, H, W) or (C, M) map."""
    maps = np.asarray(features, dtype=np.float64)
    flat = maps.reshape(maps.shape[0], -1)
    return flat @ flat.T / float(flat.shape[0] * flat.shape[1])


class StyleTransferObjective:
    """Total loss against fixed content and style targets.

    Targets are computed once at construction; ``evaluate`` may then be called
    for many candidate images of the same size.
    """

    def __init__(  # noqa: PLR0913 - mirrors the weighted total-loss terms
        self,
        net: ConvNetSpec,
        content: ImageTensor | npt.ArrayLike,
        style: ImageTensor | npt.ArrayLike,
        alpha: float,
        beta: float,
    ) -> None:
        if alpha < 0.0 or beta < 0.0:
            msg = f"alpha and beta must be non-negative; got {alpha}, {beta}"
            raise ValidationError(msg)
        content_chw, style_chw = _to_chw(content), _to_chw(style)
        if content_chw.shape != style_chw.shape:
            msg = (
                f"Content {content_chw.shape} and style {style_chw.shape} "
                "images differ in size"
            )
            raise DimensionMismatchError(msg)
        self.net = net
        self.alpha = alpha
        self.beta = beta
        self.shape = content_chw.shape
        self._wanted = {*net.content_layers, *net.style_layers}
        content_maps = extract_features(
            net, content_chw.transpose(1, 2, 0), net.content_layers
        )
        style_maps = extract_features(
            net, style_chw.transpose(1, 2, 0), net.style_layers
        )
        self._content_targets = {
            name: content_maps[name] for name in net.content_layers
        }
        self._style_targets = {
            name: gram(style_maps[name]) for name in net.style_layers
        }

    def evaluate(self, x: ImageTensor | npt.ArrayLike) -> LossTerms:
        """Return the loss terms and the gradient with respect to ``x``."""
        chw = _to_chw(x)
        if chw.shape != self.shape:
            msg = f"Candidate {chw.shape} differs from the target size {self.shape}"
            raise DimensionMismatchError(msg)
        tape = GradTape()
        leaf = tape.watch(chw)
        maps = _forward(tape, self.net, leaf, self._wanted)

        content: Node | float = 0.0
        for name, target in self._content_targets.items():
            content = tape.add(content, tape.sum_squares(tape.sub(maps[name], target)))
        content = tape.scale(content, 0.5)

        style: Node | float = 0.0
        weight = 1.0 / max(len(self._style_targets), 1)
        for name, target in self._style_targets.items():
            style = tape.add(
                style, tape.sum_squares(tape.sub(tape.gram(maps[name]), target))
            )
        style = tape.scale(style, weight)

        total = tape.add(tape.scale(content, self.alpha), tape.scale(style, self.beta))
        (grad,) = tape.gradient(total, [leaf])
        return LossTerms(
            content=float(content.value),
            style=float(style.value),
            total=float(total.value),
            gradient=grad.transpose(1, 2, 0),
        )


def total_loss(  # noqa: PLR0913 - the loss is defined over these six inputs
    net: ConvNetSpec,
    x: ImageTensor | npt.ArrayLike,
    p: ImageTensor | npt.ArrayLike,
    a: ImageTensor | npt.ArrayLike,
    alpha: float,
    beta: float,
) -> tuple[float, np.ndarray]:
    """Return ``alpha * L_content + beta * L_style`` and its gradient in x."""
    terms = StyleTransferObjective(net, p, a, alpha, beta).evaluate(x)
    return terms.total, terms.gradient


def synthesize(
    net: ConvNetSpec,
    content: ImageTensor,
    style: ImageTensor,
    config: SynthesisConfig | None = None,
) -> SynthesisResult:
    """Descend from seeded white noise towards the content and style targets.

    Raises
    ------
    NonFiniteError
        If the loss becomes non-finite; the message names the iteration.
    """
    settings = config or SynthesisConfig()
    objective = StyleTransferObjective(
        net, content, style, settings.alpha, settings.beta
    )
    x = seeded_rng(settings.seed).uniform(0.0, 1.0, size=content.pixels.shape)
    losses: list[float] = []
    for iteration in range(settings.iters):
        terms = objective.evaluate(x)
        if not math.isfinite(terms.total) or not np.all(np.isfinite(terms.gradient)):
            msg = f"Style-transfer loss became non-finite at iteration {iteration}"
            raise NonFiniteError(msg)
        losses.append(terms.total)
        x = np.clip(x - settings.step * terms.gradient, 0.0, 1.0)
    final = objective.evaluate(x).total
    losses.append(final)
    logger.info(
        "Style transfer: %d iterations, loss %.6g -> %.6g",
        settings.iters,
        losses[0],
        final,
    )
    return SynthesisResult(image=ImageTensor(x), losses=tuple(losses))


def write_weights(path: Path, net: ConvNetSpec) -> Path:
    """Write every convolution's weights in the CBMW1 format."""
    chunks = [WEIGHT_MAGIC]
    for layer in net.layers:
        if layer.kind is LayerKind.POOL:
            continue
        kernel, bias = net.weights[layer.name]
        name = layer.name.encode("utf-8")
        chunks.extend(
            [
                struct.pack("<I", len(name)),
                name,
                struct.pack("<4I", *kernel.shape),
                kernel.astype("<f4").tobytes(),
                bias.astype("<f4").tobytes(),
            ]
        )
    path.write_bytes(b"".join(chunks))
    return path


def _unpack(fmt: str, data: bytes, offset: int, where: Path) -> tuple[int, ...]:
    try:
        return struct.unpack_from(fmt, data, offset)
    except struct.error as exc:
        msg = f"{where}: truncated weight record at byte {offset}"
        raise FormatError(msg) from exc


def read_weights(path: Path) -> dict[str, ConvWeights]:
    """Read a CBMW1 weight file into float64 arrays keyed by layer name."""
    if not path.exists():
        msg = f"Missing weight file: {path}"
        raise FileNotFoundError(msg)
    data = path.read_bytes()
    if not data.startswith(WEIGHT_MAGIC):
        msg = f"{path}: not a CBMW1 weight file"
        raise FormatError(msg)

    weights: dict[str, ConvWeights] = {}
    offset = len(WEIGHT_MAGIC)
    while offset < len(data):
        (length,) = _unpack("<I", data, offset, path)
        offset += 4
        name = data[offset : offset + length].decode("utf-8")
        offset += length
        dims = _unpack("<4I", data, offset, path)
        offset += 16
        kernel_count = math.prod(dims)
        needed = 4 * (kernel_count + dims[0])
        if offset + needed > len(data):
            msg = f"{path}: truncated weights for layer {name!r}"
            raise FormatError(msg)
        values = np.frombuffer(
            data, dtype="<f4", count=kernel_count + dims[0], offset=offset
        )
        offset += needed
        kernel = values[:kernel_count].astype(np.float64).reshape(dims)
        weights[name] = (kernel, values[kernel_count:].astype(np.float64))
    return weights


__all__ = [
    "DEFAULT_CONTENT_LAYERS",
    "DEFAULT_STYLE_LAYERS",
    "ConvNetSpec",
    "LayerKind",
    "LayerSpec",
    "LossTerms",
    "StyleTransferObjective",
    "SynthesisConfig",
    "SynthesisResult",
    "build_net",
    "extract_features",
    "gram",
    "read_weights",
    "synthesize",
    "total_loss",
    "vgg19_layers",
    "vgg19_spec",
    "write_weights",
]
