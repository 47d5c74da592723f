"""
Backbone architecture descriptions.

A BackboneSpec lists the tapped layers L_1..L_N (1-based, contiguous) plus
the input shape and class count. The classification head after L_N is not
a tapped layer. Every tap is reported as a (C, H, W) map; dense and pooled
layers use H = W = 1.
"""

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

from src.exceptions import ConfigError, ContractError

LAYER_KINDS = ("conv3x3", "gap", "dense")
DOWNSAMPLE_KINDS = ("none", "avg", "max")
ARCHITECTURES = ("smallcnn", "mlp")


@dataclass(frozen=True)
class LayerSpec:
    index: int
    kind: str
    width: int
    activation: str = "relu"
    downsample: str = "none"  # applied to the layer input

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BackboneSpec:
    arch: str
    input_shape: Tuple[int, ...]
    num_classes: int
    layers: Tuple[LayerSpec, ...]

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"Unknown backbone architecture '{self.arch}'")
        if len(self.layers) < 2:
            raise ContractError(f"A backbone needs at least 2 tapped layers, got {len(self.layers)}")
        indices = [layer.index for layer in self.layers]
        if indices != list(range(1, len(self.layers) + 1)):
            raise ContractError(f"Layer indices must be 1..N in order, got {indices}")
        if self.num_classes < 2:
            raise ContractError(f"num_classes must be at least 2, got {self.num_classes}")
        for layer in self.layers:
            if layer.kind not in LAYER_KINDS or layer.downsample not in DOWNSAMPLE_KINDS:
                raise ContractError(f"Invalid layer {layer}")
            if layer.width < 1:
                raise ContractError(f"Layer {layer.index} has width {layer.width}")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def tap_shapes(self) -> List[Tuple[int, int, int]]:
        """Declared (C_k, H_k, W_k) for every tap."""
        shapes = []
        if self.arch == "mlp":
            return [(layer.width, 1, 1) for layer in self.layers]
        _, h, w = self.input_shape
        for layer in self.layers:
            if layer.kind == "gap":
                shapes.append((shapes[-1][0], 1, 1))
                continue
            if layer.downsample != "none":
                h, w = h // 2, w // 2
            shapes.append((layer.width, h, w))
        return shapes

    def tap_channels(self) -> List[int]:
        return [shape[0] for shape in self.tap_shapes()]

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneSpec":
        return cls(
            arch=data["arch"],
            input_shape=tuple(int(v) for v in data["input_shape"]),
            num_classes=int(data["num_classes"]),
            layers=tuple(LayerSpec(**layer) for layer in data["layers"]),
        )


def smallcnn_spec(input_shape: Sequence[int], num_classes: int, widths: Sequence[int] = (8, 16, 32),
                  downsample: str = "avg") -> BackboneSpec:
    """conv -> down -> conv -> down -> conv -> global pool, each tapped."""
    input_shape = tuple(int(v) for v in input_shape)
    if len(input_shape) != 3:
        raise ConfigError(f"SmallCNN needs a (C, H, W) input shape, got {input_shape}")
    if downsample not in ("avg", "max"):
        raise ConfigError(f"downsample must be 'avg' or 'max', got '{downsample}'")
    if len(widths) < 1:
        raise ConfigError("SmallCNN needs at least one convolution width")
    min_side = 2 ** (len(widths) - 1)
    if input_shape[1] < min_side or input_shape[2] < min_side:
        raise ConfigError(f"Input {input_shape} too small for {len(widths)} convolution stages")
    layers = [
        LayerSpec(index=i + 1, kind="conv3x3", width=int(width), downsample="none" if i == 0 else downsample)
        for i, width in enumerate(widths)
    ]
    layers.append(LayerSpec(index=len(layers) + 1, kind="gap", width=int(widths[-1]), activation="none"))
    return BackboneSpec(arch="smallcnn", input_shape=input_shape, num_classes=num_classes, layers=tuple(layers))


def mlp_spec(input_shape: Sequence[int], num_classes: int, widths: Sequence[int] = (32, 32)) -> BackboneSpec:
    """Dense relu layers over the flattened input, each tapped."""
    layers = tuple(LayerSpec(index=i + 1, kind="dense", width=int(width)) for i, width in enumerate(widths))
    return BackboneSpec(arch="mlp", input_shape=tuple(int(v) for v in input_shape), num_classes=num_classes, layers=layers)


def build_spec(arch: str, sample_shape: Sequence[int], num_classes: int,
               widths: Optional[Sequence[int]] = None, downsample: str = "avg") -> BackboneSpec:
    if arch == "smallcnn":
        return smallcnn_spec(sample_shape, num_classes, widths or (8, 16, 32), downsample)
    if arch == "mlp":
        return mlp_spec(sample_shape, num_classes, widths or (32, 32))
    raise ConfigError(f"Unknown backbone architecture '{arch}'", details={"choices": list(ARCHITECTURES)})
