"""Network configuration types and the shipped presets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

from ..errors import ConfigError

MODALITIES = ("depth", "audio", "rss", "rgb")
ACTIVATIONS = ("leaky_relu", "sigmoid", "tanh", "linear")


@dataclass(frozen=True)
class ConvLayer:
    filters: int
    kernel: int = 3
    activation: str = "leaky_relu"
    kind: str = field(default="conv", init=False)


@dataclass(frozen=True)
class PoolLayer:
    h: int
    w: int
    global_pool: bool = False
    kind: str = field(default="pool", init=False)


def conv(filters, kernel=3, activation="leaky_relu"):
    return ConvLayer(int(filters), int(kernel), activation)


def pool(h, w=None):
    return PoolLayer(int(h), int(h if w is None else w))


def global_pool():
    return PoolLayer(0, 0, True)


@dataclass(frozen=True)
class TraceEntry:
    """One layer with the shape it produces."""

    name: str
    layer: object
    in_shape: tuple
    out_shape: tuple


@dataclass(frozen=True)
class ModalityConvSpec:
    """A fully convolutional branch: input shape, ordered layers, output length."""

    input_shape: tuple
    layers: tuple
    output_length: int

    def layer_names(self):
        names, nc, np_ = [], 0, 0
        for layer in self.layers:
            if layer.kind == "conv":
                nc += 1
                names.append(f"conv{nc}")
            else:
                np_ += 1
                names.append(f"pool{np_}")
        return names

    def trace(self, modality="branch"):
        """Walk the layer list, checking every shape rule on the way."""
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigError(f"input shape must be (H, W, C), got {self.input_shape}", layer=f"{modality}.input")
        h, w, c = (int(v) for v in self.input_shape)
        out = []
        for name, layer in zip(self.layer_names(), self.layers):
            qual = f"{modality}.{name}"
            before = (h, w, c)
            if layer.kind == "conv":
                if layer.kernel < 1 or layer.kernel % 2 == 0:
                    raise ConfigError(f"kernel must be odd, got {layer.kernel}", layer=qual)
                if layer.filters < 1:
                    raise ConfigError("filter count must be positive", layer=qual)
                if layer.activation not in ACTIVATIONS:
                    raise ConfigError(f"unknown activation {layer.activation!r}", layer=qual)
                c = layer.filters
            else:
                ph, pw = (h, w) if layer.global_pool else (layer.h, layer.w)
                if ph < 1 or pw < 1 or h % ph or w % pw:
                    raise ConfigError(f"pool {ph}x{pw} does not divide extent {h}x{w}", layer=qual)
                h, w = h // ph, w // pw
            out.append(TraceEntry(qual, layer, before, (h, w, c)))
        if not out or out[-1].layer.kind != "conv":
            raise ConfigError("a branch must end with a convolution", layer=f"{modality}.output")
        if (h, w) != (1, 1):
            raise ConfigError(f"final spatial extent is {h}x{w}, not 1x1", layer=out[-1].name)
        if c != self.output_length:
            raise ConfigError(
                f"final conv has {c} filters but the declared output length is {self.output_length}",
                layer=out[-1].name,
            )
        return out

    def to_dict(self):
        return {
            "input_shape": list(self.input_shape),
            "output_length": self.output_length,
            "layers": [
                {"conv": [l.filters, l.kernel, l.activation]}
                if l.kind == "conv"
                else {"pool": "global" if l.global_pool else [l.h, l.w]}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d):
        layers = []
        for item in d["layers"]:
            if "conv" in item:
                layers.append(conv(*item["conv"]))
            elif item["pool"] == "global":
                layers.append(global_pool())
            else:
                layers.append(pool(*item["pool"]))
        return cls(tuple(d["input_shape"]), tuple(layers), int(d["output_length"]))


@dataclass(frozen=True)
class NetworkConfig:
    """Everything needed to build a recognizer.

    ``fusion_width`` is None for single-branch networks, in which case the
    level-1 LSTM feeds the level-2 LSTM directly.
    """

    branches: dict
    lstm1_sizes: dict
    fusion_width: Optional[int]
    lstm2_width: int
    n_activities: int
    threshold: float = 0.5
    leaky_alpha: float = 0.01
    dropout_rate: float = 0.5
    name: str = "custom"

    @property
    def modalities(self):
        return tuple(self.branches)

    def validate(self):
        if not self.branches:
            raise ConfigError("at least one modality must be enabled")
        for m in self.branches:
            if m not in MODALITIES:
                raise ConfigError(f"unknown modality {m!r}; expected one of {MODALITIES}")
        if set(self.lstm1_sizes) != set(self.branches):
            raise ConfigError("level-1 LSTM sizes must be given for exactly the enabled modalities")
        for m, spec in self.branches.items():
            spec.trace(m)
            if self.lstm1_sizes[m] < 1:
                raise ConfigError("LSTM width must be positive", layer=f"lstm1.{m}")
        if self.fusion_width is None:
            if len(self.branches) != 1:
                raise ConfigError("multi-branch networks need a fusion layer", layer="fusion")
        else:
            if self.fusion_width < 2:
                raise ConfigError("fusion width must be at least 2", layer="fusion")
            if self.lstm2_width * 2 != self.fusion_width:
                raise ConfigError(
                    f"level-2 width {self.lstm2_width} is not half the fusion width {self.fusion_width}",
                    layer="lstm2",
                )
        if self.lstm2_width < 1:
            raise ConfigError("LSTM width must be positive", layer="lstm2")
        if self.n_activities < 1:
            raise ConfigError("activity count must be positive", layer="coding")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)", layer="threshold")
        if not 0.0 < self.leaky_alpha < 1.0:
            raise ConfigError("leaky_relu alpha must lie in (0, 1)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout rate must lie in [0, 1)", layer="fusion")
        return self

    def with_activities(self, n):
        return replace(self, n_activities=int(n))

    def to_dict(self):
        d = asdict(self)
        d["branches"] = {m: s.to_dict() for m, s in self.branches.items()}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = preset(d.pop("preset")) if "preset" in d else None
        if base is not None:
            merged = base.to_dict()
            merged.update(d)
            d = merged
        branches = {m: ModalityConvSpec.from_dict(s) for m, s in d.pop("branches").items()}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown network config keys: {sorted(unknown)}")
        return cls(branches=branches, **d).validate()

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def __eq__(self, other):
        return isinstance(other, NetworkConfig) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


# -- presets ------------------------------------------------------------------------


def _head(filters_pools, last_filters, last_act="sigmoid"):
    layers = []
    for f, p in filters_pools:
        layers.append(conv(f))
        layers.append(p if isinstance(p, PoolLayer) else pool(*p) if isinstance(p, tuple) else pool(p))
    layers.append(conv(last_filters, 1, last_act))
    return tuple(layers)


def depth_branch(channels=1, size=256):
    return ModalityConvSpec(
        (size, size, channels),
        _head([(32, 2), (64, 2), (128, 2), (256, 2), (512, 4), (1024, 4)], 1024),
        1024,
    )


def audio_branch():
    return ModalityConvSpec((64, 64, 1), _head([(32, 2), (64, 2), (128, 4), (256, 4)], 512), 512)


def rss_branch(objects=25):
    return ModalityConvSpec(
        (36, 48, objects),
        _head([(32, (2, 2)), (64, (2, 2)), (128, (3, 4)), (256, global_pool())], 512),
        512,
    )


def trauma35():
    return NetworkConfig(
        branches={"depth": depth_branch(), "audio": audio_branch(), "rss": rss_branch()},
        lstm1_sizes={"depth": 512, "audio": 256, "rss": 256},
        fusion_width=512,
        lstm2_width=256,
        n_activities=35,
        name="trauma35",
    )


def _rgb_single(n, name):
    return NetworkConfig(
        branches={"rgb": depth_branch(channels=3)},
        lstm1_sizes={"rgb": 512},
        fusion_width=None,
        lstm2_width=256,
        n_activities=n,
        name=name,
    )


def charades157():
    return _rgb_single(157, "charades157")


def olympic16():
    return _rgb_single(16, "olympic16")


def mnist_composite(n_activities=10):
    """Scaled depth-style branch for 2 x 3 grids of 28 x 28 tiles (56 x 84 x 1)."""
    spec = ModalityConvSpec(
        (56, 84, 1),
        _head([(16, (2, 2)), (32, (2, 2)), (64, (2, 3)), (128, (7, 7))], 128),
        128,
    )
    return NetworkConfig(
        branches={"depth": spec},
        lstm1_sizes={"depth": 128},
        fusion_width=None,
        lstm2_width=64,
        n_activities=n_activities,
        dropout_rate=0.0,
        name="mnist_composite",
    )


def cifar_composite(n_activities=10):
    """RGB branch for 2 x 3 grids of 32 x 32 tiles (64 x 96 x 3)."""
    spec = ModalityConvSpec(
        (64, 96, 3),
        _head([(16, (2, 2)), (32, (2, 2)), (64, (2, 2)), (128, (2, 3)), (128, global_pool())], 128),
        128,
    )
    return NetworkConfig(
        branches={"rgb": spec},
        lstm1_sizes={"rgb": 128},
        fusion_width=None,
        lstm2_width=64,
        n_activities=n_activities,
        dropout_rate=0.0,
        name="cifar_composite",
    )


def desk_multimodal(n_activities=8, objects=25):
    """Three-branch network small enough to train on a laptop CPU."""
    return NetworkConfig(
        branches={
            "depth": ModalityConvSpec((32, 32, 1), _head([(8, 2), (16, 2), (16, 2), (32, 4)], 32), 32),
            "audio": ModalityConvSpec((16, 16, 1), _head([(8, 2), (16, 2), (16, 4)], 16), 16),
            "rss": ModalityConvSpec(
                (36, 48, objects),
                _head([(8, (2, 2)), (16, (2, 2)), (16, (3, 4)), (16, global_pool())], 16),
                16,
            ),
        },
        lstm1_sizes={"depth": 32, "audio": 16, "rss": 16},
        fusion_width=32,
        lstm2_width=16,
        n_activities=n_activities,
        dropout_rate=0.0,
        name="desk_multimodal",
    )


def gradcheck_tiny():
    """Same topology as the full multimodal network, a few units per layer."""
    return NetworkConfig(
        branches={
            "depth": ModalityConvSpec((8, 8, 1), _head([(2, 2), (3, 4)], 4), 4),
            "audio": ModalityConvSpec((4, 4, 1), _head([(2, 4)], 3), 3),
            "rss": ModalityConvSpec((6, 12, 3), _head([(2, (2, 4)), (3, global_pool())], 3), 3),
        },
        lstm1_sizes={"depth": 3, "audio": 2, "rss": 2},
        fusion_width=4,
        lstm2_width=2,
        n_activities=3,
        dropout_rate=0.0,
        name="gradcheck_tiny",
    )


PRESETS = {
    "trauma35": trauma35,
    "charades157": charades157,
    "olympic16": olympic16,
    "mnist_composite": mnist_composite,
    "cifar_composite": cifar_composite,
    "desk_multimodal": desk_multimodal,
    "gradcheck_tiny": gradcheck_tiny,
}


def preset(name):
    try:
        return PRESETS[name]().validate()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def load_config(path):
    """Read a JSON network config; ``{"preset": name, ...}`` overrides a preset."""
    with open(path) as fh:
        return NetworkConfig.from_dict(json.load(fh))
