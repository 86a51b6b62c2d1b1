"""Encoder, projection head and probe classifier.

Parameters live in a :class:`ParamSet`: named tensors plus the running
statistics of every batch-norm layer.  Networks are plain functions of
``(input, params)``.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from typing import Iterator, Union

import numpy as np

from .autodiff import (
    BatchNormState,
    Tensor,
    as_tensor,
    batch_norm2d,
    conv2d,
    depthwise_separable_conv2d,
    global_avg_pool2d,
    leaky_relu,
    linear,
    max_pool2d,
    relu,
    softmax,
)

LEAKY_SLOPE = 0.4


@dataclass
class EncoderConfig:
    input_size: int = 32
    stem_channels: int = 16
    widths: tuple = (32, 64, 128)
    feature_dim: int = 128
    kernel_size: int = 3
    stem_stride: int = 2
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if not self.widths:
            raise ValueError("encoder.widths must list at least one block")
        if self.feature_dim != self.widths[-1]:
            raise ValueError(f"encoder.feature_dim ({self.feature_dim}) must equal the last block width "
                             f"({self.widths[-1]})")
        if self.input_size < self.stem_stride * 2 ** len(self.widths):
            raise ValueError("encoder.input_size too small for the number of downsampling blocks")
        if self.stem_channels < 1 or min(self.widths) < 1:
            raise ValueError("encoder channel counts must be positive")

    @classmethod
    def paper(cls) -> "EncoderConfig":
        """Xception-sized feature width (not meant for CPU training)."""
        return cls(input_size=64, stem_channels=32, widths=(128, 256, 728, 2048), feature_dim=2048)


@dataclass
class HeadConfig:
    feature_dim: int = 128
    hidden_dim: int = 128
    proj_dim: int = 64

    def __post_init__(self):
        if self.proj_dim >= self.feature_dim:
            raise ValueError(f"projection dim {self.proj_dim} must be smaller than feature dim {self.feature_dim}")

    @classmethod
    def paper(cls) -> "HeadConfig":
        return cls(feature_dim=2048, hidden_dim=2048, proj_dim=64)


PAPER_CLASSIFIER_WIDTHS = (2048, 4096, 2048, 256)


@dataclass
class ClassifierConfig:
    input_dim: int = 128
    widths: tuple = tuple(w // 16 for w in PAPER_CLASSIFIER_WIDTHS)
    negative_slope: float = LEAKY_SLOPE
    n_classes: int = 2

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) != 4 or min(self.widths) < 1:
            raise ValueError("classifier.widths must list four positive layer widths")
        if self.negative_slope != LEAKY_SLOPE:
            raise ValueError(f"classifier negative slope is fixed at {LEAKY_SLOPE}")

    @classmethod
    def paper(cls, input_dim: int = 2048) -> "ClassifierConfig":
        return cls(input_dim=input_dim, widths=PAPER_CLASSIFIER_WIDTHS)


Config = Union[EncoderConfig, HeadConfig, ClassifierConfig]


@dataclass
class ParamSet:
    tensors: dict = field(default_factory=dict)  # name -> Tensor
    bn: dict = field(default_factory=dict)  # layer name -> BatchNormState

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def parameters(self) -> list[Tensor]:
        """Trainable tensors (frozen buffers such as input statistics excluded)."""
        return [t for t in self.tensors.values() if t.requires_grad]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def merged(self, other: "ParamSet") -> "ParamSet":
        return ParamSet({**self.tensors, **other.tensors}, {**self.bn, **other.bn})

    def subset(self, prefix: str) -> "ParamSet":
        return ParamSet({k: v for k, v in self.tensors.items() if k.startswith(prefix)},
                        {k: v for k, v in self.bn.items() if k.startswith(prefix)})

    def copy(self) -> "ParamSet":
        tensors = {k: Tensor(v.data, requires_grad=v.requires_grad, dtype=v.dtype) for k, v in self.tensors.items()}
        return ParamSet(tensors, copy.deepcopy(self.bn))

    def arrays(self) -> dict[str, np.ndarray]:
        """Every stored array, batch-norm running statistics included."""
        out = {k: v.data for k, v in self.tensors.items()}
        for name, st in self.bn.items():
            out[f"{name}.running_mean"] = st.running_mean
            out[f"{name}.running_var"] = st.running_var
        return out

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())


def _kaiming(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32), requires_grad=True, dtype=np.float32)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True, dtype=np.float32)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True, dtype=np.float32)


def init_params(config: Config, seed: int) -> ParamSet:
    """Kaiming-uniform weights, zero biases, unit batch-norm scale."""
    rng = np.random.default_rng(seed)
    p = ParamSet()
    if isinstance(config, EncoderConfig):
        k = config.kernel_size
        p.tensors["enc.stem.weight"] = _kaiming(rng, (config.stem_channels, 3, k, k), 3 * k * k)
        _add_bn(p, "enc.stem.bn", config.stem_channels, config)
        c_in = config.stem_channels
        for i, c_out in enumerate(config.widths):
            p.tensors[f"enc.block{i}.dw"] = _kaiming(rng, (c_in, 1, k, k), k * k)
            p.tensors[f"enc.block{i}.pw"] = _kaiming(rng, (c_out, c_in, 1, 1), c_in)
            _add_bn(p, f"enc.block{i}.bn", c_out, config)
            c_in = c_out
    elif isinstance(config, HeadConfig):
        p.tensors["head.w1"] = _kaiming(rng, (config.feature_dim, config.hidden_dim), config.feature_dim)
        p.tensors["head.b1"] = _zeros(config.hidden_dim)
        p.tensors["head.w2"] = _kaiming(rng, (config.hidden_dim, config.proj_dim), config.hidden_dim)
        p.tensors["head.b2"] = _zeros(config.proj_dim)
    elif isinstance(config, ClassifierConfig):
        fan_in = config.input_dim
        for i, width in enumerate(config.widths, start=1):
            p.tensors[f"cls.fc{i}.weight"] = _kaiming(rng, (fan_in, width), fan_in)
            p.tensors[f"cls.fc{i}.bias"] = _zeros(width)
            fan_in = width
        p.tensors["cls.out.weight"] = _kaiming(rng, (fan_in, config.n_classes), fan_in)
        p.tensors["cls.out.bias"] = _zeros(config.n_classes)
    else:
        raise TypeError(f"unknown config type {type(config).__name__}")
    return p


def _add_bn(p: ParamSet, name: str, channels: int, config: EncoderConfig) -> None:
    p.tensors[f"{name}.gamma"] = _ones(channels)
    p.tensors[f"{name}.beta"] = _zeros(channels)
    p.bn[name] = BatchNormState(channels, momentum=config.bn_momentum, eps=config.bn_eps)


def _bn(x, p: ParamSet, name: str, mode: str) -> Tensor:
    return batch_norm2d(x, p[f"{name}.gamma"], p[f"{name}.beta"], p.bn[name], mode)


def encoder_forward(batch, params: ParamSet, config: EncoderConfig, mode: str = "eval") -> Tensor:
    """[B, 3, S, S] images -> [B, feature_dim] features.

    strided stem conv -> (separable conv, BN, ReLU, 2x2 max-pool) per block -> global
    average pool.
    """
    x = as_tensor(batch)
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"encoder expects [B, 3, H, W] RGB batches, got {x.shape}")
    S = config.input_size
    if x.shape[2:] != (S, S):
        raise ValueError(f"encoder expects {S}x{S} inputs, got {x.shape[2]}x{x.shape[3]}")
    pad = config.kernel_size // 2
    h = relu(_bn(conv2d(x, params["enc.stem.weight"], config.stem_stride, pad), params, "enc.stem.bn", mode))
    for i in range(len(config.widths)):
        h = depthwise_separable_conv2d(h, params[f"enc.block{i}.dw"], params[f"enc.block{i}.pw"], 1, pad)
        h = relu(_bn(h, params, f"enc.block{i}.bn", mode))
        h = max_pool2d(h, 2, 2)
    return global_avg_pool2d(h)


def projection_forward(f, params: ParamSet) -> Tensor:
    """z = W2 relu(W1 f + b1) + b2"""
    hidden = relu(linear(f, params["head.w1"], params["head.b1"]))
    return linear(hidden, params["head.w2"], params["head.b2"])


def classifier_logits(f, params: ParamSet, config: ClassifierConfig) -> Tensor:
    f = as_tensor(f)
    w1 = params["cls.fc1.weight"]
    if f.ndim != 2 or f.shape[1] != w1.shape[0]:
        raise ValueError(f"classifier expects [B, {w1.shape[0]}] features, got {f.shape}")
    h = f
    if "cls.norm.mean" in params.tensors:
        h = (h - params["cls.norm.mean"]) / params["cls.norm.std"]
    for i in range(1, len(config.widths) + 1):
        h = linear(h, params[f"cls.fc{i}.weight"], params[f"cls.fc{i}.bias"])
    h = leaky_relu(h, config.negative_slope)
    return linear(h, params["cls.out.weight"], params["cls.out.bias"])


def classifier_forward(f, params: ParamSet, config: ClassifierConfig) -> Tensor:
    """Class probabilities [B, 2]; column 1 is the probability of "fake"."""
    return softmax(classifier_logits(f, params, config), axis=1)


def config_dict(config: Config) -> dict:
    d = asdict(config)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d
