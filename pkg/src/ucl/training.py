"""Two-stage optimization: contrastive pretraining, then a probe on frozen features."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .augment import AugmentationPolicy, make_view_pair
from .autodiff import Tensor, backward, cross_entropy, no_grad
from .contrastive import nt_xent_loss
from .data import ImageSample, labels_of, prepare_image, stack_images
from .model import (
    ClassifierConfig,
    EncoderConfig,
    HeadConfig,
    ParamSet,
    classifier_forward,
    classifier_logits,
    encoder_forward,
    init_params,
    projection_forward,
)

log = logging.getLogger(__name__)

FEATURE_SOURCES = ("encoder", "projection_head")


@dataclass
class SgdConfig:
    lr: float = 5e-4
    step_size: int = 6
    descending_rate: float = 0.5
    batch_size: int = 40
    epochs: int = 20
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        # lr == 0 is allowed here (a frozen run); run configs demand lr > 0
        if self.lr < 0:
            raise ValueError(f"learning rate must be non-negative, got {self.lr}")
        if not 0 <= self.descending_rate < 1:
            raise ValueError(f"descending_rate must lie in [0, 1), got {self.descending_rate}")
        if self.step_size < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("step_size, epochs and batch_size must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be non-negative")

    def lr_at(self, epoch: int) -> float:
        return step_lr(self.lr, self.step_size, self.descending_rate, epoch)


def step_lr(initial_lr: float, step_size: int, descending_rate: float, epoch: int) -> float:
    """Learning rate after ``epoch // step_size`` decays by ``descending_rate``."""
    return initial_lr * (1.0 - descending_rate) ** (epoch // step_size)


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    wall_clock: float = 0.0
    seed: int = 0
    config_hash: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "lr"])
        for epoch, (loss, lr) in enumerate(zip(self.losses, self.lrs)):
            w.writerow([epoch, repr(float(loss)), repr(float(lr))])
        return buf.getvalue()


class Sgd:
    """Plain SGD with optional momentum and L2 weight decay."""

    def __init__(self, params: Sequence[Tensor], momentum: float = 0.0, weight_decay: float = 0.0):
        self.params = list(params)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity: dict[int, np.ndarray] = {}

    def step(self, lr: float) -> None:
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            if self.momentum:
                v = self._velocity.get(id(p))
                v = g.copy() if v is None else self.momentum * v + g
                self._velocity[id(p)] = v
                g = v
            p.data = p.data - p.data.dtype.type(lr) * g.astype(p.data.dtype)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def unlabeled_images(dataset: Sequence[ImageSample], size: int) -> list[np.ndarray]:
    """Prepared pixels only; the pretraining path never sees labels."""
    return [prepare_image(s, size) for s in dataset]


def view_batch(images: Sequence[np.ndarray], indices: Sequence[int], policy: AugmentationPolicy,
               seed: int, offset: int) -> np.ndarray:
    """[2N, 3, S, S]; rows 2k and 2k+1 are the two views of ``images[indices[k]]``."""
    views = []
    for idx in indices:
        xi, xj = make_view_pair(images[idx], policy, seed, offset + int(idx))
        views.append(xi)
        views.append(xj)
    return np.stack(views).transpose(0, 3, 1, 2).astype(np.float32)


def pretrain(dataset: Sequence[ImageSample], policy: AugmentationPolicy, encoder_config: EncoderConfig,
             sgd: SgdConfig, seed: int, head_config: Optional[HeadConfig] = None, tau: float = 0.5,
             denominator: str = "exclude_self", config_hash: str = "",
             init: Optional[ParamSet] = None) -> tuple[ParamSet, TrainReport]:
    """Contrastive training of encoder + projection head; returns both parameter sets merged."""
    if len(dataset) == 0:
        raise ValueError("pretraining needs a non-empty dataset")
    images = unlabeled_images(dataset, encoder_config.input_size)
    return pretrain_images(images, policy, encoder_config, sgd, seed, head_config, tau, denominator,
                           config_hash, init)


def pretrain_images(images: Sequence[np.ndarray], policy: AugmentationPolicy, encoder_config: EncoderConfig,
                    sgd: SgdConfig, seed: int, head_config: Optional[HeadConfig] = None, tau: float = 0.5,
                    denominator: str = "exclude_self", config_hash: str = "",
                    init: Optional[ParamSet] = None) -> tuple[ParamSet, TrainReport]:
    n = len(images)
    N = sgd.batch_size
    if N < 2:
        raise ValueError("pretraining batch size must be >= 2")
    if n < N:
        raise ValueError(f"dataset of {n} images is smaller than one batch of {N}")
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if policy.output_size != encoder_config.input_size:
        raise ValueError("augmentation output_size must match encoder input_size")
    head_config = head_config or HeadConfig(feature_dim=encoder_config.feature_dim)
    if head_config.feature_dim != encoder_config.feature_dim:
        raise ValueError("projection head input must match encoder feature_dim")

    if init is None:
        params = init_params(encoder_config, seed).merged(init_params(head_config, seed + 1))
    else:
        params = init.copy()
    opt = Sgd(params.parameters(), sgd.momentum, sgd.weight_decay)
    report = TrainReport(seed=seed, config_hash=config_hash)
    order_rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    for epoch in range(sgd.epochs):
        lr = sgd.lr_at(epoch)
        order = order_rng.permutation(n)
        batch_losses = []
        for b in range(n // N):  # incomplete last batch dropped
            idx = order[b * N:(b + 1) * N]
            x = view_batch(images, idx, policy, seed, offset=epoch * n)
            opt.zero_grad()
            z = projection_forward(encoder_forward(x, params, encoder_config, "train"), params)
            loss = nt_xent_loss(z, tau, denominator)
            backward(loss)
            opt.step(lr)
            batch_losses.append(float(loss.data))
        report.losses.append(float(np.mean(batch_losses)))
        report.lrs.append(lr)
        log.info("pretrain epoch %d lr %.3g loss %.4f", epoch, lr, report.losses[-1])
    report.wall_clock = time.perf_counter() - t0
    return params, report


def calibrate_batch_norm(params: ParamSet, encoder_config: EncoderConfig, dataset: Sequence[ImageSample],
                         batch_size: int = 40, seed: int = 0) -> ParamSet:
    """Fill running statistics with train-mode passes; weights stay untouched.

    Used for frozen, never-trained encoders, which have no running statistics yet.
    """
    params = params.copy()
    images = stack_images(dataset, encoder_config.input_size)
    order = np.random.default_rng(seed).permutation(len(images))
    with no_grad():
        for start in range(0, len(images) - batch_size + 1, batch_size):
            encoder_forward(images[order[start:start + batch_size]], params, encoder_config, "train")
    return params


def extract_features(params: ParamSet, encoder_config: EncoderConfig, dataset: Sequence[ImageSample],
                     source: str = "encoder", batch_size: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode features (or projection-head outputs) of un-augmented images, with labels."""
    if source not in FEATURE_SOURCES:
        raise ValueError(f"feature source must be one of {FEATURE_SOURCES}, got {source!r}")
    images = stack_images(dataset, encoder_config.input_size)
    chunks = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            f = encoder_forward(images[start:start + batch_size], params, encoder_config, "eval")
            if source == "projection_head":
                f = projection_forward(f, params)
            chunks.append(f.data.astype(np.float32))
    width = chunks[0].shape[1] if chunks else encoder_config.feature_dim
    feats = np.concatenate(chunks) if chunks else np.zeros((0, width), dtype=np.float32)
    return feats, labels_of(dataset)


def train_probe(features: np.ndarray, labels: np.ndarray, classifier_config: ClassifierConfig, sgd: SgdConfig,
                seed: int, config_hash: str = "", standardize: bool = True) -> tuple[ParamSet, TrainReport]:
    """Cross-entropy training of the probe classifier on fixed features.

    With ``standardize`` the per-dimension mean and standard deviation of the
    training features are stored as frozen tensors and applied to every input.
    """
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) != len(labels):
        raise ValueError("features must be [M, d] with one label per row")
    missing = [c for c in range(classifier_config.n_classes) if not np.any(labels == c)]
    if missing:
        raise ValueError(f"class(es) {missing} absent from the training labels")
    if features.shape[1] != classifier_config.input_dim:
        raise ValueError(f"features have width {features.shape[1]}, classifier expects {classifier_config.input_dim}")

    params = init_params(classifier_config, seed)
    if standardize:
        mean = features.mean(axis=0)
        std = features.std(axis=0) + np.float32(1e-6)
        params.tensors["cls.norm.mean"] = Tensor(mean, dtype=np.float32)
        params.tensors["cls.norm.std"] = Tensor(std, dtype=np.float32)
    opt = Sgd(params.parameters(), sgd.momentum, sgd.weight_decay)
    report = TrainReport(seed=seed, config_hash=config_hash)
    rng = np.random.default_rng(seed)
    M, B = len(features), sgd.batch_size
    t0 = time.perf_counter()
    for epoch in range(sgd.epochs):
        lr = sgd.lr_at(epoch)
        order = rng.permutation(M)
        total = 0.0
        for start in range(0, M, B):
            idx = order[start:start + B]
            opt.zero_grad()
            loss = cross_entropy(classifier_logits(features[idx], params, classifier_config), labels[idx])
            backward(loss)
            opt.step(lr)
            total += float(loss.data) * len(idx)
        report.losses.append(total / M)
        report.lrs.append(lr)
        if not math.isfinite(report.losses[-1]):
            raise FloatingPointError(f"probe loss diverged at epoch {epoch}")
    report.wall_clock = time.perf_counter() - t0
    return params, report


def predict_fake_proba(features: np.ndarray, params: ParamSet, classifier_config: ClassifierConfig) -> np.ndarray:
    with no_grad():
        return classifier_forward(np.asarray(features, dtype=np.float32), params, classifier_config).data[:, 1]
