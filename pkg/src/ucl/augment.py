"""Stochastic view generation for contrastive pretraining.

Images are float arrays in [0, 1], laid out [H, W, 3] (single-channel
[H, W] is accepted where a transform makes sense for it).  Randomness comes
from per-(seed, sample, view, transform) streams so every view is a pure
function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

LUMA = np.array([0.299, 0.587, 0.114])

# transform ids used as the last component of the stream key
_CROP, _FLIP, _JITTER, _GRAY = range(4)


def stream(seed: int, sample_index: int, view_index: int, transform: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, sample, view, transform) tuple."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(sample_index), int(view_index), int(transform)))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class AugmentationPolicy:
    crop_enabled: bool = True
    crop_area: tuple = (0.5, 1.0)
    output_size: int = 32
    flip_enabled: bool = True
    flip_p: float = 0.5
    jitter_enabled: bool = True
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.4
    hue: float = 0.1
    jitter_p: float = 0.8
    grayscale_enabled: bool = True
    grayscale_p: float = 0.2

    def __post_init__(self):
        self.crop_area = tuple(float(a) for a in self.crop_area)
        self.validate()

    def validate(self) -> None:
        if not (self.crop_enabled or self.flip_enabled or self.jitter_enabled or self.grayscale_enabled):
            raise ValueError("augmentation policy must enable at least one transform")
        for name in ("flip_p", "jitter_p", "grayscale_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"augmentation.{name} must lie in [0, 1], got {p}")
        lo, hi = self.crop_area
        if not (0 < lo <= hi <= 1):
            raise ValueError(f"augmentation.crop_area must satisfy 0 < lo <= hi <= 1, got {self.crop_area}")
        if self.output_size < 2:
            raise ValueError("augmentation.output_size must be >= 2")
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) < 0:
                raise ValueError(f"augmentation.{name} must be non-negative")
        if not 0 <= self.hue <= 0.5:
            raise ValueError("augmentation.hue must lie in [0, 0.5]")

    @classmethod
    def from_names(cls, names, **kwargs) -> "AugmentationPolicy":
        """Policy enabling exactly the named transforms (crop, flip, jitter, grayscale)."""
        names = set(names)
        unknown = names - {"crop", "flip", "jitter", "grayscale"}
        if unknown:
            raise ValueError(f"unknown transforms {sorted(unknown)}")
        return cls(crop_enabled="crop" in names, flip_enabled="flip" in names,
                   jitter_enabled="jitter" in names, grayscale_enabled="grayscale" in names, **kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["crop_area"] = list(self.crop_area)
        return d


# augmentation rows of the ablation grid
ABLATION_ROWS = {
    "crop": ("crop",),
    "crop+flip": ("crop", "flip"),
    "crop+flip+jitter+grayscale": ("crop", "flip", "jitter", "grayscale"),
}


def resize_bilinear(image: np.ndarray, out_h: int, out_w: Optional[int] = None) -> np.ndarray:
    """Bilinear resize with half-pixel centers and edge clamping."""
    out_w = out_h if out_w is None else out_w
    H, W = image.shape[:2]
    if (H, W) == (out_h, out_w):
        return image.copy()

    def axis(n_in, n_out):
        c = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        c = np.clip(c, 0, n_in - 1)
        i0 = np.floor(c).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, (c - i0)

    y0, y1, wy = axis(H, out_h)
    x0, x1, wx = axis(W, out_w)
    img = image.astype(np.float64)
    if img.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(image.dtype)


def sample_crop_box(rng: np.random.Generator, height: int, width: int, area_range=(0.5, 1.0),
                    ratio=(3 / 4, 4 / 3), attempts: int = 10) -> tuple[int, int, int, int]:
    """(top, left, h, w) of a random sub-rectangle; falls back to a centered crop."""
    area = height * width
    log_r = (math.log(ratio[0]), math.log(ratio[1]))
    for _ in range(attempts):
        target = area * rng.uniform(area_range[0], area_range[1])
        aspect = math.exp(rng.uniform(*log_r))
        w = int(round(math.sqrt(target * aspect)))
        h = int(round(math.sqrt(target / aspect)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w
    in_ratio = width / height
    if in_ratio < ratio[0]:
        w, h = width, int(round(width / ratio[0]))
    elif in_ratio > ratio[1]:
        h, w = height, int(round(height * ratio[1]))
    else:
        h, w = height, width
    return (height - h) // 2, (width - w) // 2, h, w


def random_resized_crop(image: np.ndarray, rng: np.random.Generator, area_range=(0.5, 1.0),
                        output_size: int = 32, ratio=(3 / 4, 4 / 3)) -> np.ndarray:
    H, W = image.shape[:2]
    if H < 2 or W < 2:
        raise ValueError(f"degenerate image of extent {H}x{W}")
    top, left, h, w = sample_crop_box(rng, H, W, area_range, ratio)
    return resize_bilinear(image[top:top + h, left:left + w], output_size)


def random_horizontal_flip(image: np.ndarray, rng: np.random.Generator, p: float = 0.5) -> np.ndarray:
    if rng.random() < p:
        return image[:, ::-1].copy()
    return image.copy()


def luma(image: np.ndarray) -> np.ndarray:
    return image[..., :3] @ LUMA.astype(image.dtype)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1), 0)
    safe = np.where(delta > 0, delta, 1)
    rc, gc, bc = (maxc - r) / safe, (maxc - g) / safe, (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    i = i.astype(np.int64) % 6
    choices = [np.stack(c, axis=-1) for c in ((v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q))]
    out = np.zeros(hsv.shape, dtype=hsv.dtype)
    for k, c in enumerate(choices):
        out = np.where((i == k)[..., None], c, out)
    return out


@dataclass
class JitterDeltas:
    brightness: float = 0.0
    contrast: float = 0.0
    saturation: float = 0.0
    hue: float = 0.0


def sample_jitter_deltas(rng: np.random.Generator, policy: AugmentationPolicy) -> JitterDeltas:
    return JitterDeltas(
        brightness=float(rng.uniform(-policy.brightness, policy.brightness)),
        contrast=float(rng.uniform(-policy.contrast, policy.contrast)),
        saturation=float(rng.uniform(-policy.saturation, policy.saturation)),
        hue=float(rng.uniform(-policy.hue, policy.hue)),
    )


def color_jitter(image: np.ndarray, rng: np.random.Generator, deltas: JitterDeltas, p: float = 0.8) -> np.ndarray:
    """Brightness, contrast, saturation and hue adjustments in a random order.

    Applied with probability ``p``; each adjustment clamps to [0, 1].
    """
    apply = rng.random() < p
    order = rng.permutation(4)
    if not apply:
        return image.copy()
    img = image.astype(np.float64)
    for k in order:
        if k == 0 and deltas.brightness:
            img = img * (1.0 + deltas.brightness)
        elif k == 1 and deltas.contrast:
            m = luma(img).mean()
            img = m + (1.0 + deltas.contrast) * (img - m)
        elif k == 2 and deltas.saturation:
            y = luma(img)[..., None]
            img = y + (1.0 + deltas.saturation) * (img - y)
        elif k == 3 and deltas.hue:
            hsv = rgb_to_hsv(img)
            hsv[..., 0] = (hsv[..., 0] + deltas.hue) % 1.0
            img = hsv_to_rgb(hsv)
        else:
            continue
        img = np.clip(img, 0.0, 1.0)
    return img.astype(image.dtype)


def random_grayscale(image: np.ndarray, rng: np.random.Generator, p: float = 0.2) -> np.ndarray:
    if rng.random() < p:
        y = luma(image.astype(np.float64))
        return np.repeat(y[..., None], 3, axis=-1).astype(image.dtype)
    return image.copy()


def augment_view(image: np.ndarray, policy: AugmentationPolicy, seed: int, sample_index: int,
                 view_index: int) -> np.ndarray:
    """One stochastic view: crop -> flip -> jitter -> grayscale."""
    img = np.asarray(image, dtype=np.float32)
    if policy.crop_enabled:
        img = random_resized_crop(img, stream(seed, sample_index, view_index, _CROP),
                                  policy.crop_area, policy.output_size)
    else:
        img = resize_bilinear(img, policy.output_size)
    if policy.flip_enabled:
        img = random_horizontal_flip(img, stream(seed, sample_index, view_index, _FLIP), policy.flip_p)
    if policy.jitter_enabled:
        rng = stream(seed, sample_index, view_index, _JITTER)
        img = color_jitter(img, rng, sample_jitter_deltas(rng, policy), policy.jitter_p)
    if policy.grayscale_enabled:
        img = random_grayscale(img, stream(seed, sample_index, view_index, _GRAY), policy.grayscale_p)
    return np.clip(img, 0.0, 1.0)


def make_view_pair(image: np.ndarray, policy: AugmentationPolicy, seed: int, sample_index: int):
    """The two independently augmented views (x_i, x_j) of one image."""
    return (augment_view(image, policy, seed, sample_index, 0),
            augment_view(image, policy, seed, sample_index, 1))
