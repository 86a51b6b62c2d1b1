"""Face-centered images: preprocessing, splitting, storage and a synthetic source.

The synthetic generator renders a smooth random background with a shaded
"face" ellipse and two eyes.  Fake samples additionally carry a forgery-like
artifact inside a central elliptical region; each domain uses one artifact
type, so training on one domain and testing on another mimics the
cross-dataset setting.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .augment import hsv_to_rgb, luma, resize_bilinear, rgb_to_hsv

LABELS = ("real", "fake")
ARTIFACTS = ("color_shift", "boundary_seam", "lowpass_patch")

class DataError(ValueError):
    pass


@dataclass
class ImageSample:
    pixels: np.ndarray  # [H, W, 3] float32 in [0, 1]
    label: str
    domain: str
    source_id: str
    bbox: Optional[tuple] = None  # (x, y, w, h)

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataError(f"label must be one of {LABELS}, got {self.label!r}")
        if not self.domain:
            raise DataError("domain tag is required")
        px = np.asarray(self.pixels)
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise DataError(f"{self.source_id}: pixels must lie in [0, 1]")

    @property
    def target(self) -> int:
        return LABELS.index(self.label)


@dataclass
class DomainSpec:
    name: str
    artifact: str = "color_shift"
    strength: float = 0.15
    n_real: int = 10
    n_fake: int = 10
    seed: int = 42
    image_size: int = 32
    background_contrast: float = 0.35
    background_grid: int = 4
    face_width: tuple = (0.26, 0.34)  # horizontal semi-axis, fraction of size
    face_height: tuple = (0.34, 0.42)
    skin_texture: float = 0.04
    photometric: float = 0.0  # per-image global brightness/contrast/saturation/hue spread

    def __post_init__(self):
        self.face_width = tuple(self.face_width)
        self.face_height = tuple(self.face_height)
        if self.artifact not in ARTIFACTS:
            raise DataError(f"artifact must be one of {ARTIFACTS}, got {self.artifact!r}")
        if self.strength < 0:
            raise DataError("strength must be non-negative")
        if self.n_real < 1 or self.n_fake < 1:
            raise DataError("need at least one sample per class")
        if self.image_size < 8:
            raise DataError("image_size must be >= 8")


@dataclass
class SplitSpec:
    test_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise DataError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")


# ---------------------------------------------------------------- preprocessing

def face_crop_box(frame_h: int, frame_w: int, bbox) -> tuple[int, int, int]:
    """(top, left, side) of the max-edge square around ``bbox``, shifted to fit."""
    x, y, w, h = (float(v) for v in bbox)
    if w <= 0 or h <= 0:
        raise DataError(f"bounding box has zero area: {tuple(bbox)}")
    if x >= frame_w or y >= frame_h or x + w <= 0 or y + h <= 0:
        raise DataError(f"bounding box {tuple(bbox)} lies outside the {frame_w}x{frame_h} frame")
    side = int(round(max(w, h)))
    side = min(side, frame_h, frame_w)
    cx, cy = x + w / 2, y + h / 2
    left = int(round(cx - side / 2))
    top = int(round(cy - side / 2))
    left = min(max(left, 0), frame_w - side)
    top = min(max(top, 0), frame_h - side)
    return top, left, side


def preprocess_face_crop(frame: np.ndarray, bbox, size: Optional[int] = None) -> np.ndarray:
    """Square crop of side ``max(w, h)`` centered on the box, resized to ``size``."""
    top, left, side = face_crop_box(frame.shape[0], frame.shape[1], bbox)
    crop = frame[top:top + side, left:left + side]
    return crop.copy() if size is None else resize_bilinear(crop, size)


def center_square(image: np.ndarray, size: int) -> np.ndarray:
    H, W = image.shape[:2]
    s = min(H, W)
    top, left = (H - s) // 2, (W - s) // 2
    return resize_bilinear(image[top:top + s, left:left + s], size)


def prepare_image(sample: ImageSample, size: int) -> np.ndarray:
    """Model-ready square image: face crop when a box is known, else center crop."""
    px = sample.pixels
    if px.shape[:2] == (size, size):
        return px
    if sample.bbox is not None:
        return preprocess_face_crop(px, sample.bbox, size)
    return center_square(px, size)


# ---------------------------------------------------------------- synthetic domains

def _sample_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))))


def _smooth_field(rng, size: int, grid: int, channels: int = 3) -> np.ndarray:
    coarse = rng.random((grid, grid, channels))
    return resize_bilinear(coarse, size)


def _render_base(spec: DomainSpec, index: int):
    """Background + face for sample ``index``; returns image and geometry."""
    rng = _sample_stream(spec.seed, index)
    S = spec.image_size
    yy, xx = np.mgrid[0:S, 0:S] + 0.5

    base = rng.random(3) * 0.6 + 0.2
    bg = base + spec.background_contrast * (_smooth_field(rng, S, spec.background_grid) - 0.5)

    cx = S / 2 + rng.uniform(-0.05, 0.05) * S
    cy = S / 2 + rng.uniform(-0.05, 0.05) * S
    a = rng.uniform(*spec.face_width) * S
    b = rng.uniform(*spec.face_height) * S
    r2 = ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2

    tone = rng.uniform(0.45, 0.9)
    skin = tone * np.array([1.0, rng.uniform(0.62, 0.85), rng.uniform(0.45, 0.72)])
    light = rng.uniform(-0.3, 0.3, size=2)  # directional light
    shade = 1.0 - 0.35 * r2 + 0.15 * (light[0] * (xx - cx) / a + light[1] * (yy - cy) / b)
    face = skin[None, None, :] * shade[..., None]
    face = face + spec.skin_texture * (rng.random((S, S, 1)) - 0.5)

    img = np.where((r2 <= 1.0)[..., None], face, bg)

    eye_dx = rng.uniform(0.32, 0.42) * a
    eye_y = cy - rng.uniform(0.18, 0.3) * b
    eye_r = max(0.9, 0.05 * S)
    eye_col = rng.uniform(0.0, 0.2)
    for ex in (cx - eye_dx, cx + eye_dx):
        eye = (xx - ex) ** 2 + (yy - eye_y) ** 2 <= eye_r ** 2
        img[eye] = eye_col

    mouth = (np.abs(yy - (cy + 0.5 * b)) < 0.6) & (np.abs(xx - cx) < 0.3 * a)
    img[mouth] = img[mouth] * 0.55

    if spec.photometric > 0:
        img = _photometric(np.clip(img, 0.0, 1.0), rng, spec.photometric)

    # central region where a forgery would be blended in
    ra, rb = 0.68 * a, 0.62 * b
    region_cy = cy + 0.05 * b
    region_r2 = ((xx - cx) / ra) ** 2 + ((yy - region_cy) / rb) ** 2
    # direction of the color_shift hue offset; drawn last so the base image is unaffected
    direction = 1.0 if rng.random() < 0.5 else -1.0
    geom = {"bbox": (cx - a, cy - b, 2 * a, 2 * b), "region_r2": region_r2, "region_axes": (ra, rb),
            "direction": direction}
    return np.clip(img, 0.0, 1.0), geom


def _photometric(img: np.ndarray, rng: np.random.Generator, spread: float) -> np.ndarray:
    """Whole-image camera-like color variation (drawn per sample)."""

    b, c, s, h = rng.uniform(-1, 1, size=4) * np.array([spread, spread, spread, spread / 4])
    img = img * (1 + b)
    m = luma(img).mean()
    img = m + (1 + c) * (img - m)
    y = luma(img)[..., None]
    img = np.clip(y + (1 + s) * (img - y), 0.0, 1.0)
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + h) % 1.0
    return hsv_to_rgb(hsv)


def _box_blur(img: np.ndarray, radius: int = 1) -> np.ndarray:
    k = 2 * radius + 1
    padded = np.pad(img, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    H, W = img.shape[:2]
    for i in range(k):
        for j in range(k):
            out += padded[i:i + H, j:j + W]
    return out / (k * k)


def apply_artifact(img: np.ndarray, geom: dict, artifact: str, strength: float) -> np.ndarray:
    """Insert a forgery artifact; pixels outside the central region are untouched."""
    r2 = geom["region_r2"]
    inside = r2 <= 1.0
    out = img.copy()
    if strength == 0:
        return out
    if artifact == "color_shift":
        # hue turned by +-strength (direction per sample), so only the inside/outside mismatch is a cue
        hsv = rgb_to_hsv(np.clip(img, 0.0, 1.0))
        hsv[..., 0] = np.where(inside, (hsv[..., 0] + geom["direction"] * strength) % 1.0, hsv[..., 0])
        out = hsv_to_rgb(hsv)
    elif artifact == "boundary_seam":
        # about one pixel thick just inside the boundary
        thick = 1.0 / min(geom["region_axes"])
        ring = inside & (np.sqrt(r2) >= 1.0 - thick)
        out[ring] = img[ring] + strength
    elif artifact == "lowpass_patch":
        s = min(float(strength), 1.0)
        blurred = _box_blur(img)
        out[inside] = (1 - s) * img[inside] + s * blurred[inside]
    else:
        raise DataError(f"unknown artifact {artifact!r}")
    return np.clip(out, 0.0, 1.0)


def quantize(img: np.ndarray) -> np.ndarray:
    return (np.round(np.clip(img, 0, 1) * 255) / 255).astype(np.float32)


def render_sample(spec: DomainSpec, index: int, fake: bool) -> ImageSample:
    img, geom = _render_base(spec, index)
    if fake:
        img = apply_artifact(img, geom, spec.artifact, spec.strength)
    label = "fake" if fake else "real"
    return ImageSample(quantize(img), label, spec.name, f"{spec.name}_{index:06d}_{label}",
                       tuple(round(float(v), 3) for v in geom["bbox"]))


def generate_synthetic_domain(spec: DomainSpec) -> list[ImageSample]:
    """``n_real`` real then ``n_fake`` fake samples, each from its own stream."""
    real = [render_sample(spec, i, fake=False) for i in range(spec.n_real)]
    fake = [render_sample(spec, spec.n_real + i, fake=True) for i in range(spec.n_fake)]
    return real + fake


REFERENCE_SPEC = DomainSpec(name="synthA", artifact="color_shift", strength=0.15,
                            n_real=10, n_fake=10, seed=42, image_size=32)


def pixel_checksum(samples: Iterable[ImageSample]) -> str:
    """SHA-256 over the concatenated 8-bit pixel bytes."""
    h = hashlib.sha256()
    for s in samples:
        h.update(to_uint8(s.pixels).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------- splitting

def split(samples: Sequence[ImageSample], spec: SplitSpec) -> tuple[list, list]:
    """Random train/test partition, drawn separately within each label."""
    rng = np.random.default_rng(spec.seed)
    test_idx: set[int] = set()
    for label in LABELS:
        idx = np.array([i for i, s in enumerate(samples) if s.label == label], dtype=np.int64)
        if idx.size == 0:
            continue
        n_test = int(round(spec.test_fraction * idx.size))
        test_idx.update(int(i) for i in rng.permutation(idx)[:n_test])
    train = [s for i, s in enumerate(samples) if i not in test_idx]
    test = [s for i, s in enumerate(samples) if i in test_idx]
    return train, test


# ---------------------------------------------------------------- storage

def to_uint8(pixels: np.ndarray) -> np.ndarray:
    return np.round(np.clip(pixels, 0, 1) * 255).astype(np.uint8)


def write_ppm(path: Path, pixels: np.ndarray) -> None:
    arr = to_uint8(pixels)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=-1)
    H, W = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{W} {H}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(arr).tobytes())


def read_ppm(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM (P6) file")
    W, H, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 is supported")
    pos += 1
    raw = np.frombuffer(data, dtype=np.uint8, count=H * W * 3, offset=pos)
    return (raw.reshape(H, W, 3).astype(np.float32) / 255).astype(np.float32)


def save_dataset(samples: Sequence[ImageSample], directory, extra_meta: Optional[dict] = None) -> None:
    """``<dir>/images/*.ppm`` plus ``<dir>/manifest.jsonl``."""
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        rel = f"images/{s.source_id}.ppm"
        write_ppm(root / rel, s.pixels)
        bbox = None if s.bbox is None else [float(v) for v in s.bbox]
        lines.append(json.dumps({"file": rel, "label": s.label, "domain": s.domain, "bbox": bbox}))
    (root / "manifest.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    if extra_meta is not None:
        (root / "meta.json").write_text(json.dumps(extra_meta, indent=2, sort_keys=True), encoding="utf-8")


def load_dataset(directory) -> list[ImageSample]:
    root = Path(directory)
    manifest = root / "manifest.jsonl"
    if not manifest.exists():
        if root.is_dir() and not any(root.iterdir()):
            return []
        raise FileNotFoundError(f"no manifest.jsonl in {root}")
    samples = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict) or set(rec) != {"file", "label", "domain", "bbox"}:
                raise ValueError("expected exactly the keys file, label, domain, bbox")
            if rec["label"] not in LABELS:
                raise ValueError(f"unknown label {rec['label']!r}")
            bbox = rec["bbox"]
            if bbox is not None and (not isinstance(bbox, list) or len(bbox) != 4):
                raise ValueError("bbox must be [x, y, w, h] or null")
        except ValueError as exc:
            raise DataError(f"{manifest}:{lineno}: malformed manifest line: {exc}") from None
        path = root / rec["file"]
        if not path.exists():
            raise FileNotFoundError(f"{manifest}:{lineno}: missing image file {path}")
        samples.append(ImageSample(read_ppm(path), rec["label"], rec["domain"], Path(rec["file"]).stem,
                                   None if bbox is None else tuple(bbox)))
    return samples


def stack_images(samples: Sequence[ImageSample], size: int) -> np.ndarray:
    """[M, 3, size, size] float32 batch of prepared images."""
    return np.stack([prepare_image(s, size).transpose(2, 0, 1) for s in samples]).astype(np.float32)


def labels_of(samples: Sequence[ImageSample]) -> np.ndarray:
    return np.array([s.target for s in samples], dtype=np.int64)
