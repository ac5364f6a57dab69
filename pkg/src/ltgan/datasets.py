"""Synthetic oracle-equipped data: a 2D Gaussian ring and a shapes corpus.

The shapes renderer is deterministic and analytic, so every attribute of a
rendered image (brightness, center, size, class) can be re-measured from
pixels alone. That round trip is this module's own acceptance gate and is
established before any GAN training touches the data.

Images are rendered in [0, 1] and mapped to [-1, 1] for training.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, asdict

import numpy as np


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Gaussian ring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RingSpec:
    n_modes: int = 8
    radius: float = 0.7
    std: float = 0.05
    samples_per_epoch: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.n_modes < 2 or self.radius <= 0 or self.std <= 0:
            raise DataError(f"invalid ring spec: {self}")
        spacing = 2.0 * self.radius * np.sin(np.pi / self.n_modes)
        if not self.std < spacing / 4.0:
            raise DataError(f"mode std {self.std} must be < spacing/4 ({spacing / 4.0:.4f})")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (2, 1, 1)


def mode_centers(spec: RingSpec) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(spec.n_modes) / spec.n_modes
    return spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def sample_ring(spec: RingSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    if count < 1:
        raise DataError("count must be >= 1")
    centers = mode_centers(spec)
    modes = rng.integers(0, spec.n_modes, size=count)
    return (centers[modes] + rng.normal(0.0, spec.std, size=(count, 2))).astype(np.float32)


class RingSource:
    """Real-batch provider over per-epoch sample pools.

    Batches are addressed by a global index so a resumed training run
    lands on exactly the batch an uninterrupted run would see: each
    epoch's pool derives from (spec seed, epoch), never from shared
    stream state.
    """

    def __init__(self, spec: RingSpec):
        self.spec = spec
        self.image_shape = spec.image_shape
        self.conditional = False
        self._cache: tuple[int, np.ndarray] | None = None

    def _pool(self, epoch: int, per_epoch: int) -> np.ndarray:
        if self._cache is not None and self._cache[0] == epoch:
            return self._cache[1]
        rng = np.random.default_rng(np.random.SeedSequence((self.spec.seed, epoch)))
        pool = sample_ring(self.spec, rng, per_epoch)
        self._cache = (epoch, pool)
        return pool

    def batch(self, index: int, batch_size: int):
        per_epoch = max(self.spec.samples_per_epoch, batch_size)
        per = per_epoch // batch_size
        epoch, off = divmod(index, per)
        pool = self._pool(epoch, per_epoch)
        part = pool[off * batch_size:(off + 1) * batch_size]
        return part.reshape(batch_size, 2, 1, 1), None

    def batches(self, batch_size: int, start: int = 0):
        index = start
        while True:
            yield self.batch(index, batch_size)
            index += 1


# ---------------------------------------------------------------------------
# shapes corpus
# ---------------------------------------------------------------------------

CLASS_SQUARE = 0
CLASS_DISC = 1
DISC_RADIUS_FACTOR = 0.6  # disc radius = factor * size * width; keeps one fully covered pixel


@dataclass(frozen=True)
class ShapesSpec:
    size: int = 16
    classes: tuple[str, ...] = ("square", "disc")
    center_range: tuple[float, float] = (0.25, 0.75)
    size_range: tuple[float, float] = (0.15, 0.35)
    brightness_range: tuple[float, float] = (0.4, 1.0)
    supersample: int = 4

    def __post_init__(self):
        if self.size < 8 or self.supersample < 2:
            raise DataError(f"invalid shapes spec: size={self.size}, supersample={self.supersample}")
        if self.classes != ("square", "disc"):
            raise DataError("supported classes are exactly ('square', 'disc')")

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (1, self.size, self.size)


@dataclass
class AttributeVector:
    brightness: float
    center_x: float
    center_y: float
    size: float
    class_id: int
    valid: bool = True
    clamped: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.brightness, self.center_x, self.center_y, self.size], dtype=np.float32)


ATTRIBUTE_NAMES = ("brightness", "center_x", "center_y", "size")


def sample_attributes(spec: ShapesSpec, rng: np.random.Generator, n: int,
                      class_id: int | None = None) -> list[AttributeVector]:
    out = []
    for _ in range(n):
        cid = int(rng.integers(0, len(spec.classes))) if class_id is None else class_id
        out.append(AttributeVector(
            brightness=float(rng.uniform(*spec.brightness_range)),
            center_x=float(rng.uniform(*spec.center_range)),
            center_y=float(rng.uniform(*spec.center_range)),
            size=float(rng.uniform(*spec.size_range)),
            class_id=cid,
        ))
    return out


def _coverage(attrs: AttributeVector, spec: ShapesSpec) -> np.ndarray:
    """Per-pixel foreground coverage in [0, 1] via supersampling."""
    s, ss = spec.size, spec.supersample
    n = s * ss
    coords = (np.arange(n) + 0.5) / n
    xx, yy = np.meshgrid(coords, coords)  # yy rows, xx columns
    if attrs.class_id == CLASS_SQUARE:
        half = attrs.size / 2.0
        mask = (np.abs(xx - attrs.center_x) <= half) & (np.abs(yy - attrs.center_y) <= half)
    else:
        r = DISC_RADIUS_FACTOR * attrs.size
        mask = (xx - attrs.center_x) ** 2 + (yy - attrs.center_y) ** 2 <= r * r
    return mask.astype(np.float64).reshape(s, ss, s, ss).mean(axis=(1, 3))


def _extent(attrs: AttributeVector) -> float:
    return attrs.size / 2.0 if attrs.class_id == CLASS_SQUARE else DISC_RADIUS_FACTOR * attrs.size


def render_shape(attrs: AttributeVector, spec: ShapesSpec) -> np.ndarray:
    """Deterministic render to (1, S, S) in [0, 1]; brightness scales the
    foreground linearly. The shape must fit fully inside the frame."""
    if not (0.0 <= attrs.brightness <= 1.0):
        raise DataError(f"brightness {attrs.brightness} outside [0, 1]")
    if attrs.size <= 0:
        raise DataError(f"size {attrs.size} must be positive")
    if attrs.class_id not in (CLASS_SQUARE, CLASS_DISC):
        raise DataError(f"unknown class id {attrs.class_id}")
    ext = _extent(attrs)
    for c in (attrs.center_x, attrs.center_y):
        if c - ext < 0.0 or c + ext > 1.0:
            raise DataError(f"shape extends outside the frame: center {c}, extent {ext:.3f}")
    img = attrs.brightness * _coverage(attrs, spec)
    return img.reshape(1, spec.size, spec.size)


def to_training(image01: np.ndarray) -> np.ndarray:
    return (2.0 * image01 - 1.0).astype(np.float32)


def from_training(image: np.ndarray) -> np.ndarray:
    return (np.asarray(image, dtype=np.float64) + 1.0) / 2.0


def render_training(attrs: AttributeVector, spec: ShapesSpec) -> np.ndarray:
    return to_training(render_shape(attrs, spec))


# ---------------------------------------------------------------------------
# attribute oracle
# ---------------------------------------------------------------------------

FOREGROUND_THRESHOLD = 0.1


def _clamp_attr(value: float, rng: tuple[float, float]) -> tuple[float, bool]:
    if value < rng[0]:
        return rng[0], True
    if value > rng[1]:
        return rng[1], True
    return value, False


def measure_attributes(image: np.ndarray, spec: ShapesSpec, classify: bool = True) -> AttributeVector:
    """Analytic attribute measurement of a [-1, 1] image.

    Brightness is the mean over effectively fully covered pixels (within
    one supersampling quantum of the maximum), which is exact for every
    in-range render; partially covered anti-aliased edge pixels are
    excluded on purpose. Size is the sqrt of the coverage-weighted
    foreground area over the image width. Class is decided by normalized
    template correlation against both classes rendered at the measured
    center and size.
    """
    x = from_training(image).reshape(spec.size, spec.size)
    fg = x > FOREGROUND_THRESHOLD
    if not fg.any():
        return AttributeVector(0.0, 0.5, 0.5, 0.0, CLASS_SQUARE, valid=False)

    peak = float(x.max())
    quant = peak / (spec.supersample ** 2)
    top = x >= peak - 0.5 * quant
    brightness = float(x[top].mean())

    weights = np.where(fg, x, 0.0)
    total = weights.sum()
    coords = (np.arange(spec.size) + 0.5) / spec.size
    center_x = float((weights.sum(axis=0) * coords).sum() / total)
    center_y = float((weights.sum(axis=1) * coords).sum() / total)

    area = float(np.minimum(weights / max(brightness, 1e-9), 1.0).sum())
    size_raw = float(np.sqrt(area) / spec.size)

    if classify:
        class_id, size_class = _classify(x, brightness, center_x, center_y, size_raw, spec)
    else:  # class not needed: skip template matching (bulk scoring path)
        class_id, size_class = -1, size_raw

    brightness_c, c0 = _clamp_attr(brightness, spec.brightness_range)
    center_x_c, c1 = _clamp_attr(center_x, spec.center_range)
    center_y_c, c2 = _clamp_attr(center_y, spec.center_range)
    size_c, c3 = _clamp_attr(size_class, spec.size_range)
    return AttributeVector(brightness_c, center_x_c, center_y_c, size_c, class_id,
                           valid=True, clamped=bool(c0 or c1 or c2 or c3))


def _size_from_sqrt_area(size_raw: float, class_id: int) -> float:
    if class_id == CLASS_SQUARE:
        return size_raw
    return size_raw / (DISC_RADIUS_FACTOR * np.sqrt(np.pi))


def _classify(x: np.ndarray, brightness: float, cx: float, cy: float,
              size_raw: float, spec: ShapesSpec) -> tuple[int, float]:
    best = (-2.0, CLASS_SQUARE, size_raw)
    norm_x = np.linalg.norm(x)
    px = 1.0 / spec.size
    for cid in (CLASS_SQUARE, CLASS_DISC):
        size_est = _size_from_sqrt_area(size_raw, cid)
        for dx in (-0.25 * px, 0.0, 0.25 * px):
            for dy in (-0.25 * px, 0.0, 0.25 * px):
                cand = AttributeVector(1.0, cx + dx, cy + dy, size_est, cid)
                ext = _extent(cand)
                ccx = min(max(cand.center_x, ext), 1.0 - ext)
                ccy = min(max(cand.center_y, ext), 1.0 - ext)
                template = _coverage(AttributeVector(1.0, ccx, ccy, size_est, cid), spec)
                denom = norm_x * np.linalg.norm(template)
                if denom <= 0:
                    continue
                score = float((x * template).sum() / denom)
                if score > best[0]:
                    best = (score, cid, size_est)
    return best[1], best[2]


# ---------------------------------------------------------------------------
# corpus build / io / iteration
# ---------------------------------------------------------------------------

@dataclass
class ShapesCorpus:
    spec: ShapesSpec
    images: np.ndarray   # (n, 1, S, S) float32 in [-1, 1]
    attrs: np.ndarray    # (n, 4) float32
    classes: np.ndarray  # (n,) uint8

    def __len__(self) -> int:
        return self.images.shape[0]


def build_corpus(spec: ShapesSpec, n: int, rng: np.random.Generator,
                 class_id: int | None = None) -> ShapesCorpus:
    attr_list = sample_attributes(spec, rng, n, class_id=class_id)
    images = np.stack([render_training(a, spec) for a in attr_list])
    attrs = np.stack([a.as_array() for a in attr_list])
    classes = np.array([a.class_id for a in attr_list], dtype=np.uint8)
    return ShapesCorpus(spec, images, attrs, classes)


_CORPUS_MAGIC = b"SHPC"


def save_corpus(path: str, corpus: ShapesCorpus) -> None:
    buf = io.BytesIO()
    buf.write(_CORPUS_MAGIC)
    buf.write(struct.pack("<I", 1))
    header = json.dumps({"spec": asdict(corpus.spec), "count": len(corpus)},
                        sort_keys=True).encode()
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    for i in range(len(corpus)):
        buf.write(corpus.attrs[i].astype("<f4").tobytes())
        buf.write(struct.pack("B", int(corpus.classes[i])))
        buf.write(corpus.images[i].astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_corpus(path: str) -> ShapesCorpus:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _CORPUS_MAGIC:
        raise DataError(f"{path}: not a shapes corpus (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != 1:
        raise DataError(f"{path}: unsupported corpus version {version}")
    (hlen,) = struct.unpack_from("<I", raw, 8)
    header = json.loads(raw[12:12 + hlen])
    spec_fields = {k: tuple(v) if isinstance(v, list) else v for k, v in header["spec"].items()}
    spec = ShapesSpec(**spec_fields)
    n = header["count"]
    px = spec.size * spec.size
    rec = 16 + 1 + 4 * px
    off = 12 + hlen
    if len(raw) != off + n * rec:
        raise DataError(f"{path}: truncated corpus file")
    attrs = np.empty((n, 4), dtype=np.float32)
    classes = np.empty(n, dtype=np.uint8)
    images = np.empty((n, 1, spec.size, spec.size), dtype=np.float32)
    for i in range(n):
        attrs[i] = np.frombuffer(raw, "<f4", 4, off)
        classes[i] = raw[off + 16]
        images[i] = np.frombuffer(raw, "<f4", px, off + 17).reshape(1, spec.size, spec.size)
        off += rec
    return ShapesCorpus(spec, images, attrs, classes)


class ShapesSource:
    """Epoch-shuffled provider over a fixed rendered corpus.

    Same index-addressed contract as RingSource: the shuffle of epoch k
    derives from (seed, k), so training can resume mid-epoch bit-exactly.
    """

    def __init__(self, corpus: ShapesCorpus, seed: int = 0):
        self.corpus = corpus
        self.seed = seed
        self.image_shape = corpus.spec.image_shape
        self.conditional = True  # class labels are always available
        self._cache: tuple[int, np.ndarray] | None = None

    def _order(self, epoch: int) -> np.ndarray:
        if self._cache is not None and self._cache[0] == epoch:
            return self._cache[1]
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, epoch)))
        order = rng.permutation(len(self.corpus))
        self._cache = (epoch, order)
        return order

    def batch(self, index: int, batch_size: int):
        n = len(self.corpus)
        if batch_size > n:
            raise DataError(f"batch size {batch_size} exceeds corpus size {n}")
        per = n // batch_size
        epoch, off = divmod(index, per)
        idx = self._order(epoch)[off * batch_size:(off + 1) * batch_size]
        return self.corpus.images[idx], self.corpus.classes[idx].astype(np.int64)

    def batches(self, batch_size: int, start: int = 0):
        index = start
        while True:
            yield self.batch(index, batch_size)
            index += 1
