"""Dataset acquisition: MNIST-style IDX parsing, the "NLFC" precomputed
feature cache (stand-in for frozen backbone embeddings), synthetic Gaussian
blobs, a rendered-digit image generator, and deterministic splitting.

File formats (byte-exact):

IDX images   big-endian u32 magic 0x00000803, u32 count, u32 rows, u32 cols,
             then count*rows*cols raw pixel bytes.
IDX labels   big-endian u32 magic 0x00000801, u32 count, then count bytes.
NLFC v1      4-byte magic "NLFC", then little-endian u32 version=1, u64 n,
             u64 d, u32 k_c, then n*d float32 LE row-major features, then
             n int32 LE labels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import FormatError, InvalidInputError
from .numerics import LabelVector

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

FEATURE_CACHE_MAGIC = b"NLFC"
FEATURE_CACHE_VERSION = 1


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix (n x d, float64) with integer labels."""

    features: np.ndarray
    labels: LabelVector
    name: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        if feats.ndim != 2:
            raise InvalidInputError(f"features must be 2-D, got shape {feats.shape}")
        if not np.all(np.isfinite(feats)):
            raise InvalidInputError("features contain non-finite entries")
        if feats.shape[0] != len(self.labels):
            raise InvalidInputError(
                f"{feats.shape[0]} feature rows vs {len(self.labels)} labels"
            )

    @property
    def num_classes(self) -> int:
        return self.labels.num_classes

    def __len__(self) -> int:
        return self.features.shape[0]


def subset(ds: LabeledDataset, indices, name: str | None = None) -> LabeledDataset:
    """Dataset restricted to the given row indices (in the given order)."""
    idx = np.asarray(indices, dtype=np.int64)
    return LabeledDataset(
        ds.features[idx],
        LabelVector(ds.labels.labels[idx], ds.num_classes),
        ds.name if name is None else name,
    )


# ---------------------------------------------------------------------------
# IDX (MNIST distribution format)


def _read_exact(fh, count, what):
    data = fh.read(count)
    if len(data) != count:
        raise FormatError(f"truncated file while reading {what}")
    return data


def load_mnist_idx(images_path, labels_path) -> LabeledDataset:
    """Parse an IDX image/label file pair; pixels are scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise FormatError(f"bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        pixels = np.frombuffer(
            _read_exact(fh, count * rows * cols, "pixels"), dtype=np.uint8
        )
        if fh.read(1):
            raise FormatError("trailing bytes after image payload")
    with open(labels_path, "rb") as fh:
        magic, label_count = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != IDX_LABEL_MAGIC:
            raise FormatError(f"bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}")
        raw_labels = np.frombuffer(_read_exact(fh, label_count, "labels"), dtype=np.uint8)
        if fh.read(1):
            raise FormatError("trailing bytes after label payload")
    if count != label_count:
        raise FormatError(f"{count} images but {label_count} labels")
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    try:
        labels = LabelVector(raw_labels.astype(np.int64), 10)
    except InvalidInputError as exc:
        raise FormatError(str(exc)) from None
    return LabeledDataset(features, labels, name="mnist-idx")


def write_mnist_idx(ds: LabeledDataset, images_path, labels_path,
                    image_shape=(28, 28)) -> None:
    """Write a dataset with [0, 1] pixel features as an IDX file pair."""
    rows, cols = image_shape
    if ds.features.shape[1] != rows * cols:
        raise InvalidInputError(
            f"features have {ds.features.shape[1]} columns, expected {rows * cols}"
        )
    pixels = np.clip(np.rint(ds.features * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, len(ds), rows, cols))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, len(ds)))
        fh.write(ds.labels.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# NLFC feature cache


def load_feature_cache(path) -> LabeledDataset:
    """Read an NLFC v1 feature cache (float32 features widened to float64)."""
    with open(path, "rb") as fh:
        header = _read_exact(fh, 28, "cache header")
        if header[:4] != FEATURE_CACHE_MAGIC:
            raise FormatError(f"bad cache magic {header[:4]!r}")
        version, n, d, k_c = struct.unpack("<IQQI", header[4:])
        if version != FEATURE_CACHE_VERSION:
            raise FormatError(f"unsupported cache version {version}")
        if n == 0 or d == 0 or k_c == 0:
            raise FormatError("cache header declares an empty dataset")
        feats = np.frombuffer(
            _read_exact(fh, 4 * n * d, "features"), dtype="<f4"
        ).reshape(n, d)
        raw_labels = np.frombuffer(_read_exact(fh, 4 * n, "labels"), dtype="<i4")
        if fh.read(1):
            raise FormatError("trailing bytes after cache payload")
    if raw_labels.min() < 0 or raw_labels.max() >= k_c:
        raise FormatError(f"cache labels out of range [0, {k_c})")
    return LabeledDataset(
        feats.astype(np.float64),
        LabelVector(raw_labels.astype(np.int64), int(k_c)),
        name="feature-cache",
    )


def write_feature_cache(ds: LabeledDataset, path) -> None:
    """Write an NLFC v1 feature cache (features narrowed to float32)."""
    with open(path, "wb") as fh:
        fh.write(FEATURE_CACHE_MAGIC)
        fh.write(struct.pack("<IQQI", FEATURE_CACHE_VERSION, len(ds),
                             ds.features.shape[1], ds.num_classes))
        fh.write(ds.features.astype("<f4").tobytes())
        fh.write(ds.labels.labels.astype("<i4").tobytes())


# ---------------------------------------------------------------------------
# Synthetic data


def synth_blobs(n: int, num_classes: int, dim: int, separation: float,
                seed: int) -> LabeledDataset:
    """Unit-covariance Gaussian clusters with means at separation times the
    signed canonical basis directions; balanced labels, seed-deterministic."""
    if num_classes < 2 or dim < 1 or n < num_classes:
        raise InvalidInputError("need num_classes >= 2, dim >= 1, n >= num_classes")
    if separation < 0:
        raise InvalidInputError("separation must be >= 0")
    if num_classes > 2 * dim:
        raise InvalidInputError(
            f"{num_classes} classes need dim >= {(num_classes + 1) // 2} "
            "for distinct signed-basis means"
        )
    means = np.zeros((num_classes, dim))
    for c in range(num_classes):
        if c < dim:
            means[c, c] = separation
        else:
            means[c, c - dim] = -separation
    labels = np.arange(n, dtype=np.int64) % num_classes
    gen = np.random.Generator(np.random.Philox(key=seed))
    features = means[labels] + gen.standard_normal((n, dim))
    return LabeledDataset(features, LabelVector(labels, num_classes), name="blobs")


# Coarse 7x5 glyphs rendered into 28x28 images by synth_digits.
_GLYPHS = [
    " ### #   ##   ##   ##   ##   # ### ",  # 0
    "  #   ##   #    #    #    #   ###  ",  # 1
    " ### #   #    #   #   #   #   #####",  # 2
    " ### #   #    #  ##     ##   # ### ",  # 3
    "   #   ##  # # #  # #####   #    # ",  # 4
    "######    #### #   #    ##   # ### ",  # 5
    " ### #    #    #### #   ##   # ### ",  # 6
    "#####    #   #   #   #    #    #   ",  # 7
    " ### #   ##   # ### #   ##   # ### ",  # 8
    " ### #   ##   # ####    #    # ### ",  # 9
]


def _glyph_image(digit: int) -> np.ndarray:
    rows = [_GLYPHS[digit][r * 5 : (r + 1) * 5] for r in range(7)]
    coarse = np.array([[1.0 if ch == "#" else 0.0 for ch in row] for row in rows])
    return np.kron(coarse, np.ones((3, 3)))  # 21 x 15


def synth_digits(n: int, seed: int, noise_level: float = 0.25) -> LabeledDataset:
    """Rendered handwritten-digit stand-in: 28x28 grayscale glyphs with
    random shift, rotation, blur, stroke-intensity jitter, and pixel noise.

    Serves as a raw-pixel 10-class corpus when the real MNIST files are not
    on disk; write_mnist_idx() turns it into a standard IDX pair.
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    gen = np.random.Generator(np.random.Philox(key=seed))
    labels = gen.integers(0, 10, size=n)
    templates = [_glyph_image(d) for d in range(10)]
    images = np.zeros((n, 28, 28))
    for i in range(n):
        img = np.zeros((28, 28))
        glyph = templates[labels[i]] * gen.uniform(0.55, 1.0)
        img[3:24, 6:21] = glyph
        angle = gen.uniform(-14.0, 14.0)
        img = ndimage.rotate(img, angle, reshape=False, order=1)
        img = ndimage.shift(
            img, (gen.integers(-3, 4), gen.integers(-3, 4)), order=0
        )
        img = ndimage.gaussian_filter(img, sigma=gen.uniform(0.4, 1.1))
        img += noise_level * gen.random((28, 28)) ** 2
        images[i] = np.clip(img, 0.0, 1.0)
    return LabeledDataset(
        images.reshape(n, 784),
        LabelVector(labels.astype(np.int64), 10),
        name="synth-digits",
    )


def train_val_split(ds: LabeledDataset, val_fraction: float,
                    seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded shuffle then split; the validation side gets
    floor(n * val_fraction) samples and the train side the remainder."""
    if not 0.0 < val_fraction < 1.0:
        raise InvalidInputError("val_fraction must lie in (0, 1)")
    n = len(ds)
    val_n = int(n * val_fraction)
    if val_n == 0 or val_n == n:
        raise InvalidInputError(
            f"val_fraction {val_fraction} empties one side for n={n}"
        )
    perm = np.random.Generator(np.random.Philox(key=seed)).permutation(n)
    return (
        subset(ds, perm[val_n:], name=f"{ds.name}/train"),
        subset(ds, perm[:val_n], name=f"{ds.name}/val"),
    )
