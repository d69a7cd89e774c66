"""Dataset loading: IDX image files, generic CSV tables, and a procedural
digit renderer used where real handwriting corpora are unavailable offline.

IDX files follow the standard big-endian layout (magic 0x00000803 for image
tensors, 0x00000801 for label vectors). Pixels scale to [0, 1] by /255;
CSV features are min-max scaled per column.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from .rng import substream, STREAM_DATASET

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    inputs: list
    labels: np.ndarray
    split: str = "test"
    num_classes: int = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if len(self.inputs) != len(self.labels):
            raise ValueError("inputs and labels length mismatch")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.inputs)

    def conform(self, input_shape):
        """Reshape every input to the model's input shape (size must match)."""
        size = int(np.prod(input_shape))
        reshaped = []
        for x in self.inputs:
            if x.size != size:
                raise ValueError(f"input size {x.size} incompatible with shape {input_shape}")
            reshaped.append(np.ascontiguousarray(x.reshape(input_shape)))
        return Dataset(reshaped, self.labels.copy(), self.split, self.num_classes)

    def subset(self, indices, split=None):
        idx = list(indices)
        return Dataset([self.inputs[i] for i in idx], self.labels[idx],
                       split or self.split, self.num_classes)


def _read_exact(fh, count, path, what):
    data = fh.read(count)
    if len(data) != count:
        raise ValueError(
            f"{path}: truncated {what}, expected {count} bytes, got {len(data)}"
        )
    return data


def load_idx(images_path, labels_path, split="test", num_classes=10):
    """Parse an IDX image/label file pair into a Dataset of [0, 1] images."""
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{images_path}: bad magic 0x{magic:08x}, want 0x{IDX_IMAGES_MAGIC:08x}")
        raw = _read_exact(fh, count * rows * cols, images_path, "pixel data")
        images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows, cols)
    with open(labels_path, "rb") as fh:
        magic, lcount = struct.unpack(">II", _read_exact(fh, 8, labels_path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{labels_path}: bad magic 0x{magic:08x}, want 0x{IDX_LABELS_MAGIC:08x}")
        labels = np.frombuffer(_read_exact(fh, lcount, labels_path, "label data"), dtype=np.uint8)
    if count != lcount:
        raise ValueError(f"item count mismatch: {count} images vs {lcount} labels")
    inputs = [img.astype(np.float64) / 255.0 for img in images]
    return Dataset(inputs, labels.astype(int), split, num_classes)


def save_idx(images_path, labels_path, images, labels):
    """Write uint8 images (N, H, W) and labels (N,) in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(labels.tobytes())


def load_csv(path, num_classes, split="test", header=False):
    """Numeric CSV with the integer label in the last column.

    Features are min-max scaled per column to [0, 1]; constant columns scale
    to 0.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if header and line_no == 1:
                continue
            cells = line.split(",")
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: non-numeric cell: {exc}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ValueError(f"{path}: ragged row {i}: {len(row)} cells, expected {width}")
    data = np.asarray(rows, dtype=np.float64)
    features, labels = data[:, :-1], data[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ValueError(f"{path}: labels must be integers")
    labels = labels.astype(int)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"{path}: label outside [0, {num_classes})")
    lo = features.min(axis=0)
    hi = features.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    scaled = np.where(hi > lo, (features - lo) / span, 0.0)
    return Dataset([row.copy() for row in scaled], labels, split, num_classes)


# ---------------------------------------------------------------------------
# procedural digit rendering


_FONT_FILES = [
    "DejaVuSans.ttf", "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf", "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf", "DejaVuSansMono-Bold.ttf",
]


def _load_fonts():
    from PIL import ImageFont

    fonts = []
    try:
        import matplotlib

        font_dir = os.path.join(os.path.dirname(matplotlib.__file__),
                                "mpl-data", "fonts", "ttf")
        for name in _FONT_FILES:
            path = os.path.join(font_dir, name)
            if os.path.exists(path):
                fonts.append(path)
    except ImportError:
        pass
    if fonts:
        return [("file", p) for p in fonts]
    return [("default", None)]


def render_digits(count, seed, size=28, stroke=80):
    """Render ``count`` 28x28 grayscale digit images with font, shift and
    rotation variation. Returns (uint8 images, int labels).

    Strokes are drawn at low intensity (default 80/255) so the evaluation
    sweep's noise magnitudes are a meaningful fraction of the signal scale.
    """
    from PIL import Image, ImageDraw, ImageFont

    fonts = _load_fonts()
    rng = substream(seed, STREAM_DATASET)
    canvas = 40
    images = np.empty((count, size, size), dtype=np.uint8)
    labels = np.empty(count, dtype=np.uint8)
    for i in range(count):
        digit = int(rng.integers(10))
        pt = int(rng.integers(17, 23))
        kind, path = fonts[int(rng.integers(len(fonts)))]
        if kind == "file":
            font = ImageFont.truetype(path, pt)
        else:
            font = ImageFont.load_default(size=pt)
        img = Image.new("L", (canvas, canvas), 0)
        ImageDraw.Draw(img).text((canvas // 2, canvas // 2), str(digit),
                                 fill=stroke, font=font, anchor="mm")
        angle = float(rng.uniform(-8.0, 8.0))
        img = img.rotate(angle, resample=Image.BILINEAR, center=(canvas // 2, canvas // 2))
        dx = int(rng.integers(-2, 3))
        dy = int(rng.integers(-2, 3))
        off = (canvas - size) // 2
        img = img.crop((off + dx, off + dy, off + dx + size, off + dy + size))
        images[i] = np.asarray(img, dtype=np.uint8)
        labels[i] = digit
    return images, labels


def write_digit_dataset(out_dir, n_train, n_test, seed):
    """Generate train/test IDX pairs under ``out_dir``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    images, labels = render_digits(n_train + n_test, seed)
    paths = {}
    splits = [("train", slice(0, n_train)), ("test", slice(n_train, n_train + n_test))]
    for split, sel in splits:
        img_path = os.path.join(out_dir, f"{split}-images.idx")
        lab_path = os.path.join(out_dir, f"{split}-labels.idx")
        save_idx(img_path, lab_path, images[sel], labels[sel])
        paths[split] = (img_path, lab_path)
    return paths
