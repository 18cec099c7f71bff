"""Datasets: seeded Gaussian blobs, IDX image files and mini-batching.

Inputs are column-stacked (``input_dim x n``) to match the network API.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import serialization
from .errors import ConfigError, DimensionError, FormatError
from .rng import DATA, SHUFFLE, make_rng

MAGIC = b"DFDS1"
IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    classes: int
    split: str = "train"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.labels.shape != (self.inputs.shape[1],):
            raise DimensionError(f"inputs {self.inputs.shape} and labels {self.labels.shape} disagree")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ConfigError(f"labels must lie in [0, {self.classes})")

    def __len__(self):
        return self.inputs.shape[1]

    @property
    def input_dim(self):
        return self.inputs.shape[0]


def blob_centers(c, input_dim, spread, seed, separation=5.0):
    """``input_dim x c`` class centres with every pairwise distance at least
    ``separation * spread``.

    With ``input_dim >= c`` the centres are a randomly rotated scaled
    orthonormal frame, so all pairwise distances are exactly that value.
    """
    rng = make_rng(seed, DATA, 0)
    gap = separation * spread
    if input_dim >= c:
        q, _ = np.linalg.qr(rng.standard_normal((input_dim, c)))
        return q * (gap / np.sqrt(2.0))
    pts = rng.standard_normal((input_dim, c))
    pts /= np.linalg.norm(pts, axis=0, keepdims=True)
    dists = np.linalg.norm(pts[:, :, None] - pts[:, None, :], axis=0)
    closest = dists[~np.eye(c, dtype=bool)].min()
    return pts * (gap / closest)


def make_blobs(c, n_per_class, input_dim, spread, seed, separation=5.0, modes_per_class=1):
    """Isotropic Gaussian classes, split 80/20 per class into (train, test).

    With ``modes_per_class = k > 1`` each class is an equal mixture of ``k``
    blobs (cluster ``j`` belongs to class ``j % c``), which makes the
    decision boundary nonlinear while keeping every centre pair separated.
    """
    if c < 2:
        raise ConfigError(f"need at least 2 classes, got {c}")
    if n_per_class < 2:
        raise ConfigError(f"need at least 2 samples per class for a train/test split, got {n_per_class}")
    if input_dim < 1:
        raise ConfigError(f"input_dim must be positive, got {input_dim}")
    if spread <= 0:
        raise ConfigError(f"spread must be positive, got {spread}")
    if separation < 4:
        raise ConfigError(f"separation must be >= 4 spreads, got {separation}")
    if modes_per_class < 1:
        raise ConfigError(f"modes_per_class must be >= 1, got {modes_per_class}")
    centers = blob_centers(c * modes_per_class, input_dim, spread, seed, separation)
    rng = make_rng(seed, DATA, 1)
    n_test = max(1, n_per_class // 5)
    parts = {"train": ([], []), "test": ([], [])}
    for k in range(c):
        which = rng.integers(0, modes_per_class, size=n_per_class) * c + k
        x = centers[:, which] + spread * rng.standard_normal((input_dim, n_per_class))
        parts["train"][0].append(x[:, n_test:])
        parts["train"][1].append(np.full(n_per_class - n_test, k))
        parts["test"][0].append(x[:, :n_test])
        parts["test"][1].append(np.full(n_test, k))
    provenance = {
        "kind": "blobs", "classes": c, "n_per_class": n_per_class, "input_dim": input_dim,
        "spread": spread, "separation": separation, "modes_per_class": modes_per_class, "seed": seed,
    }
    out = []
    for split, (xs, ys) in parts.items():
        x, y = np.concatenate(xs, axis=1), np.concatenate(ys)
        order = make_rng(seed, DATA, 2 if split == "train" else 3).permutation(y.size)
        out.append(Dataset(x[:, order], y[order], c, split, dict(provenance)))
    return tuple(out)


def standardize(train, *others):
    """Z-score every split with the per-feature mean and std of ``train``."""
    mu = train.inputs.mean(axis=1, keepdims=True)
    sd = train.inputs.std(axis=1, keepdims=True)
    sd = np.where(sd > 0, sd, 1.0)
    out = []
    for ds in (train, *others):
        prov = dict(ds.provenance, standardized=True)
        out.append(Dataset((ds.inputs - mu) / sd, ds.labels, ds.classes, ds.split, prov))
    return tuple(out)


class _Cursor:
    def __init__(self, buf, path):
        self.buf, self.path, self.pos = buf, path, 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"{self.path}: truncated {what} at byte offset {self.pos} "
                f"(need {n} bytes, {len(self.buf) - self.pos} available)"
            )
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk


def _read_idx(path, magic, ndim):
    with open(path, "rb") as fh:
        cur = _Cursor(fh.read(), path)
    (got,) = struct.unpack(">I", cur.take(4, "magic number"))
    if got != magic:
        raise FormatError(f"{path}: bad magic 0x{got:08x} at byte offset 0, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", cur.take(4 * ndim, "dimension header"))
    count = int(np.prod(dims))
    raw = cur.take(count, "payload")
    if cur.pos != len(cur.buf):
        raise FormatError(f"{path}: {len(cur.buf) - cur.pos} unexpected trailing bytes at byte offset {cur.pos}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, split="train", classes=None):
    """Read an IDX image/label pair; pixels scaled to [0, 1], one column per image."""
    images = _read_idx(images_path, IDX_IMAGES, 3)
    labels = _read_idx(labels_path, IDX_LABELS, 1)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"count mismatch: {images.shape[0]} images in {images_path} vs "
            f"{labels.shape[0]} labels in {labels_path}"
        )
    n = images.shape[0]
    inputs = images.reshape(n, -1).T.astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    if classes is None:
        classes = int(y.max()) + 1 if n else 1
    provenance = {"kind": "idx", "images": str(images_path), "labels": str(labels_path)}
    return Dataset(inputs, y, classes, split, provenance)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 ``images`` (n, rows, cols) and ``labels`` (n,) as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES, *images.shape))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS, labels.shape[0]))
        fh.write(labels.tobytes())


def batch_indices(n, b, seed, epoch):
    """Index arrays of a full epoch-keyed shuffle, cut into chunks of ``b``."""
    if b < 1:
        raise ConfigError(f"batch size must be >= 1, got {b}")
    order = make_rng(seed, SHUFFLE, epoch).permutation(n)
    return [order[i:i + b] for i in range(0, n, b)]


def batches(ds, b, seed, epoch):
    for idx in batch_indices(len(ds), b, seed, epoch):
        yield ds.inputs[:, idx], ds.labels[idx]


def to_bytes(ds):
    descriptor = {"kind": "dataset", "classes": ds.classes, "split": ds.split, "provenance": ds.provenance}
    return serialization.encode(MAGIC, descriptor, [ds.inputs, ds.labels.astype(np.float64)])


def from_bytes(buf):
    descriptor, arrays = serialization.decode(MAGIC, buf)
    if len(arrays) != 2:
        raise FormatError(f"dataset file holds {len(arrays)} tensors, expected 2")
    inputs, labels = arrays
    return Dataset(inputs, labels.astype(np.int64), descriptor["classes"], descriptor["split"], descriptor["provenance"])


def save(ds, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ds))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
