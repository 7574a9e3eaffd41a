"""Dataset loaders (IDX, synthetic blobs) and binary PGM image I/O."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from boss.errors import SchemaError
from boss.models import Dataset

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_idx(path, magic, ndim):
    raw = Path(path).read_bytes()
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise SchemaError(f"{path}: truncated IDX header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise SchemaError(f"{path}: magic {got:#010x}, expected {magic:#010x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header != count:
        raise SchemaError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def ingest_idx(images_path, labels_path):
    """MNIST-format image/label pair, pixels scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise SchemaError(f"{len(images)} images but {len(labels)} labels")
    n, h, w = images.shape
    return Dataset(x=images.reshape(n, h * w) / 255.0, labels=labels.astype(np.int64),
                   image_shape=(h, w), source=str(images_path))


def write_idx(images, labels, images_path, labels_path):
    """Inverse of ``ingest_idx`` for uint8 arrays; mainly for tests and fixtures."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape)
                                  + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels))
                                  + labels.tobytes())


def _separated_means(rng, classes, dim, min_gap=1.0, tries=200, batch=256):
    means = rng.uniform(0.25, 0.75, size=(classes, dim))
    gaps = np.linalg.norm(means[:, None] - means[None], axis=-1)
    if classes == 1 or gaps[np.triu_indices(classes, 1)].min() >= min_gap:
        return means
    # greedy placement: keep each class mean at least min_gap from the earlier ones
    picked = [means[0]]
    for _ in range(1, classes):
        for _ in range(tries):
            cand = rng.uniform(0.25, 0.75, size=(batch, dim))
            dist = np.linalg.norm(cand[:, None] - np.array(picked)[None], axis=-1).min(axis=1)
            ok = np.flatnonzero(dist >= min_gap)
            if ok.size:
                picked.append(cand[ok[0]])
                break
        else:
            raise ValueError(f"cannot place {classes} means {min_gap} apart in [0.25, 0.75]^{dim}")
    return np.array(picked)


def generate_blobs(classes, per_class, dim, seed=0, noise=0.1, image_shape=None):
    """Gaussian clusters clipped to [0, 1]^dim.

    Class means lie in [0.25, 0.75]^dim, every pair at least one unit apart
    (which needs dim > 4).
    """
    if classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("classes, per_class and dim must be positive")
    if image_shape is not None and int(np.prod(image_shape)) != dim:
        raise ValueError(f"image_shape {image_shape} does not hold {dim} pixels")
    rng = np.random.default_rng(seed)
    means = _separated_means(rng, classes, dim)
    labels = np.repeat(np.arange(classes), per_class)
    x = np.clip(means[labels] + noise * rng.standard_normal((len(labels), dim)), 0.0, 1.0)
    return Dataset(x=x, labels=labels, image_shape=tuple(image_shape) if image_shape else None,
                   source=f"blobs(classes={classes}, per_class={per_class}, dim={dim}, seed={seed})",
                   num_classes=classes)


def write_pgm(path, image):
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got {img.shape}")
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos)
            continue
        start = pos
        while not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode())
    pos += 1
    if tokens[0] != "P5":
        raise SchemaError(f"{path}: not a binary PGM")
    w, h, maxval = map(int, tokens[1:])
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos)
    return data.reshape(h, w) / float(maxval)
