#!/usr/bin/env python3
"""Build an MNIST-layout handwritten-digit dataset from sklearn's bundled digits.

The 8x8 digit scans (classes restricted via --classes) are split into disjoint
train/validation/test pools, upsampled to 28x28, and expanded by seeded affine
augmentation into standard IDX files:

    train-images-idx3-ubyte / train-labels-idx1-ubyte   (60000 rows;
        rows 0..49999 come from the train pool, rows 50000..59999 from the
        validation pool, matching the first-50k/last-10k split convention)
    t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte     (2000 rows, test pool)

Intended for desk-scale runs in environments without the real MNIST files;
the output is deterministic in --seed.
"""

import argparse
import struct
import sys

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, images.shape[0], 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, labels.shape[0]))
        f.write(labels.astype(np.uint8).tobytes())


def upscale28(img8):
    # 8x8 [0,16] -> 28x28 [0,1], centered with a small margin
    img = img8 / 16.0
    big = ndimage.zoom(img, 28.0 / 8.0, order=1, prefilter=False)
    return np.clip(big, 0.0, 1.0)


def augment(base28, rng):
    angle = rng.uniform(-12.0, 12.0)
    scale = rng.uniform(0.88, 1.12)
    shear = rng.uniform(-0.08, 0.08)
    shift = rng.uniform(-1.8, 1.8, size=2)
    theta = np.deg2rad(angle)
    mat = np.array(
        [
            [np.cos(theta) / scale, -np.sin(theta) / scale + shear],
            [np.sin(theta) / scale, np.cos(theta) / scale],
        ]
    )
    center = np.array([13.5, 13.5])
    offset = center - mat @ center + shift
    out = ndimage.affine_transform(base28, mat, offset=offset, order=1, mode="constant", cval=0.0)
    out = out * rng.uniform(0.85, 1.0)
    out = out + rng.normal(0.0, 0.015, out.shape)
    return np.clip(out, 0.0, 1.0)


def expand(pool28, pool_labels, count, rng):
    images = np.empty((count, 28, 28), dtype=np.float64)
    labels = np.empty(count, dtype=np.int64)
    order = rng.permutation(count)
    for slot, idx in enumerate(order):
        base = idx % len(pool28)
        images[slot] = augment(pool28[base], rng)
        labels[slot] = pool_labels[base]
    return np.round(images * 255.0), labels


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--classes", default="0,1", help="comma separated digit classes")
    ap.add_argument("--train-rows", type=int, default=20000)
    ap.add_argument("--test-rows", type=int, default=2000)
    args = ap.parse_args()

    import os

    os.makedirs(args.out, exist_ok=True)
    classes = [int(c) for c in args.classes.split(",")]
    rng = np.random.RandomState(args.seed)

    digits = load_digits()
    keep = np.isin(digits.target, classes)
    base = digits.images[keep]
    labels = digits.target[keep]

    # disjoint base pools: 60% train, 20% validation, 20% test
    order = rng.permutation(len(base))
    n_train = int(0.6 * len(order))
    n_val = int(0.2 * len(order))
    pools = {
        "train": order[:n_train],
        "val": order[n_train : n_train + n_val],
        "test": order[n_train + n_val :],
    }
    up = {name: ([upscale28(base[i]) for i in idx], labels[idx]) for name, idx in pools.items()}

    val_rows = min(10000, args.train_rows)
    train_rows = args.train_rows - val_rows
    train_imgs, train_labels = expand(up["train"][0], up["train"][1], train_rows, rng)
    val_imgs, val_labels = expand(up["val"][0], up["val"][1], val_rows, rng)
    test_imgs, test_labels = expand(up["test"][0], up["test"][1], args.test_rows, rng)

    write_idx_images(
        os.path.join(args.out, "train-images-idx3-ubyte"), np.concatenate([train_imgs, val_imgs])
    )
    write_idx_labels(
        os.path.join(args.out, "train-labels-idx1-ubyte"), np.concatenate([train_labels, val_labels])
    )
    write_idx_images(os.path.join(args.out, "t10k-images-idx3-ubyte"), test_imgs)
    write_idx_labels(os.path.join(args.out, "t10k-labels-idx1-ubyte"), test_labels)
    print(f"wrote {train_rows}+{val_rows} train rows and {args.test_rows} test rows to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
