#!/usr/bin/env python3
"""Convert the 5000-image MNIST sample shipped with mlxtend into IDX files.

The sample holds 500 images per digit. The first 300 of each class go to the
train split and the remaining 200 to the test split. Output files are gzipped
IDX in the layout the default `train_images` / `test_images` config keys expect.

Usage: make_mnist5k.py <mnist_5k.csv.gz> <out_dir>
"""
import gzip
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx(path, images, labels):
    n, h, w = images.shape
    with gzip.GzipFile(path / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())
    with gzip.GzipFile(path / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    src, out = sys.argv[1], Path(sys.argv[2])
    table = np.loadtxt(gzip.open(src), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1].astype(int)
    train_idx, test_idx = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        train_idx.extend(idx[:300])
        test_idx.extend(idx[300:])
    for name, idx in (("train", train_idx), ("test", test_idx)):
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        write_idx(d, images[idx], labels[idx])
        print(f"{name}: {len(idx)} images -> {d}")


if __name__ == "__main__":
    main()
