#!/usr/bin/env python3
"""Write the 5000-image MNIST subset bundled with mlxtend as gzipped IDX files.

The subset has 500 images per digit. A seeded stratified split puts 400 per
digit in the training files and 100 per digit in the t10k files.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/make_mnist5k.py /tmp/mlx/mlxtend-*.whl data/mnist5k
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np


def read_subset(wheel):
    with zipfile.ZipFile(wheel) as zf:
        raw = zf.read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    return table[:, :-1].astype(np.uint8), table[:, -1].astype(np.uint8)


def write_idx(path, magic, array):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    # mtime=0 keeps the output byte-stable across runs.
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as out:
        out.write(header + array.tobytes())


def main():
    wheel, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    images, labels = read_subset(wheel)
    rng = np.random.default_rng(2023)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = rng.permutation(np.flatnonzero(labels == digit))
        train_idx.extend(idx[:400])
        test_idx.extend(idx[400:])
    for prefix, idx in (("train", train_idx), ("t10k", test_idx)):
        idx = rng.permutation(np.array(idx))
        write_idx(out_dir / f"{prefix}-images-idx3-ubyte.gz", 0x00000803,
                  images[idx].reshape(-1, 28, 28))
        write_idx(out_dir / f"{prefix}-labels-idx1-ubyte.gz", 0x00000801, labels[idx])


if __name__ == "__main__":
    main()
