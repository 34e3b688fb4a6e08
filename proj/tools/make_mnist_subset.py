#!/usr/bin/env python3
"""Convert the 5000-image MNIST subset bundled with mlxtend into gzipped IDX files.

usage: make_mnist_subset.py <mlxtend wheel> <output dir>
"""
import gzip
import struct
import sys
import zipfile

import numpy as np


def main(wheel, out_dir):
    raw = zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(gzip.decompress(raw).decode().splitlines(), delimiter=",")
    pixels = table[:, :-1].astype(np.uint8)
    labels = table[:, -1].astype(np.uint8)
    n = pixels.shape[0]
    # mtime=0 keeps the archives byte-reproducible.
    with gzip.GzipFile(f"{out_dir}/mnist5k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        f.write(pixels.tobytes())
    with gzip.GzipFile(f"{out_dir}/mnist5k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(labels.tobytes())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
