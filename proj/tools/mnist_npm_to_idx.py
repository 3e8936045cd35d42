#!/usr/bin/env python3
"""Convert the digits bundled with the `mnist` npm package into IDX files.

The npm package (https://www.npmjs.com/package/mnist) ships 10,000 MNIST
digits as per-class JSON arrays of 28x28 pixels scaled to [0, 1]. This script
rescales them to u8, interleaves the classes with a fixed permutation and
writes a train/test split as gzipped IDX files that `dkm` reads directly.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_npm_to_idx.py package/src/digits data/mnist-10k
"""
import argparse
import gzip
import json
import pathlib
import struct

import numpy as np


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the output byte-identical across runs
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(header)
        f.write(payload.tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--test-count", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        data = json.loads(pathlib.Path(args.digits_dir, f"{digit}.json").read_text())["data"]
        arr = np.asarray(data, dtype=np.float64).reshape(-1, 28, 28)
        images.append(np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8))
        labels.append(np.full(arr.shape[0], digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    perm = np.random.RandomState(args.seed).permutation(images.shape[0])
    images, labels = images[perm], labels[perm]
    n_test = args.test_count
    splits = {
        "train": (images[n_test:], labels[n_test:]),
        "t10k": (images[:n_test], labels[:n_test]),
    }

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, (x, y) in splits.items():
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x00000803, x.shape, x)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x00000801, y.shape, y)
        print(f"{name}: {x.shape[0]} images")


if __name__ == "__main__":
    main()
