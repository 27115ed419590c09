#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Build a small MNIST split in IDX format from the 5000-sample subset that
ships inside the mlxtend wheel (500 examples per digit).

Usage: make_mnist5k.py <out_dir> [--wheel path/to/mlxtend.whl]

Without --wheel the script runs `pip download mlxtend` into a temp dir.
Output: train-images-idx3-ubyte, train-labels-idx1-ubyte (4000 examples),
t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte (1000 examples). The split
is stratified (400/100 per class) and shuffled with a fixed seed.
"""
import argparse
import glob
import gzip
import random
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def find_wheel(arg):
    if arg:
        return Path(arg)
    tmp = tempfile.mkdtemp()
    subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                           "-d", tmp, "mlxtend"])
    return Path(glob.glob(f"{tmp}/mlxtend-*.whl")[0])


def write_idx(out, images, labels):
    with open(out[0], "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(out[1], "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    ap.add_argument("--wheel")
    args = ap.parse_args()

    rows = gzip.decompress(zipfile.ZipFile(find_wheel(args.wheel)).read(MEMBER))
    by_class = {d: [] for d in range(10)}
    for line in rows.decode().splitlines():
        vals = [int(v) for v in line.split(",")]
        by_class[vals[-1]].append(vals[:-1])

    rng = random.Random(20200101)
    train, test = [], []
    for d in range(10):
        items = by_class[d]
        rng.shuffle(items)
        train += [(img, d) for img in items[:400]]
        test += [(img, d) for img in items[400:]]
    rng.shuffle(train)
    rng.shuffle(test)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx((out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte"),
              [i for i, _ in train], [l for _, l in train])
    write_idx((out / "t10k-images-idx3-ubyte", out / "t10k-labels-idx1-ubyte"),
              [i for i, _ in test], [l for _, l in test])
    print(f"wrote {len(train)} train / {len(test)} test examples to {out}")


if __name__ == "__main__":
    main()
