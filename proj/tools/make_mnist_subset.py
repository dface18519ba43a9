#!/usr/bin/env python3
"""Convert the 5,000-image MNIST sample bundled with mlxtend into gzipped IDX files.

Writes a stratified split (400 train / 100 test images per digit) so the
harness can read it with the regular IDX loader.

    pip download --no-deps -d /tmp/whl mlxtend
    python3 tools/make_mnist_subset.py /tmp/whl/mlxtend-*.whl data/mnist5k
"""
import argparse
import gzip
import random
import struct
import sys
import zipfile
from pathlib import Path

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def write_idx(path: Path, magic: int, dims, payload: bytes) -> None:
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the archives byte-reproducible.
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
        gz.write(header + payload)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("wheel")
    ap.add_argument("out_dir")
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2018)
    args = ap.parse_args()

    rows = gzip.decompress(zipfile.ZipFile(args.wheel).read(CSV_MEMBER)).decode().splitlines()
    by_class = {}
    for line in rows:
        vals = [int(v) for v in line.split(",")]
        by_class.setdefault(vals[-1], []).append(vals[:-1])

    rng = random.Random(args.seed)
    train, test = [], []
    for label in sorted(by_class):
        imgs = by_class[label]
        rng.shuffle(imgs)
        test += [(img, label) for img in imgs[: args.test_per_class]]
        train += [(img, label) for img in imgs[args.test_per_class :]]
    rng.shuffle(train)
    rng.shuffle(test)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, split in (("train", train), ("t10k", test)):
        pixels = bytes(p for img, _ in split for p in img)
        labels = bytes(label for _, label in split)
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x00000803, (len(split), 28, 28), pixels)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x00000801, (len(split),), labels)
        print(f"{name}: {len(split)} images", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
