#!/usr/bin/env python3
"""Convert the digits bundled with the `mnist` npm package into IDX files.

The package stores 10000 MNIST digits as per-class JSON arrays of pixel
intensities rounded to three decimals. round(v * 255) recovers the original
8-bit value exactly, so the output is a plain MNIST-format subset.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/mnist_from_npm.py package/src/digits data/mnist
"""
import gzip
import json
import struct
import sys
from pathlib import Path

SIDE = 28


def main(src: Path, dst: Path) -> None:
    images = bytearray()
    labels = bytearray()
    for digit in range(10):
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        if len(raw) % (SIDE * SIDE) != 0:
            raise SystemExit(f"{digit}.json: length {len(raw)} is not a multiple of 784")
        images.extend(min(255, max(0, round(v * 255))) for v in raw)
        labels.extend([digit] * (len(raw) // (SIDE * SIDE)))

    count = len(labels)
    dst.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the archives byte-stable across regenerations.
    with gzip.GzipFile(dst / "mnist10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, count, SIDE, SIDE))
        f.write(images)
    with gzip.GzipFile(dst / "mnist10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(labels)
    print(f"wrote {count} examples to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    main(Path(sys.argv[1]), Path(sys.argv[2]))
