"""Convert the digit JSON files of the ``mnist`` npm package to IDX.

The package ships 10,000 digits as per-class JSON arrays of 784-pixel
vectors scaled to [0, 1].  They are shuffled with a fixed seed and split
into disjoint train / t10k IDX files, in the standard MNIST file names.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_from_npm.py package/src/digits /data/mnist10k
"""

import argparse
import json
from pathlib import Path

import numpy as np

from concurrent_har.data.ingest import ImageSet, save_mnist


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir")
    ap.add_argument("out")
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    images, labels = [], []
    for digit in range(10):
        flat = np.asarray(json.loads((Path(args.digits_dir) / f"{digit}.json").read_text())["data"])
        if flat.size % 784:
            raise SystemExit(f"{digit}.json: {flat.size} values is not a multiple of 784")
        block = np.round(flat.reshape(-1, 28, 28) * 255).astype(np.uint8)
        images.append(block)
        labels.append(np.full(len(block), digit, np.uint8))
    images, labels = np.concatenate(images), np.concatenate(labels)
    order = np.random.default_rng(args.seed).permutation(len(labels))
    test, train = order[: args.test], order[args.test :]
    save_mnist(args.out, ImageSet(images[train, ..., None], labels[train]), "train")
    save_mnist(args.out, ImageSet(images[test, ..., None], labels[test]), "test")
    print(f"{len(train)} train / {len(test)} test digits written to {args.out}")


if __name__ == "__main__":
    main()
