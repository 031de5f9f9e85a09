"""Rebuild data/mnist/ from the 5000-image MNIST subset bundled in the mlxtend wheel.

The full MNIST archive is not reachable from every build machine, but the
mlxtend distribution ships 5000 real MNIST digits as CSV.  This script
re-encodes them as standard gzipped IDX files (4000 train / 1000 test) so the
rest of the package only ever sees the canonical format.

    pip download --no-deps mlxtend -d /tmp/mlx
    python scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist
"""

import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

N_TRAIN = 4000


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(header + array.astype(np.uint8).tobytes())


def main(wheel, outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",")
    images = table[:, :-1].reshape(-1, 28, 28)
    labels = table[:, -1]
    # the CSV is sorted by digit; shuffle once so both splits cover all classes
    order = np.random.default_rng(0).permutation(len(labels))
    images, labels = images[order], labels[order]
    splits = {"train": slice(0, N_TRAIN), "t10k": slice(N_TRAIN, None)}
    for prefix, sl in splits.items():
        write_idx(outdir / f"{prefix}-images-idx3-ubyte.gz", images[sl], 2051)
        write_idx(outdir / f"{prefix}-labels-idx1-ubyte.gz", labels[sl], 2049)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
