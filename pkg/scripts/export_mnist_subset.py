"""Write the 5000-digit MNIST subset bundled with mlxtend as IDX files.

    python scripts/export_mnist_subset.py data/mnist

Produces mnist5k-images-idx3-ubyte and mnist5k-labels-idx1-ubyte (500 digits
per class), which the CLI and the acceptance tests read like any MNIST IDX
pair.  Real MNIST files can be used instead; point the config at them.
"""

import argparse
from pathlib import Path

import numpy as np

from hwl4f.dataset import encode_idx

IMAGES_NAME = "mnist5k-images-idx3-ubyte"
LABELS_NAME = "mnist5k-labels-idx1-ubyte"


def export(out_dir: Path) -> tuple[Path, Path]:
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    images = np.asarray(X, dtype=np.uint8).reshape(-1, 28, 28)
    labels = np.asarray(y, dtype=np.uint8)
    out_dir.mkdir(parents=True, exist_ok=True)
    img_path, lbl_path = out_dir / IMAGES_NAME, out_dir / LABELS_NAME
    img_path.write_bytes(encode_idx(images))
    lbl_path.write_bytes(encode_idx(labels))
    return img_path, lbl_path


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path, nargs="?", default=Path("data/mnist"))
    args = ap.parse_args()
    for p in export(args.out_dir):
        print(p)
