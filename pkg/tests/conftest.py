import os
from pathlib import Path

import hypothesis
import numpy as np
import pytest

np.seterr(all="warn", under="ignore")

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

REPO = Path(__file__).resolve().parents[1]
IMAGES_NAME = "mnist5k-images-idx3-ubyte"
LABELS_NAME = "mnist5k-labels-idx1-ubyte"


def _find_mnist(tmp_factory):
    """IDX pair from $HWL4F_MNIST_DIR, data/mnist, or exported from mlxtend."""
    env = os.environ.get("HWL4F_MNIST_DIR")
    candidates = [Path(env)] if env else []
    candidates.append(REPO / "data" / "mnist")
    for d in candidates:
        for img, lbl in ((IMAGES_NAME, LABELS_NAME),
                         ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
                         ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz")):
            if (d / img).exists() and (d / lbl).exists():
                return d / img, d / lbl
    try:
        from mlxtend.data import mnist_data
    except ImportError:
        return None
    from hwl4f.dataset import encode_idx

    X, y = mnist_data()
    out = tmp_factory.mktemp("mnist")
    (out / IMAGES_NAME).write_bytes(encode_idx(np.asarray(X, np.uint8).reshape(-1, 28, 28)))
    (out / LABELS_NAME).write_bytes(encode_idx(np.asarray(y, np.uint8)))
    return out / IMAGES_NAME, out / LABELS_NAME


@pytest.fixture(scope="session")
def mnist_paths(tmp_path_factory):
    found = _find_mnist(tmp_path_factory)
    if found is None:
        pytest.skip("no MNIST IDX files (set HWL4F_MNIST_DIR or install mlxtend)")
    return found


@pytest.fixture(scope="session")
def mnist(mnist_paths):
    from hwl4f.dataset import load_mnist

    return load_mnist(*mnist_paths)


@pytest.fixture(scope="session")
def mnist_split(mnist):
    from hwl4f.dataset import subsample

    return subsample(*mnist, train_n=600, test_n=100, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
