import os
from pathlib import Path

import numpy as np
import pytest

MNIST_DIR = Path(os.environ.get("LOSSLAND_MNIST", "/root/data/mnist"))

_ACCEPTANCE_LINES: list[tuple[int, str]] = []


def mnist_available() -> bool:
    names = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte",
             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"]
    return all((MNIST_DIR / n).exists() or (MNIST_DIR / f"{n}.gz").exists()
               for n in names)


def mnist_path(name: str) -> Path:
    plain = MNIST_DIR / name
    return plain if plain.exists() else MNIST_DIR / f"{name}.gz"


needs_mnist = pytest.mark.skipif(
    not mnist_available(),
    reason=f"MNIST IDX files not found under {MNIST_DIR} (set LOSSLAND_MNIST)")


@pytest.fixture(scope="session")
def mnist_train():
    from lossland.mnist import load_idx

    return load_idx(mnist_path("train-images-idx3-ubyte"),
                    mnist_path("train-labels-idx1-ubyte"), split="train")


@pytest.fixture(scope="session")
def mnist_test():
    from lossland.mnist import load_idx

    return load_idx(mnist_path("t10k-images-idx3-ubyte"),
                    mnist_path("t10k-labels-idx1-ubyte"), split="test")


def record_criterion(num: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE_LINES.append(
        (num, f"ACCEPTANCE C{num:<2} {'PASS' if passed else 'FAIL'}  {detail}"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
