"""Shared fixtures.

The MNIST source is taken from ``$MNIST_FRACTION_DATA`` when set; otherwise
the 5,000-digit excerpt bundled with mlxtend is written to a temp directory.
"""
from __future__ import annotations

import os

import numpy as np
import pytest

from mnist_fraction.data import ENV_VAR, load_mnist, resolve_mnist_dir, write_sample_mnist
from mnist_fraction.dataset import LabeledDataset
from mnist_fraction.fraction_gen import DigitPool, GenerationConfig, generate_dataset


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    env = os.environ.get(ENV_VAR)
    if env:
        try:
            return resolve_mnist_dir(env)
        except FileNotFoundError:
            pass
    pytest.importorskip("mlxtend")
    return write_sample_mnist(tmp_path_factory.mktemp("mnist"))


@pytest.fixture(scope="session")
def mnist_train(mnist_dir):
    return load_mnist(mnist_dir, "train")


@pytest.fixture(scope="session")
def mnist_t10k(mnist_dir):
    return load_mnist(mnist_dir, "t10k")


@pytest.fixture(scope="session")
def train_pool(mnist_train):
    return DigitPool(*mnist_train)


@pytest.fixture(scope="session")
def heldout_pool(mnist_t10k):
    return DigitPool(*mnist_t10k)


@pytest.fixture(scope="session")
def tiny_dataset(mnist_train):
    """30 samples per class (330 total) with manifest."""
    cfg = GenerationConfig.desk_scale(per_class=30, master_seed=3)
    images, manifest = generate_dataset(cfg, *mnist_train)
    return LabeledDataset(images, [r.label for r in manifest], manifest)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
