"""Locating and loading the MNIST source files."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .idx_io import load_idx, save_idx

ENV_VAR = "MNIST_FRACTION_DATA"

FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "t10k": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class MnistNotFound(FileNotFoundError):
    pass


def resolve_mnist_dir(mnist_dir: str | os.PathLike | None = None) -> Path:
    if mnist_dir is None:
        mnist_dir = os.environ.get(ENV_VAR)
    if not mnist_dir:
        raise MnistNotFound(f"no MNIST directory given (use --mnist-dir or set {ENV_VAR})")
    path = Path(mnist_dir)
    if not (path / FILES["train"][0]).exists():
        raise MnistNotFound(f"{path} does not contain {FILES['train'][0]}")
    return path


def load_mnist(mnist_dir=None, kind: str = "train") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(images [N,28,28] uint8, labels [N] uint8)`` for one MNIST split.

    ``kind`` is ``"train"``, ``"t10k"`` or ``"all"`` (both concatenated).
    """
    path = resolve_mnist_dir(mnist_dir)
    if kind == "all":
        parts = [load_mnist(path, k) for k in ("train", "t10k") if (path / FILES[k][0]).exists()]
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
    img_name, lbl_name = FILES[kind]
    images = load_idx(path / img_name)
    labels = load_idx(path / lbl_name)
    if images.ndim != 3 or labels.ndim != 1 or len(images) != len(labels):
        raise ValueError(f"malformed MNIST {kind} files in {path}")
    if labels.max(initial=0) > 9:
        raise ValueError("MNIST labels must lie in 0..9")
    return images, labels


def write_sample_mnist(out_dir, test_per_class: int = 50, seed: int = 0) -> Path:
    """Write the 5,000-digit MNIST excerpt shipped with ``mlxtend`` as IDX files.

    A stratified ``test_per_class`` images per digit go to the t10k files, the
    rest to the train files. Intended for tests and demos when the full MNIST
    download is unavailable.
    """
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    images = X.reshape(-1, 28, 28).astype(np.uint8)
    labels = y.astype(np.uint8)
    rng = np.random.default_rng(seed)
    test_idx = np.sort(np.concatenate([
        rng.choice(np.flatnonzero(labels == d), size=test_per_class, replace=False)
        for d in range(10)
    ]))
    train_mask = np.ones(len(labels), dtype=bool)
    train_mask[test_idx] = False
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for kind, sel in (("train", train_mask), ("t10k", ~train_mask)):
        img_name, lbl_name = FILES[kind]
        save_idx(out / img_name, images[sel])
        save_idx(out / lbl_name, labels[sel])
    return out
