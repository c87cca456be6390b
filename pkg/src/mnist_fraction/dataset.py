"""The 11-class dataset: storage, stratified splitting and augmentation."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .fraction_gen import SampleRecord
from .idx_io import load_idx, save_idx

N_CLASSES = 11
IMAGES_FILE = "images-idx3-ubyte"
LABELS_FILE = "labels-idx1-ubyte"
MANIFEST_FILE = "manifest.jsonl"


class ClassTooSmall(ValueError):
    pass


@dataclass
class LabeledDataset:
    images: np.ndarray  # [N, 56, 56] uint8, black strokes on white
    labels: np.ndarray  # [N] in 0..10
    manifest: list[SampleRecord] | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3 or len(self.images) != len(self.labels):
            raise ValueError("images must be [N,H,W] and aligned with labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise ValueError("labels must lie in 0..10")
        if self.manifest is not None and len(self.manifest) != len(self.labels):
            raise ValueError("manifest length differs from the image count")

    def __len__(self):
        return len(self.labels)

    @property
    def features(self) -> np.ndarray:
        """Flattened images scaled to [0, 1] (float32)."""
        return self.images.reshape(len(self.images), -1).astype(np.float32) / 255.0

    def subset(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.intp)
        man = [self.manifest[i] for i in indices] if self.manifest is not None else None
        return LabeledDataset(self.images[indices], self.labels[indices], man)

    def save(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_idx(out / IMAGES_FILE, self.images)
        save_idx(out / LABELS_FILE, self.labels.astype(np.uint8))
        if self.manifest is not None:
            write_manifest(out / MANIFEST_FILE, self.manifest)
        return out

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        path = Path(path)
        man_path = path / MANIFEST_FILE
        manifest = read_manifest(man_path) if man_path.exists() else None
        return cls(load_idx(path / IMAGES_FILE), load_idx(path / LABELS_FILE), manifest)


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_manifest(path) -> list[SampleRecord]:
    with open(path, encoding="utf-8") as fh:
        return [SampleRecord.from_json(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int | None = None

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "train": self.train.tolist(),
                           "val": self.val.tolist(), "test": self.test.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "SplitIndices":
        d = json.loads(text)
        return cls(*(np.asarray(d[k], dtype=np.int64) for k in ("train", "val", "test")),
                   seed=d.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "SplitIndices":
        return cls.from_json(Path(path).read_text())


def largest_remainder(n: int, ratios) -> list[int]:
    """Integer allotment of ``n`` by ``ratios``; remainder ties go to the earlier part."""
    quotas = [Fraction(r).limit_denominator(10**6) * n for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    left = n - sum(sizes)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def stratified_split(labels, ratios=(0.70, 0.15, 0.15), seed: int = 0) -> SplitIndices:
    labels = np.asarray(labels)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ValueError("ratios must be three non-negative numbers summing to 1")
    rng = np.random.default_rng(seed)
    parts = ([], [], [])
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.size < 3:
            raise ClassTooSmall(f"class {c} has {idx.size} members, need >= 3")
        idx = idx[rng.permutation(idx.size)]
        start = 0
        for part, size in zip(parts, largest_remainder(idx.size, ratios)):
            part.append(idx[start:start + size])
            start += size
    train, val, test = (np.sort(np.concatenate(p)) if p else np.empty(0, np.int64) for p in parts)
    return SplitIndices(train, val, test, seed)


@dataclass(frozen=True)
class AugmentParams:
    zoom_range: float = 0.05
    h_shift_max: float = 0.05
    v_shift_max: float = 0.05
    fill: int = 255

    def __post_init__(self):
        for name in ("zoom_range", "h_shift_max", "v_shift_max"):
            if not 0 <= getattr(self, name) <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5]")


NO_AUGMENT = AugmentParams(0.0, 0.0, 0.0)


def affine_sample(img, zoom: float, dx: int, dy: int, fill: int = 255) -> np.ndarray:
    """Scale ``img`` by ``zoom`` about its center, then shift by (dx, dy) pixels."""
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    if zoom == 1.0:
        out = np.full_like(img, fill)
        src_x0, dst_x0 = max(0, -dx), max(0, dx)
        src_y0, dst_y0 = max(0, -dy), max(0, dy)
        ww, hh = w - abs(dx), h - abs(dy)
        if ww > 0 and hh > 0:
            out[dst_y0:dst_y0 + hh, dst_x0:dst_x0 + ww] = img[src_y0:src_y0 + hh, src_x0:src_x0 + ww]
        return out
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    xs = (np.arange(w) - dx - cx) / zoom + cx
    ys = (np.arange(h) - dy - cy) / zoom + cy
    gx, gy = np.meshgrid(xs, ys)
    inside = (gx > -0.5) & (gx < w - 0.5) & (gy > -0.5) & (gy < h - 0.5)
    gx = np.clip(gx, 0, w - 1)
    gy = np.clip(gy, 0, h - 1)
    x0 = np.floor(gx).astype(np.intp)
    y0 = np.floor(gy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx, fy = gx - x0, gy - y0
    src = img.astype(np.float64)
    val = (src[y0, x0] * (1 - fx) * (1 - fy) + src[y0, x1] * fx * (1 - fy)
           + src[y1, x0] * (1 - fx) * fy + src[y1, x1] * fx * fy)
    val = np.where(inside, val, fill)
    return np.floor(val + 0.5).clip(0, 255).astype(np.uint8)


def augment(img, p: AugmentParams, rng) -> np.ndarray:
    """Random zoom plus integer horizontal/vertical shift; vacated pixels get ``p.fill``."""
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    zoom = 1.0 + rng.uniform(-p.zoom_range, p.zoom_range) if p.zoom_range else 1.0
    dx = int(round(rng.uniform(-p.h_shift_max * w, p.h_shift_max * w))) if p.h_shift_max else 0
    dy = int(round(rng.uniform(-p.v_shift_max * h, p.v_shift_max * h))) if p.v_shift_max else 0
    return affine_sample(img, zoom, dx, dy, p.fill)


def augment_batch(images, p: AugmentParams, rng) -> np.ndarray:
    if p == NO_AUGMENT or (p.zoom_range == p.h_shift_max == p.v_shift_max == 0):
        return np.asarray(images, dtype=np.uint8).copy()
    return np.stack([augment(im, p, rng) for im in images])
