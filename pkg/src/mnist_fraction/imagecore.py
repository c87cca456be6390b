"""Grayscale raster primitives.

Images are plain 2-D ``uint8`` numpy arrays indexed ``[y, x]`` (height first).
Every function returns a new array and never mutates its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


class OutOfBounds(ValueError):
    pass


class TargetTooSmall(ValueError):
    pass


def check_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if img.dtype != np.uint8:
        if img.size and (img.min() < 0 or img.max() > 255):
            raise ValueError("pixel values must lie in 0..255")
        img = img.astype(np.uint8)
    return img


def invert(img) -> np.ndarray:
    return 255 - check_image(img)


def transpose(img) -> np.ndarray:
    return np.ascontiguousarray(check_image(img).T)


def _bilinear_axis(n_in: int, n_out: int):
    # pixel-center alignment, clamped at the borders
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize(img, new_w: int, new_h: int, method: str = "bilinear") -> np.ndarray:
    img = check_image(img)
    if new_w < 1 or new_h < 1:
        raise ValueError("target size must be at least 1x1")
    h, w = img.shape
    if (new_w, new_h) == (w, h):
        return img.copy()
    if method == "nearest":
        ys = np.minimum(((np.arange(new_h) + 0.5) * (h / new_h)).astype(np.intp), h - 1)
        xs = np.minimum(((np.arange(new_w) + 0.5) * (w / new_w)).astype(np.intp), w - 1)
        return img[np.ix_(ys, xs)]
    if method != "bilinear":
        raise ValueError(f"unknown resize method {method!r}")
    src = img.astype(np.float64)
    y0, y1, fy = _bilinear_axis(h, new_h)
    x0, x1, fx = _bilinear_axis(w, new_w)
    top = src[y0] * (1 - fy)[:, None] + src[y1] * fy[:, None]
    out = top[:, x0] * (1 - fx) + top[:, x1] * fx
    return np.floor(out + 0.5).clip(0, 255).astype(np.uint8)


def deskew(img) -> np.ndarray:
    """Shear rows horizontally so the stroke's principal axis is vertical.

    The shear factor is ``mu11 / mu02`` from the intensity-weighted second
    moments; rows are resampled by linear interpolation about the centroid.
    """
    img = check_image(img)
    w = img.astype(np.float64)
    total = w.sum()
    if total == 0:
        return img.copy()
    ys, xs = np.indices(img.shape)
    cx, cy = (w * xs).sum() / total, (w * ys).sum() / total
    mu02 = (w * (ys - cy) ** 2).sum()
    if mu02 == 0:
        return img.copy()
    skew = (w * (xs - cx) * (ys - cy)).sum() / mu02
    grid = np.arange(img.shape[1], dtype=np.float64)
    out = np.empty_like(w)
    for y in range(img.shape[0]):
        out[y] = np.interp(grid + skew * (y - cy), grid, w[y], left=0.0, right=0.0)
    return np.floor(out + 0.5).clip(0, 255).astype(np.uint8)


def paste_max(canvas, src, x: int, y: int) -> np.ndarray:
    """Blend ``src`` into ``canvas`` at offset (x, y) with a per-pixel maximum."""
    canvas = check_image(canvas)
    src = check_image(src)
    h, w = src.shape
    if x < 0 or y < 0 or x + w > canvas.shape[1] or y + h > canvas.shape[0]:
        raise OutOfBounds(
            f"{w}x{h} source at ({x},{y}) exceeds {canvas.shape[1]}x{canvas.shape[0]} canvas"
        )
    out = canvas.copy()
    np.maximum(out[y:y + h, x:x + w], src, out=out[y:y + h, x:x + w])
    return out


def pad_center(img, width: int, height: int, fill: int = 0) -> np.ndarray:
    img = check_image(img)
    h, w = img.shape
    if width < w or height < h:
        raise TargetTooSmall(f"cannot center {w}x{h} inside {width}x{height}")
    out = np.full((height, width), fill, dtype=np.uint8)
    ox, oy = (width - w) // 2, (height - h) // 2
    out[oy:oy + h, ox:ox + w] = img
    return out


def binarize(img, threshold: int = 128) -> np.ndarray:
    """Foreground mask of dark pixels (strict ``< threshold``)."""
    if not 0 <= threshold <= 255:
        raise ValueError("threshold must lie in 0..255")
    return check_image(img) < threshold


def nonzero_bbox(mask) -> tuple[int, int, int, int] | None:
    """Inclusive (x0, y0, x1, y1) of the truthy pixels, or None."""
    mask = np.asarray(mask, dtype=bool)
    ys = np.flatnonzero(mask.any(axis=1))
    if ys.size == 0:
        return None
    xs = np.flatnonzero(mask.any(axis=0))
    return int(xs[0]), int(ys[0]), int(xs[-1]), int(ys[-1])


@dataclass(frozen=True)
class Component:
    id: int
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    pixel_count: int
    centroid: tuple[float, float]  # (x, y)

    @property
    def width(self) -> int:
        return self.bbox[2] - self.bbox[0] + 1

    @property
    def height(self) -> int:
        return self.bbox[3] - self.bbox[1] + 1


@dataclass(frozen=True)
class ComponentSet:
    label_map: np.ndarray
    components: tuple[Component, ...]

    def __len__(self):
        return len(self.components)

    def mask(self, component_id: int) -> np.ndarray:
        return self.label_map == component_id


_EIGHT = np.ones((3, 3), dtype=bool)
_FOUR = ndimage.generate_binary_structure(2, 1)


def connected_components(mask, connectivity: int = 8) -> ComponentSet:
    """Label foreground regions; ids run from 1 in order of centroid x (then y)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    raw, n = ndimage.label(mask, structure=_EIGHT if connectivity == 8 else _FOUR)
    if n == 0:
        return ComponentSet(np.zeros(mask.shape, dtype=np.int32), ())
    idx = np.arange(1, n + 1)
    counts = ndimage.sum_labels(np.ones_like(raw), raw, idx).astype(int)
    cy, cx = np.asarray(ndimage.center_of_mass(mask, raw, idx)).T
    slices = ndimage.find_objects(raw)
    order = np.lexsort((cy, cx))  # primary key: centroid x
    remap = np.zeros(n + 1, dtype=np.int32)
    remap[idx[order]] = np.arange(1, n + 1, dtype=np.int32)
    comps = []
    for new_id, old in enumerate(order, start=1):
        sy, sx = slices[old]
        comps.append(Component(
            id=new_id,
            bbox=(sx.start, sy.start, sx.stop - 1, sy.stop - 1),
            pixel_count=int(counts[old]),
            centroid=(float(cx[old]), float(cy[old])),
        ))
    return ComponentSet(remap[raw], tuple(comps))
