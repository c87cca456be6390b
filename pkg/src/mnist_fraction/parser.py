"""Read a fraction (or a lone digit) from an image as an exact rational.

Images are in dataset polarity: dark strokes on a white background. The
pipeline is deterministic: binarize, label 8-connected components, find the
bar, assign the rest above/below it, clean up fragments, normalize each
glyph to an MNIST-like 28x28 tile and classify it with a digit model.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol

import numpy as np
from scipy import ndimage

from . import imagecore as ic

BAR_MIN_ASPECT = 2.5
BAR_MIN_REL_WIDTH = 0.4
SPLIT_ASPECT = 1.6
MERGE_GAP = 1
SPECK_FRACTION = 0.1
GLYPH_SIZE = 28
GLYPH_BOX = 20


class ParseError(ValueError):
    pass


class EmptyImage(ParseError):
    pass


class EmptyNumerator(ParseError):
    pass


class EmptyDenominator(ParseError):
    pass


class AmbiguousComponent(ParseError):
    pass


class ZeroDenominator(ParseError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class Rational:
    """A fraction exactly as written; ``3/6`` is not reduced."""
    numerator: int
    denominator: int

    def __post_init__(self):
        if self.numerator < 0:
            raise ValueError("numerator must be non-negative")
        if self.denominator < 1:
            raise ValueError("denominator must be positive")

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __str__(self):
        return f"{self.numerator}/{self.denominator}"


@dataclass
class ParseResult:
    kind: str  # "fraction" or "digit"
    rational: Rational | None = None
    label: int | None = None
    confidences: list[float] = field(default_factory=list)
    bar_bbox: tuple | None = None
    numerator_boxes: list[tuple] = field(default_factory=list)
    denominator_boxes: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        if self.kind == "fraction" and (not self.numerator_boxes or not self.denominator_boxes):
            raise ValueError("a fraction needs numerator and denominator glyphs")

    def to_dict(self) -> dict:
        if self.kind == "fraction":
            num, den = self.rational.numerator, self.rational.denominator
        else:
            num, den = self.label, 1
        return {
            "kind": self.kind,
            "numerator": num,
            "denominator": den,
            "value": num / den,
            "confidences": [round(c, 6) for c in self.confidences],
            "bboxes": {
                "bar": list(self.bar_bbox) if self.bar_bbox else None,
                "numerator": [list(b) for b in self.numerator_boxes],
                "denominator": [list(b) for b in self.denominator_boxes],
            },
        }


# -- digit models ----------------------------------------------------------

class DigitModel(Protocol):
    def predict_glyphs(self, glyphs: np.ndarray, boxes: list) -> np.ndarray:
        """Scores ``[n, >=10]`` for uint8 glyphs ``[n, 28, 28]``; column d is digit d."""


class EstimatorDigitModel:
    """Adapter for any classifier with ``predict_proba`` on flattened pixels.

    Glyphs are pad-centered (white fill) to ``canvas`` before flattening, so a
    model trained on the 56x56 dataset sees the same framing as its digits.
    """

    def __init__(self, estimator, canvas: int = 56):
        self.estimator = estimator
        self.canvas = canvas

    def predict_glyphs(self, glyphs, boxes=None):
        tiles = [ic.pad_center(g, self.canvas, self.canvas, fill=255) for g in glyphs]
        X = np.stack(tiles).reshape(len(tiles), -1).astype(np.float32) / 255.0
        proba = self.estimator.predict_proba(X)
        out = np.zeros((len(glyphs), 10))
        for col, c in enumerate(np.asarray(self.estimator.classes_)):
            if 0 <= int(c) <= 9:
                out[:, int(c)] = proba[:, col]
        return out


class CallableDigitModel:
    def __init__(self, fn):
        self.fn = fn

    def predict_glyphs(self, glyphs, boxes=None):
        return np.asarray(self.fn(glyphs))


def box_iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0]) + 1
    iy = min(a[3], b[3]) - max(a[1], b[1]) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area = lambda r: (r[2] - r[0] + 1) * (r[3] - r[1] + 1)
    return inter / (area(a) + area(b) - inter)


class OracleDigitModel:
    """Answers with the generation-time label of the best-overlapping glyph box.

    Isolates segmentation from classification: a glyph split in two, or two
    glyphs merged, still produces the wrong digit string.
    """

    def __init__(self, record):
        self.record = record

    def predict_glyphs(self, glyphs, boxes):
        out = np.zeros((len(glyphs), 10))
        if self.record.structure == "digit":
            out[:, self.record.label] = 1.0
            return out
        truth = self.record.layout["canvas_glyph_boxes"]
        digits = self.record.digits
        for i, box in enumerate(boxes):
            ious = [box_iou(box, t) for t in truth]
            out[i, digits[int(np.argmax(ious))]] = 1.0
        return out


def as_digit_model(model) -> DigitModel:
    if hasattr(model, "predict_glyphs"):
        return model
    if hasattr(model, "predict_proba"):
        return EstimatorDigitModel(model)
    if callable(model):
        return CallableDigitModel(model)
    raise TypeError("digit model needs predict_glyphs, predict_proba, or to be callable")


# -- geometry --------------------------------------------------------------

@dataclass
class _Glyph:
    mask: np.ndarray  # full-image boolean mask

    @property
    def bbox(self):
        return ic.nonzero_bbox(self.mask)

    @property
    def pixel_count(self) -> int:
        return int(self.mask.sum())

    @property
    def centroid_x(self) -> float:
        return float(np.nonzero(self.mask)[1].mean())


def locate_fraction_bar(img):
    """Bounding box ``(x0, y0, x1, y1)`` of the fraction bar, or ``None``."""
    img = ic.check_image(img)
    comps = ic.connected_components(ic.binarize(img, 128))
    best = None
    for c in comps.components:
        if c.width / c.height >= BAR_MIN_ASPECT and c.width >= BAR_MIN_REL_WIDTH * img.shape[1]:
            if best is None or c.width > best.width:
                best = c
    return None if best is None else best.bbox


def _merge_fragments(glyphs: list[_Glyph]) -> list[_Glyph]:
    """Union pieces whose x-extents overlap or sit at most ``MERGE_GAP`` columns apart.

    Digits in one row are separated by blank columns, while a stroke broken
    by downscaling leaves fragments stacked over the same columns.
    """
    merged: list[_Glyph] = []
    right = None
    for g in sorted(glyphs, key=lambda g: g.bbox[0]):
        x0, _, x1, _ = g.bbox
        if merged and x0 <= right + 1 + MERGE_GAP:
            merged[-1] = _Glyph(merged[-1].mask | g.mask)
            right = max(right, x1)
        else:
            merged.append(_Glyph(g.mask))
            right = x1
    return merged


def _split_wide(g: _Glyph, depth: int = 0) -> list[_Glyph]:
    """Cut a component wider than 1.6x its height at its thinnest column."""
    x0, y0, x1, y1 = g.bbox
    w, h = x1 - x0 + 1, y1 - y0 + 1
    if w <= SPLIT_ASPECT * h or depth >= 3:
        return [g]
    profile = g.mask[:, x0:x1 + 1].sum(axis=0)
    lo, hi = w // 4, w - w // 4
    cut = x0 + lo + int(np.argmin(profile[lo:hi]))
    left = g.mask.copy()
    left[:, cut:] = False
    right = g.mask.copy()
    right[:, :cut] = False
    pieces = [p for p in (_Glyph(left), _Glyph(right)) if p.pixel_count]
    return [q for p in pieces for q in _split_wide(p, depth + 1)]


def _beside_bar(box, bar) -> bool:
    """True when at most half of ``box``'s width lies over the bar's columns."""
    overlap = min(box[2], bar[2]) - max(box[0], bar[0]) + 1
    return overlap <= 0.5 * (box[2] - box[0] + 1)


def segment_fraction(img, bar_bbox):
    """Split the image around the bar into ``(numerator, denominator)`` glyph lists.

    Each glyph is ``(tile, bbox)``: a 28x28 uint8 tile in dataset polarity and
    its bounding box in image coordinates, ordered left to right.
    """
    img = ic.check_image(img)
    comps = ic.connected_components(ic.binarize(img, 128))
    bx0, by0, bx1, by1 = bar_bbox
    above, below = [], []
    for c in comps.components:
        if c.bbox == tuple(bar_bbox):
            continue
        cy = c.centroid[1]
        if cy < by0:
            above.append(_Glyph(comps.mask(c.id)))
        elif cy > by1:
            below.append(_Glyph(comps.mask(c.id)))
        elif _beside_bar(c.bbox, bar_bbox) or (c.bbox[1] >= by0 - 1 and c.bbox[3] <= by1 + 1):
            continue  # a detached piece of the bar itself
        else:
            raise AmbiguousComponent(f"component at {c.bbox} straddles the bar")
    regions = []
    for region in (above, below):
        glyphs = [p for g in _merge_fragments(region) for p in _split_wide(g)]
        regions.append(glyphs)
    largest = max((g.pixel_count for r in regions for g in r), default=0)
    regions = [[g for g in r if g.pixel_count >= SPECK_FRACTION * largest] for r in regions]
    if not regions[0]:
        raise EmptyNumerator("nothing above the bar")
    if not regions[1]:
        raise EmptyDenominator("nothing below the bar")
    ink = 255 - img
    out = []
    for r in regions:
        r = sorted(r, key=lambda g: g.centroid_x)
        out.append([(normalize_glyph(ink, g.mask), g.bbox) for g in r])
    return out[0], out[1]


_DILATE = np.ones((3, 3), dtype=bool)


def normalize_glyph(ink, mask) -> np.ndarray:
    """MNIST-style tile: the glyph scaled to fit 20x20, centered in 28x28, dark on white.

    ``ink`` is stroke intensity (255 - image); ``mask`` selects the glyph. The
    mask is grown by one pixel to keep anti-aliased edges.
    """
    grown = ndimage.binary_dilation(mask, structure=_DILATE) & (ink > 0)
    x0, y0, x1, y1 = ic.nonzero_bbox(grown)
    crop = np.where(grown, ink, 0)[y0:y1 + 1, x0:x1 + 1].astype(np.uint8)
    side = max(crop.shape)
    square = ic.pad_center(crop, side, side, fill=0)
    scaled = ic.resize(square, GLYPH_BOX, GLYPH_BOX, "bilinear")
    return ic.invert(ic.pad_center(scaled, GLYPH_SIZE, GLYPH_SIZE, fill=0))


def _pick(scores: np.ndarray) -> tuple[int, float]:
    """Argmax over digits 0-9, with confidence renormalized over those classes."""
    s = np.asarray(scores[:10], dtype=np.float64)
    d = int(np.argmax(s))
    total = s.sum()
    return d, float(s[d] / total) if total > 0 else 0.0


def decode_fraction(img, digit_model) -> ParseResult:
    """Parse ``img`` into a :class:`ParseResult`.

    Without a bar the whole image is read as a single digit.
    """
    img = ic.check_image(img)
    model = as_digit_model(digit_model)
    bar = locate_fraction_bar(img)
    if bar is None:
        mask = ic.binarize(img, 128)
        if not mask.any():
            raise EmptyImage("no ink in image")
        box = ic.nonzero_bbox(mask)
        tile = normalize_glyph(255 - img, mask)
        label, conf = _pick(model.predict_glyphs(tile[None], [box])[0])
        return ParseResult("digit", label=label, confidences=[conf], numerator_boxes=[box])
    num, den = segment_fraction(img, bar)
    glyphs = num + den
    scores = model.predict_glyphs(np.stack([t for t, _ in glyphs]), [b for _, b in glyphs])
    picks = [_pick(s) for s in scores]
    digits = [d for d, _ in picks]
    to_int = lambda ds: int("".join(map(str, ds)))
    n, d = to_int(digits[:len(num)]), to_int(digits[len(num):])
    kwargs = dict(confidences=[c for _, c in picks], bar_bbox=bar,
                  numerator_boxes=[b for _, b in num], denominator_boxes=[b for _, b in den])
    if d == 0:
        raise ZeroDenominator(f"denominator decoded as {digits[len(num):]}",
                              ParseResult("fraction", **kwargs))
    return ParseResult("fraction", rational=Rational(n, d), **kwargs)
