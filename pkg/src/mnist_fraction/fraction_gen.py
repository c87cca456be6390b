"""Synthetic handwritten fractions composed from MNIST digits.

A fraction is laid out on a working canvas in MNIST polarity (bright strokes on
black): the numerator digit row, a bar made from a handwritten "1" turned on
its side, and the denominator row. Parts are placed using their actual stroke
extents so the numerator always sits above the bar and the denominator below
it, whatever jitter is drawn. The composite is then scaled into the output
canvas (56x56 by default) and inverted to black-on-white.
"""
from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import imagecore as ic

FRACTION_CLASS = 10
STRUCTURES = {"F11": (1, 1), "F12": (1, 2), "F22": (2, 2)}
DIGITS = tuple(range(1, 10))
GLYPH = 28
MIN_SCALE = 0.25


class GenerationError(ValueError):
    pass


class DegenerateExemplar(GenerationError):
    pass


class PoolMissingDigit(GenerationError):
    pass


class LayoutOverflow(GenerationError):
    pass


def derive_seed(master_seed: int, k: int) -> int:
    """Per-sample seed; depends only on (master_seed, k)."""
    return int(np.random.SeedSequence([int(master_seed), int(k)]).generate_state(1, np.uint64)[0])


@dataclass
class FractionSpec:
    structure: str
    numerator_digits: list[int]
    denominator_digits: list[int]
    spacing_px: int = 4
    # (dx, dy) for numerator row, bar, denominator row
    jitter: list[tuple[int, int]] = field(default_factory=lambda: [(0, 0), (0, 0), (0, 0)])
    bar_overhang_px: int = 3
    bar_thickness: int = 14
    sample_seed: int = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}")
        n_num, n_den = STRUCTURES[self.structure]
        if len(self.numerator_digits) != n_num or len(self.denominator_digits) != n_den:
            raise ValueError(f"{self.structure} needs {n_num}/{n_den} digits")
        if any(d not in DIGITS for d in (*self.numerator_digits, *self.denominator_digits)):
            raise ValueError("fraction digits must lie in 1..9")
        if self.spacing_px < 0 or self.bar_overhang_px < 0:
            raise ValueError("spacing and overhang must be non-negative")
        if len(self.jitter) != 3:
            raise ValueError("jitter needs one (dx, dy) per part")
        self.jitter = [tuple(int(v) for v in j) for j in self.jitter]

    @property
    def numerator(self) -> int:
        return int("".join(map(str, self.numerator_digits)))

    @property
    def denominator(self) -> int:
        return int("".join(map(str, self.denominator_digits)))


@dataclass
class SampleRecord:
    id: int
    label: int
    structure: str
    numerator: int | None
    denominator: int | None
    value: str
    exemplars: list[int]
    layout: dict
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        return cls(**json.loads(line))

    @property
    def digits(self) -> list[int]:
        """Ground-truth glyph labels, numerator first, left to right."""
        if self.structure == "digit":
            return [self.label]
        return [*self.layout["numerator_digits"], *self.layout["denominator_digits"]]


@dataclass
class GenerationConfig:
    digits_per_class: int = 0
    f11: int = 0
    f12: int = 0
    f22: int = 0
    master_seed: int = 0
    canvas: tuple[int, int] = (56, 56)
    spacing_range: tuple[int, int] = (2, 6)
    jitter_px: int = 2
    bar_thickness: int = 14
    overhang_range: tuple[int, int] = (2, 5)
    exhaustive: bool = False

    def __post_init__(self):
        self.canvas = tuple(self.canvas)
        self.spacing_range = tuple(self.spacing_range)
        self.overhang_range = tuple(self.overhang_range)
        if min(self.digits_per_class, self.f11, self.f12, self.f22) < 0:
            raise ValueError("counts must be >= 0")
        if self.canvas[0] < 40 or self.canvas[1] < 40:
            raise ValueError("canvas must be at least 40x40")
        if self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        lo, hi = self.spacing_range
        if not 0 <= lo <= hi:
            raise ValueError("bad spacing range")
        lo, hi = self.overhang_range
        if not 0 <= lo <= hi:
            raise ValueError("bad overhang range")
        if self.jitter_px < 0 or self.bar_thickness < 4:
            raise ValueError("bad jitter or bar thickness")

    @property
    def total(self) -> int:
        return 10 * self.digits_per_class + self.f11 + self.f12 + self.f22

    @classmethod
    def full_scale(cls, master_seed: int = 0) -> "GenerationConfig":
        # 103,085 samples; the 70% stratified train share is 72,159
        return cls(digits_per_class=7000, f11=11027, f12=11029, f22=11029,
                   master_seed=master_seed)

    @classmethod
    def desk_scale(cls, per_class: int = 1000, master_seed: int = 0) -> "GenerationConfig":
        third = per_class // 3
        return cls(digits_per_class=per_class, f11=per_class - 2 * third, f12=third,
                   f22=third, master_seed=master_seed)


class DigitPool:
    """MNIST images grouped by label."""

    def __init__(self, images, labels):
        self.images = np.asarray(images, dtype=np.uint8)
        self.labels = np.asarray(labels)
        if self.images.ndim != 3 or len(self.images) != len(self.labels):
            raise ValueError("images must be [N,H,W] aligned with labels")
        self.by_digit = {d: np.flatnonzero(self.labels == d) for d in range(10)}

    def indices(self, digit: int) -> np.ndarray:
        idx = self.by_digit.get(digit)
        if idx is None or idx.size == 0:
            raise PoolMissingDigit(f"no exemplar for digit {digit}")
        return idx

    def draw(self, digit: int, rng) -> int:
        idx = self.indices(digit)
        return int(idx[rng.integers(idx.size)])


def make_fraction_bar(one_exemplar, bar_width: int, bar_thickness: int,
                      straighten: bool = True) -> np.ndarray:
    """Turn a handwritten "1" into a horizontal bar ``bar_thickness`` rows tall.

    The exemplar is transposed and cropped along its length to the stroke
    extent, so the stroke spans the whole bar. With ``straighten`` the "1" is
    first deskewed and only the length is resized; a window of
    ``bar_thickness`` rows centered on the stroke is kept, so the stroke keeps
    its handwritten thickness. Without it the whole image is resized to
    ``bar_width x bar_thickness``.
    """
    img = ic.check_image(one_exemplar)
    if bar_width < 8 or bar_thickness < 4:
        raise ValueError("bar must be at least 8 wide and 4 thick")
    if np.count_nonzero(img) < 20:
        raise DegenerateExemplar("exemplar has fewer than 20 stroke pixels")
    bar = ic.transpose(ic.deskew(img) if straighten else img)
    cols = np.flatnonzero(bar.any(axis=0))
    bar = bar[:, cols[0]:cols[-1] + 1]
    if not straighten:
        return ic.resize(bar, bar_width, bar_thickness, "bilinear")
    bar = ic.resize(bar, bar_width, bar.shape[0], "bilinear")
    if bar.shape[0] < bar_thickness:
        return ic.pad_center(bar, bar_width, bar_thickness, fill=0)
    profile = bar.sum(axis=1, dtype=np.float64)
    center = (profile * np.arange(profile.size)).sum() / profile.sum()
    top = int(np.clip(math.floor(center - bar_thickness / 2 + 0.5), 0, bar.shape[0] - bar_thickness))
    return bar[top:top + bar_thickness].copy()


def _digit_row(pool: DigitPool, indices: list[int], spacing: int) -> np.ndarray:
    n = len(indices)
    row = np.zeros((GLYPH, GLYPH * n + spacing * (n - 1)), dtype=np.uint8)
    for i, idx in enumerate(indices):
        row = ic.paste_max(row, pool.images[idx], i * (GLYPH + spacing), 0)
    return row


def _shift(box, dx, dy):
    return [box[0] + dx, box[1] + dy, box[2] + dx, box[3] + dy]


def draw_spec(structure: str, config: GenerationConfig, rng, digits=None,
              sample_seed: int = 0) -> FractionSpec:
    n_num, n_den = STRUCTURES[structure]
    if digits is None:
        digits = [int(d) for d in rng.integers(1, 10, size=n_num + n_den)]
    j = config.jitter_px
    jitter = [tuple(int(v) for v in rng.integers(-j, j + 1, size=2)) for _ in range(3)]
    return FractionSpec(
        structure=structure,
        numerator_digits=list(digits[:n_num]),
        denominator_digits=list(digits[n_num:]),
        spacing_px=int(rng.integers(config.spacing_range[0], config.spacing_range[1] + 1)),
        jitter=jitter,
        bar_overhang_px=int(rng.integers(config.overhang_range[0], config.overhang_range[1] + 1)),
        bar_thickness=config.bar_thickness,
        sample_seed=sample_seed,
    )


def generate_fraction(spec: FractionSpec, pool: DigitPool, rng, canvas=(56, 56),
                      jitter_px: int = 2, sample_id: int = 0):
    """Render one fraction; returns ``(image, SampleRecord)``.

    ``jitter_px`` is the bound the spec's jitter was drawn under; it sets the
    base vertical gap so jittered parts can never touch.
    """
    num_idx = [pool.draw(d, rng) for d in spec.numerator_digits]
    den_idx = [pool.draw(d, rng) for d in spec.denominator_digits]
    bar_idx = pool.draw(1, rng)

    num_row = _digit_row(pool, num_idx, spec.spacing_px)
    den_row = _digit_row(pool, den_idx, spec.spacing_px)
    bar_w = max(num_row.shape[1], den_row.shape[1]) + 2 * spec.bar_overhang_px
    bar = make_fraction_bar(pool.images[bar_idx], bar_w, spec.bar_thickness)

    parts = [num_row, bar, den_row]
    strokes = [ic.nonzero_bbox(p > 0) for p in parts]
    if any(s is None for s in strokes):
        raise DegenerateExemplar("a part has no stroke pixels")

    # vertical placement by stroke extents: gap between consecutive parts is
    # base_gap plus the jitter difference, never below 2 px
    base_gap = 2 * max(jitter_px, max(abs(j[1]) for j in spec.jitter)) + 2
    cx = bar_w / 2.0
    xs = [int(math.floor(cx - p.shape[1] / 2.0)) + spec.jitter[i][0] for i, p in enumerate(parts)]
    ys = [spec.jitter[0][1]]
    for i in (1, 2):
        prev_bottom = ys[i - 1] + strokes[i - 1][3]
        gap = base_gap + spec.jitter[i][1] - spec.jitter[i - 1][1]
        ys.append(prev_bottom + 1 + gap - strokes[i][1])

    min_x = min(xs)
    min_y = min(ys)
    xs = [x - min_x for x in xs]
    ys = [y - min_y for y in ys]
    work_w = max(x + p.shape[1] for x, p in zip(xs, parts))
    work_h = max(y + p.shape[0] for y, p in zip(ys, parts))
    work = np.zeros((work_h, work_w), dtype=np.uint8)
    for p, x, y in zip(parts, xs, ys):
        work = ic.paste_max(work, p, x, y)

    part_boxes = [[x, y, x + p.shape[1] - 1, y + p.shape[0] - 1] for p, x, y in zip(parts, xs, ys)]
    stroke_boxes = [_shift(s, x, y) for s, x, y in zip(strokes, xs, ys)]
    glyph_boxes = []
    for row_i, idxs in ((0, num_idx), (2, den_idx)):
        for g, idx in enumerate(idxs):
            gb = ic.nonzero_bbox(pool.images[idx] > 0)
            glyph_boxes.append(_shift(gb, xs[row_i] + g * (GLYPH + spec.spacing_px), ys[row_i]))

    # crop to strokes, scale into the canvas interior, center, invert
    content = ic.nonzero_bbox(work > 0)
    cx0, cy0, cx1, cy1 = content
    cropped = work[cy0:cy1 + 1, cx0:cx1 + 1]
    out_w, out_h = canvas
    margin = max(2, min(out_w, out_h) // 14)
    scale = min((out_w - 2 * margin) / cropped.shape[1], (out_h - 2 * margin) / cropped.shape[0], 1.0)
    if scale < MIN_SCALE:
        raise LayoutOverflow(f"content {cropped.shape[1]}x{cropped.shape[0]} needs scale {scale:.3f}")
    new_w = max(1, round(cropped.shape[1] * scale))
    new_h = max(1, round(cropped.shape[0] * scale))
    small = ic.resize(cropped, new_w, new_h, "bilinear")
    off_x, off_y = (out_w - new_w) // 2, (out_h - new_h) // 2
    image = ic.invert(ic.pad_center(small, out_w, out_h, fill=0))

    sx, sy = new_w / cropped.shape[1], new_h / cropped.shape[0]

    # where each part's ink (>= 128 after scaling) lands, rendered on its own
    ink_boxes = []
    for p, x, y in zip(parts, xs, ys):
        alone = ic.paste_max(np.zeros_like(work), p, x, y)[cy0:cy1 + 1, cx0:cx1 + 1]
        box = ic.nonzero_bbox(ic.resize(alone, new_w, new_h, "bilinear") >= 128)
        ink_boxes.append(None if box is None else [box[0] + off_x, box[1] + off_y,
                                                   box[2] + off_x, box[3] + off_y])

    def to_canvas(box):
        b = _shift(box, -cx0, -cy0)
        return [math.floor(b[0] * sx) + off_x, math.floor(b[1] * sy) + off_y,
                math.ceil((b[2] + 1) * sx) - 1 + off_x, math.ceil((b[3] + 1) * sy) - 1 + off_y]

    layout = {
        "numerator_digits": list(spec.numerator_digits),
        "denominator_digits": list(spec.denominator_digits),
        "spacing_px": spec.spacing_px,
        "jitter": [list(j) for j in spec.jitter],
        "bar_overhang_px": spec.bar_overhang_px,
        "bar_thickness": spec.bar_thickness,
        "work_size": [work_w, work_h],
        "part_boxes": part_boxes,
        "stroke_boxes": stroke_boxes,
        "glyph_boxes": glyph_boxes,
        "scale": [sx, sy],
        "canvas_stroke_boxes": [to_canvas(b) for b in stroke_boxes],
        "canvas_glyph_boxes": [to_canvas(b) for b in glyph_boxes],
        "canvas_ink_boxes": ink_boxes,
    }
    record = SampleRecord(
        id=sample_id,
        label=FRACTION_CLASS,
        structure=spec.structure,
        numerator=spec.numerator,
        denominator=spec.denominator,
        value=f"{spec.numerator}/{spec.denominator}",
        exemplars=[*num_idx, *den_idx, bar_idx],
        layout=layout,
        seed=spec.sample_seed,
    )
    return image, record


def render_digit(pool: DigitPool, index: int, canvas=(56, 56)) -> np.ndarray:
    return ic.invert(ic.pad_center(pool.images[index], canvas[0], canvas[1], fill=0))


def audit_layout(record: SampleRecord) -> list[str]:
    """Geometry violations of a fraction record's working-canvas layout."""
    num, bar, den = record.layout["stroke_boxes"]
    problems = []
    if not num[3] < bar[1]:
        problems.append("numerator strokes reach the bar")
    if not den[1] > bar[3]:
        problems.append("denominator strokes reach the bar")
    bar_w = bar[2] - bar[0] + 1
    for name, part in (("numerator", record.layout["part_boxes"][0]),
                       ("denominator", record.layout["part_boxes"][2])):
        if bar_w < part[2] - part[0] + 1:
            problems.append(f"bar narrower than the {name} row")
    return problems


# -- dataset ---------------------------------------------------------------

def _plan(config: GenerationConfig, pool: DigitPool) -> list[tuple]:
    """One task per sample, in output order: digits 0-9, then F11, F12, F22."""
    tasks = []
    k = 0
    for d in range(10):
        if config.digits_per_class == 0:
            break
        idx = pool.indices(d)
        # without replacement until the class pool is exhausted
        perm = idx[np.random.default_rng([config.master_seed, 0xD1617, d]).permutation(idx.size)]
        for j in range(config.digits_per_class):
            tasks.append((k, "digit", d, int(perm[j % perm.size])))
            k += 1
    for structure in ("F11", "F12", "F22"):
        count = getattr(config, structure.lower())
        combos = None
        if config.exhaustive and count:
            combos = list(itertools.product(DIGITS, repeat=sum(STRUCTURES[structure])))
        for j in range(count):
            digits = list(combos[j % len(combos)]) if combos else None
            tasks.append((k, structure, digits, None))
            k += 1
    return tasks


def _render_task(task, config: GenerationConfig, pool: DigitPool):
    k, kind, arg, exemplar = task
    seed = derive_seed(config.master_seed, k)
    if kind == "digit":
        img = render_digit(pool, exemplar, config.canvas)
        rec = SampleRecord(id=k, label=int(arg), structure="digit", numerator=None,
                           denominator=None, value=str(arg), exemplars=[exemplar],
                           layout={}, seed=seed)
        return img, rec
    rng = np.random.default_rng(seed)
    spec = draw_spec(kind, config, rng, digits=arg, sample_seed=seed)
    return generate_fraction(spec, pool, rng, config.canvas, config.jitter_px, sample_id=k)


_WORKER: dict = {}


def _init_worker(config, images, labels):
    _WORKER["config"] = config
    _WORKER["pool"] = DigitPool(images, labels)


def _render_chunk(tasks):
    config, pool = _WORKER["config"], _WORKER["pool"]
    return [_render_task(t, config, pool) for t in tasks]


def generate_dataset(config: GenerationConfig, images, labels, n_jobs: int = 1):
    """Generate ``(images [N,H,W] uint8, manifest list[SampleRecord])``.

    Output is identical for any ``n_jobs``: each sample depends only on the
    master seed and its index.
    """
    pool = DigitPool(images, labels)
    tasks = _plan(config, pool)
    w, h = config.canvas
    out = np.empty((len(tasks), h, w), dtype=np.uint8)
    manifest: list[SampleRecord] = []
    if n_jobs <= 1 or len(tasks) < 2:
        results = (_render_task(t, config, pool) for t in tasks)
    else:
        size = max(1, math.ceil(len(tasks) / (4 * n_jobs)))
        chunks = [tasks[i:i + size] for i in range(0, len(tasks), size)]
        with ProcessPoolExecutor(n_jobs, initializer=_init_worker,
                                 initargs=(config, pool.images, pool.labels)) as ex:
            results = [r for chunk in ex.map(_render_chunk, chunks) for r in chunk]
    for i, (img, rec) in enumerate(results):
        out[i] = img
        manifest.append(rec)
    return out, manifest
