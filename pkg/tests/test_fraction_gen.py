"""Fraction synthesis, layout geometry and dataset generation."""
import itertools
from collections import Counter

import numpy as np
import pytest

from mnist_fraction import imagecore as ic
from mnist_fraction.dataset import largest_remainder
from mnist_fraction.fraction_gen import (
    FRACTION_CLASS,
    DegenerateExemplar,
    DigitPool,
    FractionSpec,
    GenerationConfig,
    PoolMissingDigit,
    SampleRecord,
    audit_layout,
    derive_seed,
    draw_spec,
    generate_dataset,
    generate_fraction,
    make_fraction_bar,
)


def synthetic_one():
    img = np.zeros((28, 28), np.uint8)
    img[:, 13:15] = 255
    return img


def render(pool, structure, digits, seed=0, **kw):
    rng = np.random.default_rng(seed)
    n_num = 1 if structure in ("F11", "F12") else 2
    spec = FractionSpec(structure, list(digits[:n_num]), list(digits[n_num:]), sample_seed=seed, **kw)
    return generate_fraction(spec, pool, rng)


class TestFractionBar:
    def test_synthetic_one_spans_width(self):
        bar = make_fraction_bar(synthetic_one(), 60, 14)
        assert bar.shape == (14, 60)
        assert (bar > 0).any(axis=0).all()

    def test_square_target_is_pure_transpose(self):
        """A 28x28 target of a full-height stroke reduces to the transpose."""
        one = synthetic_one()
        bar = make_fraction_bar(one, 28, 28, straighten=False)
        np.testing.assert_array_equal(bar, ic.transpose(one))

    @pytest.mark.parametrize("straighten", [True, False])
    def test_real_exemplars_span(self, train_pool, straighten):
        """Stroke covers at least 80% of the bar's columns on 20 real "1"s."""
        for idx in train_pool.indices(1)[:20]:
            bar = make_fraction_bar(train_pool.images[idx], 64, 14, straighten=straighten)
            assert bar.shape == (14, 64)
            assert (bar > 0).any(axis=0).mean() >= 0.8

    def test_degenerate_exemplar(self):
        img = np.zeros((28, 28), np.uint8)
        img[0, :5] = 255
        with pytest.raises(DegenerateExemplar):
            make_fraction_bar(img, 40, 14)

    def test_too_small(self):
        with pytest.raises(ValueError):
            make_fraction_bar(synthetic_one(), 4, 14)


class TestGenerateFraction:
    def test_f11_record(self, train_pool):
        img, rec = render(train_pool, "F11", (3, 4))
        assert (rec.numerator, rec.denominator, rec.value, rec.label) == (3, 4, "3/4", FRACTION_CLASS)
        assert img.shape == (56, 56) and img.dtype == np.uint8

    def test_f22_positional(self, train_pool):
        _, rec = render(train_pool, "F22", (1, 2, 3, 4))
        assert (rec.numerator, rec.denominator) == (12, 34)
        assert rec.digits == [1, 2, 3, 4]

    def test_deterministic(self, train_pool):
        a, ra = render(train_pool, "F12", (5, 6, 7), seed=11)
        b, rb = render(train_pool, "F12", (5, 6, 7), seed=11)
        np.testing.assert_array_equal(a, b)
        assert ra.to_json() == rb.to_json()

    def test_border_is_white(self, train_pool):
        for s in range(10):
            img, _ = render(train_pool, "F22", (9, 8, 7, 6), seed=s)
            border = np.concatenate([img[0], img[-1], img[:, 0], img[:, -1]])
            assert (border == 255).all()

    def test_layout_audit_clean(self, train_pool):
        cfg = GenerationConfig(jitter_px=2)
        for s in range(60):
            rng = np.random.default_rng(s)
            structure = ("F11", "F12", "F22")[s % 3]
            spec = draw_spec(structure, cfg, rng, sample_seed=s)
            _, rec = generate_fraction(spec, train_pool, rng)
            assert audit_layout(rec) == []

    def test_audit_detects_overlap(self, train_pool):
        _, rec = render(train_pool, "F11", (2, 3))
        bar = rec.layout["stroke_boxes"][1]
        rec.layout["stroke_boxes"][0][3] = bar[1]
        assert "numerator strokes reach the bar" in audit_layout(rec)

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            FractionSpec("F11", [0], [3])
        with pytest.raises(ValueError):
            FractionSpec("F12", [1], [3])
        with pytest.raises(ValueError):
            FractionSpec("F33", [1], [3])

    def test_missing_digit(self, mnist_train):
        images, labels = mnist_train
        keep = labels != 7
        pool = DigitPool(images[keep], labels[keep])
        with pytest.raises(PoolMissingDigit):
            render(pool, "F11", (7, 2))

    def test_record_json_round_trip(self, train_pool):
        _, rec = render(train_pool, "F12", (1, 4, 2))
        assert SampleRecord.from_json(rec.to_json()) == rec


class TestGenerateDataset:
    def test_empty(self, mnist_train):
        images, manifest = generate_dataset(GenerationConfig(), *mnist_train)
        assert images.shape[0] == 0 and manifest == []

    def test_counts(self, mnist_train):
        cfg = GenerationConfig(digits_per_class=10, f11=4, f12=3, f22=3, master_seed=2)
        images, manifest = generate_dataset(cfg, *mnist_train)
        assert images.shape == (110, 56, 56)
        hist = Counter(r.label for r in manifest)
        assert hist == {**{d: 10 for d in range(10)}, 10: 10}
        assert [r.id for r in manifest] == list(range(110))

    def test_full_preset_size(self):
        """Stratified 70% train share of the full preset is 72,159."""
        cfg = GenerationConfig.full_scale()
        sizes = [cfg.digits_per_class] * 10 + [cfg.f11, cfg.f12, cfg.f22]
        assert cfg.total == 103085
        assert sum(largest_remainder(n, (0.70, 0.15, 0.15))[0] for n in sizes) == 72159

    def test_exhaustive_coverage(self, mnist_train):
        cfg = GenerationConfig(f11=81, exhaustive=True)
        _, manifest = generate_dataset(cfg, *mnist_train)
        pairs = {(r.numerator, r.denominator) for r in manifest}
        assert pairs == set(itertools.product(range(1, 10), repeat=2))

    def test_jobs_do_not_change_output(self, mnist_train):
        cfg = GenerationConfig(digits_per_class=3, f11=5, f12=5, f22=5, master_seed=9)
        a, ma = generate_dataset(cfg, *mnist_train, n_jobs=1)
        b, mb = generate_dataset(cfg, *mnist_train, n_jobs=3)
        np.testing.assert_array_equal(a, b)
        assert [r.to_json() for r in ma] == [r.to_json() for r in mb]

    def test_seed_depends_on_index_only(self):
        assert derive_seed(5, 3) == derive_seed(5, 3)
        assert derive_seed(5, 3) != derive_seed(5, 4)
        assert derive_seed(5, 3) != derive_seed(6, 3)

    def test_digit_samples_are_centered_mnist(self, mnist_train):
        cfg = GenerationConfig(digits_per_class=2, master_seed=1)
        images, manifest = generate_dataset(cfg, *mnist_train)
        src = mnist_train[0][manifest[0].exemplars[0]]
        np.testing.assert_array_equal(images[0][14:42, 14:42], 255 - src)
