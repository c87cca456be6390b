"""Dataset storage, stratified splitting and augmentation."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mnist_fraction.dataset import (
    NO_AUGMENT,
    AugmentParams,
    ClassTooSmall,
    LabeledDataset,
    SplitIndices,
    affine_sample,
    augment,
    augment_batch,
    largest_remainder,
    stratified_split,
)

label_vectors = st.lists(st.integers(0, 10), min_size=1, max_size=12).flatmap(
    lambda classes: st.lists(st.integers(3, 60), min_size=len(classes), max_size=len(classes)).map(
        lambda counts: np.repeat(np.arange(len(counts)), counts)
    )
)


class TestLargestRemainder:
    def test_ten_items_tie_goes_to_val(self):
        assert largest_remainder(10, (0.70, 0.15, 0.15)) == [7, 2, 1]

    def test_hundred(self):
        assert largest_remainder(100, (0.70, 0.15, 0.15)) == [70, 15, 15]

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10_000))
    def test_sums_and_bounds(self, n):
        sizes = largest_remainder(n, (0.70, 0.15, 0.15))
        assert sum(sizes) == n
        for s, r in zip(sizes, (0.70, 0.15, 0.15)):
            assert abs(s - n * r) < 1


class TestStratifiedSplit:
    def test_eleven_classes_of_hundred(self):
        labels = np.repeat(np.arange(11), 100)
        sp = stratified_split(labels, seed=0)
        assert (len(sp.train), len(sp.val), len(sp.test)) == (770, 165, 165)

    def test_same_seed_same_indices(self):
        labels = np.random.default_rng(42).integers(0, 11, 500)
        a, b = stratified_split(labels, seed=5), stratified_split(labels, seed=5)
        for x, y in zip((a.train, a.val, a.test), (b.train, b.val, b.test)):
            np.testing.assert_array_equal(x, y)

    def test_different_seed_differs(self):
        labels = np.repeat(np.arange(11), 50)
        a, b = stratified_split(labels, seed=1), stratified_split(labels, seed=2)
        assert not np.array_equal(a.train, b.train)

    @settings(max_examples=60, deadline=None)
    @given(label_vectors, st.integers(0, 2**32 - 1))
    def test_partition_invariants(self, labels, seed):
        sp = stratified_split(labels, seed=seed)
        all_idx = np.concatenate([sp.train, sp.val, sp.test])
        np.testing.assert_array_equal(np.sort(all_idx), np.arange(labels.size))
        for part, r in zip((sp.train, sp.val, sp.test), (0.70, 0.15, 0.15)):
            assert np.all(np.diff(part) > 0)
            for c in np.unique(labels):
                n_c = np.count_nonzero(labels == c)
                assert abs(np.count_nonzero(labels[part] == c) - r * n_c) <= 1

    def test_class_too_small(self):
        with pytest.raises(ClassTooSmall):
            stratified_split([0, 0, 0, 1, 1])

    def test_bad_ratios(self):
        with pytest.raises(ValueError):
            stratified_split([0] * 10, ratios=(0.5, 0.5, 0.5))

    def test_json_round_trip(self, tmp_path):
        sp = stratified_split(np.repeat(np.arange(3), 10), seed=4)
        sp.save(tmp_path / "s.json")
        back = SplitIndices.load(tmp_path / "s.json")
        assert back.seed == 4
        np.testing.assert_array_equal(back.test, sp.test)


class TestLabeledDataset:
    def test_save_load(self, tiny_dataset, tmp_path):
        tiny_dataset.save(tmp_path)
        back = LabeledDataset.load(tmp_path)
        np.testing.assert_array_equal(back.images, tiny_dataset.images)
        np.testing.assert_array_equal(back.labels, tiny_dataset.labels)
        assert [r.to_json() for r in back.manifest] == [r.to_json() for r in tiny_dataset.manifest]

    def test_features(self, tiny_dataset):
        X = tiny_dataset.features
        assert X.shape == (len(tiny_dataset), 56 * 56)
        assert X.dtype == np.float32 and 0 <= X.min() and X.max() <= 1

    def test_subset(self, tiny_dataset):
        sub = tiny_dataset.subset([3, 1])
        assert sub.manifest[0].id == 3 and sub.labels[1] == tiny_dataset.labels[1]

    def test_rejects_bad_labels(self):
        with pytest.raises(ValueError):
            LabeledDataset(np.zeros((1, 4, 4)), [11])


class TestAugment:
    def test_zero_ranges_identity(self, rng):
        imgs = rng.integers(0, 256, (3, 56, 56), dtype=np.uint8)
        np.testing.assert_array_equal(augment_batch(imgs, NO_AUGMENT, rng), imgs)

    def test_pure_shift(self):
        img = np.full((20, 20), 255, np.uint8)
        img[10, 10] = 0
        out = affine_sample(img, 1.0, 2, 0)
        assert list(zip(*np.nonzero(out == 0))) == [(10, 12)]

    def test_shift_bound(self):
        p = AugmentParams(zoom_range=0.0, h_shift_max=0.05, v_shift_max=0.0)
        img = np.full((56, 56), 255, np.uint8)
        img[28, 28] = 0
        rng = np.random.default_rng(0)
        for _ in range(200):
            xs = np.nonzero(augment(img, p, rng) == 0)[1]
            assert xs.size == 1 and abs(int(xs[0]) - 28) <= 3

    def test_preserves_shape_and_range(self, rng):
        imgs = rng.integers(0, 256, (5, 56, 56), dtype=np.uint8)
        out = augment_batch(imgs, AugmentParams(), rng)
        assert out.shape == imgs.shape and out.dtype == np.uint8

    def test_rejects_large_range(self):
        with pytest.raises(ValueError):
            AugmentParams(zoom_range=0.9)
