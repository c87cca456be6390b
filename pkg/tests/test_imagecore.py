"""Raster primitives."""
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mnist_fraction import imagecore as ic

images = hnp.arrays(np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=12))
masks = hnp.arrays(np.bool_, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=12))


def bfs_components(mask):
    """Brute-force 8-connected labelling; returns a list of pixel sets."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if not mask[y, x] or seen[y, x]:
                continue
            pix, queue = set(), deque([(y, x)])
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                pix.add((cy, cx))
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
            comps.append(pix)
    return comps


class TestPointOps:
    def test_invert_values(self):
        np.testing.assert_array_equal(ic.invert(np.array([[0, 255]])), [[255, 0]])

    def test_transpose_shape(self):
        np.testing.assert_array_equal(ic.transpose(np.array([[3, 9]])), [[3], [9]])

    def test_vertical_stroke_becomes_horizontal(self):
        img = np.zeros((28, 28), np.uint8)
        img[:, 14] = 255
        out = ic.transpose(img)
        assert (out[14] == 255).all() and out.sum() == 28 * 255

    @settings(max_examples=100, deadline=None)
    @given(images)
    def test_involutions(self, img):
        np.testing.assert_array_equal(ic.invert(ic.invert(img)), img)
        np.testing.assert_array_equal(ic.transpose(ic.transpose(img)), img)

    def test_rejects_3d(self):
        with pytest.raises(ValueError):
            ic.invert(np.zeros((2, 2, 2), np.uint8))


class TestResize:
    @pytest.mark.parametrize("method", ["bilinear", "nearest"])
    def test_constant_preserved(self, method):
        out = ic.resize(np.full((4, 4), 128, np.uint8), 8, 8, method)
        assert out.shape == (8, 8) and (out == 128).all()

    def test_identity(self, rng):
        img = rng.integers(0, 256, (5, 7), dtype=np.uint8)
        np.testing.assert_array_equal(ic.resize(img, 7, 5), img)

    def test_upsample_fixture(self):
        """Centers at -0.25, 0.25, 0.75, 1.25 clamp to 0, .25, .75, 1."""
        out = ic.resize(np.array([[0, 255]], np.uint8), 4, 1)
        np.testing.assert_array_equal(out, [[0, 64, 191, 255]])

    def test_bad_method(self):
        with pytest.raises(ValueError):
            ic.resize(np.zeros((2, 2), np.uint8), 3, 3, "cubic")

    @settings(max_examples=100, deadline=None)
    @given(images, st.integers(1, 20), st.integers(1, 20))
    def test_range_preserved(self, img, w, h):
        out = ic.resize(img, w, h)
        assert out.shape == (h, w)
        assert img.min() <= out.min() and out.max() <= img.max()


class TestPaste:
    def test_black_source_is_noop(self, rng):
        canvas = rng.integers(0, 256, (6, 6), dtype=np.uint8)
        np.testing.assert_array_equal(ic.paste_max(canvas, np.zeros((3, 3), np.uint8), 2, 1), canvas)

    def test_copy_onto_black(self, rng):
        src = rng.integers(0, 256, (3, 2), dtype=np.uint8)
        out = ic.paste_max(np.zeros((6, 6), np.uint8), src, 4, 2)
        np.testing.assert_array_equal(out[2:5, 4:6], src)
        assert out.sum() == src.sum()

    def test_overlap_takes_max(self):
        out = ic.paste_max(np.full((1, 1), 200, np.uint8), np.full((1, 1), 180, np.uint8), 0, 0)
        assert out[0, 0] == 200

    def test_idempotent(self, rng):
        canvas = rng.integers(0, 256, (8, 8), dtype=np.uint8)
        src = rng.integers(0, 256, (3, 3), dtype=np.uint8)
        once = ic.paste_max(canvas, src, 1, 4)
        np.testing.assert_array_equal(ic.paste_max(once, src, 1, 4), once)

    def test_input_not_mutated(self):
        canvas = np.zeros((4, 4), np.uint8)
        ic.paste_max(canvas, np.full((2, 2), 9, np.uint8), 0, 0)
        assert canvas.sum() == 0

    def test_out_of_bounds(self):
        with pytest.raises(ic.OutOfBounds):
            ic.paste_max(np.zeros((4, 4), np.uint8), np.zeros((2, 2), np.uint8), 3, 0)


class TestPadCenter:
    def test_digit_border(self):
        out = ic.pad_center(np.full((28, 28), 7, np.uint8), 56, 56)
        assert ic.nonzero_bbox(out == 7) == (14, 14, 41, 41)

    def test_identity(self, rng):
        img = rng.integers(0, 256, (4, 5), dtype=np.uint8)
        np.testing.assert_array_equal(ic.pad_center(img, 5, 4), img)

    def test_tie_breaks_top_left(self):
        out = ic.pad_center(np.ones((3, 3), np.uint8), 4, 4)
        assert ic.nonzero_bbox(out) == (0, 0, 2, 2)

    def test_too_small(self):
        with pytest.raises(ic.TargetTooSmall):
            ic.pad_center(np.zeros((3, 3), np.uint8), 2, 5)


class TestBinarize:
    def test_dark_is_foreground(self):
        np.testing.assert_array_equal(ic.binarize(np.array([[0, 255]]), 128), [[True, False]])

    def test_zero_threshold_is_empty(self):
        assert not ic.binarize(np.zeros((3, 3), np.uint8), 0).any()


class TestComponents:
    def test_empty(self):
        assert len(ic.connected_components(np.zeros((5, 5), bool))) == 0

    def test_diagonal_touch(self):
        m = np.zeros((3, 3), bool)
        m[0, 0] = m[1, 1] = True
        assert len(ic.connected_components(m)) == 1
        assert len(ic.connected_components(m, connectivity=4)) == 2

    def test_gap_column_orders_left_first(self):
        m = np.zeros((2, 3), bool)
        m[0, 2] = m[1, 0] = True
        cs = ic.connected_components(m)
        assert len(cs) == 2
        assert cs.components[0].bbox == (0, 1, 0, 1)
        assert cs.label_map[1, 0] == 1 and cs.label_map[0, 2] == 2

    @settings(max_examples=150, deadline=None)
    @given(masks)
    def test_matches_bfs_oracle(self, mask):
        cs = ic.connected_components(mask)
        got = sorted(sorted(zip(*np.nonzero(cs.mask(c.id)))) for c in cs.components)
        want = sorted(sorted(p) for p in bfs_components(mask))
        assert [list(map(tuple, g)) for g in got] == [list(w) for w in want]
        # union equals foreground, pieces are disjoint
        np.testing.assert_array_equal(cs.label_map > 0, mask)
        for c in cs.components:
            ys, xs = np.nonzero(cs.mask(c.id))
            assert c.pixel_count == ys.size
            assert c.bbox == (xs.min(), ys.min(), xs.max(), ys.max())
        xs = [c.centroid[0] for c in cs.components]
        assert xs == sorted(xs)

    @settings(max_examples=50, deadline=None)
    @given(masks, st.integers(1, 255))
    def test_partition_ignores_foreground_values(self, mask, value):
        """Relabelling foreground intensities leaves the partition unchanged."""
        img = np.where(mask, 0, 255).astype(np.uint8)
        recoloured = np.where(mask, value - 1, 255).astype(np.uint8)
        a = ic.connected_components(ic.binarize(img, 128))
        b = ic.connected_components(ic.binarize(recoloured, 255))
        np.testing.assert_array_equal(a.label_map, b.label_map)


class TestDeskew:
    def test_upright_stroke_unchanged(self):
        img = np.zeros((20, 20), np.uint8)
        img[2:18, 9:11] = 255
        np.testing.assert_array_equal(ic.deskew(img), img)

    def test_slanted_stroke_straightened(self):
        img = np.zeros((28, 28), np.uint8)
        for y in range(4, 24):
            img[y, 6 + (y - 4) // 2: 8 + (y - 4) // 2] = 255
        cols_before = np.flatnonzero(img.any(axis=0)).size
        cols_after = np.flatnonzero((ic.deskew(img) > 64).any(axis=0)).size
        assert cols_after < cols_before / 2

    def test_blank(self):
        np.testing.assert_array_equal(ic.deskew(np.zeros((4, 4), np.uint8)), 0)
