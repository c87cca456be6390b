"""IDX container and PGM encoding."""
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mnist_fraction.idx_io import (
    IdxError,
    IdxTensor,
    PayloadLengthMismatch,
    TruncatedHeader,
    UnsupportedTypeCode,
    load_idx,
    read_idx,
    read_pgm,
    save_idx,
    write_idx,
    write_pgm,
)


def reference_idx_reader(buf: bytes):
    """Independent decoder written straight from the byte layout."""
    ndim = buf[3]
    dims = [int.from_bytes(buf[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim)]
    return dims, list(buf[4 + 4 * ndim:])


class TestReadIdx:
    def test_vector_fixture(self):
        buf = bytes([0, 0, 8, 1, 0, 0, 0, 3, 5, 7, 9])
        t = read_idx(buf)
        assert t.dims == (3,)
        assert list(t.data) == [5, 7, 9]

    def test_three_axis_fixture(self):
        buf = bytes([0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4])
        t = read_idx(buf)
        assert t.dims == (1, 2, 2)
        np.testing.assert_array_equal(t.to_array(), [[[1, 2], [3, 4]]])

    def test_truncated_magic(self):
        with pytest.raises(TruncatedHeader):
            read_idx(b"\x00\x00")

    def test_truncated_dims(self):
        with pytest.raises(TruncatedHeader):
            read_idx(bytes([0, 0, 8, 2, 0, 0, 0, 1]))

    def test_unsupported_type(self):
        with pytest.raises(UnsupportedTypeCode):
            read_idx(bytes([0, 0, 0x0D, 1, 0, 0, 0, 1, 0, 0, 0, 0]))

    def test_payload_too_short(self):
        with pytest.raises(PayloadLengthMismatch):
            read_idx(bytes([0, 0, 8, 1, 0, 0, 0, 3, 5, 7]))

    def test_payload_too_long(self):
        with pytest.raises(PayloadLengthMismatch):
            read_idx(bytes([0, 0, 8, 1, 0, 0, 0, 1, 5, 7]))

    def test_nonzero_magic_prefix(self):
        with pytest.raises(IdxError):
            read_idx(bytes([1, 0, 8, 1, 0, 0, 0, 1, 5]))

    def test_mnist_axes(self, mnist_dir):
        """Axis lengths agree with a byte-level reader on the real files."""
        buf = (mnist_dir / "train-images-idx3-ubyte").read_bytes()
        dims, _ = reference_idx_reader(buf)
        assert list(read_idx(buf).dims) == dims
        assert dims[1:] == [28, 28]


class TestWriteIdx:
    def test_vector_bytes(self):
        t = IdxTensor((3,), bytes([5, 7, 9]))
        assert write_idx(t) == bytes([0, 0, 8, 1, 0, 0, 0, 3, 5, 7, 9])

    def test_header_length(self):
        """Header is 4 + 4 per axis; three axes of 2 give 24 bytes total."""
        t = IdxTensor.from_array(np.arange(8, dtype=np.uint8).reshape(2, 2, 2))
        assert len(write_idx(t)) == 4 + 4 * 3 + 8

    def test_big_endian_dims(self):
        out = write_idx(IdxTensor.from_array(np.zeros(300, dtype=np.uint8)))
        assert out[4:8] == bytes([0x00, 0x00, 0x01, 0x2C])

    def test_rejects_bad_dims(self):
        with pytest.raises(IdxError):
            IdxTensor((0,), b"")
        with pytest.raises(PayloadLengthMismatch):
            IdxTensor((2, 2), b"\x00")

    def test_rejects_out_of_range_values(self):
        with pytest.raises(IdxError):
            IdxTensor.from_array(np.array([256]))

    def test_file_round_trip(self, tmp_path):
        arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        save_idx(tmp_path / "x.idx", arr)
        np.testing.assert_array_equal(load_idx(tmp_path / "x.idx"), arr)


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(np.uint8, hnp.array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=6)))
def test_round_trip_property(arr):
    buf = write_idx(IdxTensor.from_array(arr))
    back = read_idx(buf)
    assert write_idx(back) == buf
    np.testing.assert_array_equal(back.to_array(), arr)
    dims, payload = reference_idx_reader(buf)
    assert tuple(dims) == arr.shape
    assert payload == arr.ravel().tolist()


class TestPgm:
    def test_single_pixel(self):
        assert write_pgm(np.zeros((1, 1), np.uint8)) == b"P5\n1 1\n255\n\x00"

    def test_two_pixels(self):
        assert write_pgm(np.array([[0, 255]], np.uint8)) == b"P5\n2 1\n255\n\x00\xff"

    def test_digit_payload_length(self, mnist_train):
        buf = write_pgm(mnist_train[0][0])
        header = b"P5\n28 28\n255\n"
        assert buf.startswith(header)
        assert len(buf) - len(header) == 28 * 28

    def test_round_trip(self, rng):
        img = rng.integers(0, 256, size=(7, 11), dtype=np.uint8)
        np.testing.assert_array_equal(read_pgm(write_pgm(img)), img)

    def test_external_reader(self, tmp_path, mnist_train):
        """Pillow, when present, decodes our PGM to the same pixels."""
        Image = pytest.importorskip("PIL.Image")
        path = tmp_path / "d.pgm"
        path.write_bytes(write_pgm(mnist_train[0][3]))
        np.testing.assert_array_equal(np.asarray(Image.open(path)), mnist_train[0][3])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 40))
    def test_payload_is_width_times_height(self, w, h):
        buf = write_pgm(np.zeros((h, w), np.uint8))
        header = f"P5\n{w} {h}\n255\n".encode()
        assert len(buf) == len(header) + w * h

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            write_pgm(np.zeros((2, 2, 2), np.uint8))


def test_struct_matches_manual_header():
    """The header agrees with a struct-based encoding."""
    arr = np.zeros((5, 4), np.uint8)
    assert write_idx(IdxTensor.from_array(arr))[:12] == struct.pack(">BBBBII", 0, 0, 8, 2, 5, 4)
