import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fovdiff import GridFormatError, read_grid, write_grid


@pytest.fixture(scope="module")
def shared_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("grids")


class TestRoundTrip:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    @pytest.mark.parametrize("shape", [(7,), (5, 9)])
    def test_bitwise(self, tmp_path, rng, dtype, shape):
        grid = rng.standard_normal(shape).astype(dtype)
        path = tmp_path / "g.difg"
        write_grid(path, grid)
        back = read_grid(path)
        assert back.dtype == dtype
        assert back.shape == shape
        assert back.tobytes() == grid.tobytes()

    def test_special_values_survive(self, tmp_path):
        grid = np.array([0.0, -0.0, np.inf, -np.inf, np.nan, 1e-300], dtype=np.float64)
        path = tmp_path / "g.difg"
        write_grid(path, grid)
        assert read_grid(path).tobytes() == grid.tobytes()

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_random_grids(self, shared_dir, data):
        ndim = data.draw(st.integers(1, 2))
        shape = tuple(data.draw(st.integers(1, 20)) for _ in range(ndim))
        dtype = data.draw(st.sampled_from([np.float32, np.float64]))
        values = data.draw(
            st.lists(
                st.floats(allow_nan=False, width=32),
                min_size=int(np.prod(shape)),
                max_size=int(np.prod(shape)),
            )
        )
        grid = np.array(values, dtype=dtype).reshape(shape)
        path = shared_dir / "h.difg"
        write_grid(path, grid)
        assert read_grid(path).tobytes() == grid.tobytes()


class TestLayout:
    def test_2x2_f32_file_is_37_bytes(self, tmp_path):
        # 4 magic + 4 version + 4 ndim + 8 dims + 1 dtype tag + 16 payload
        path = tmp_path / "g.difg"
        write_grid(path, np.zeros((2, 2), dtype=np.float32))
        assert path.stat().st_size == 37

    def test_header_fields(self, tmp_path):
        path = tmp_path / "g.difg"
        write_grid(path, np.zeros((3, 4), dtype=np.float64))
        raw = path.read_bytes()
        magic, version, ndim = struct.unpack_from("<4sII", raw, 0)
        assert magic == b"DIFG"
        assert version == 1
        assert ndim == 2
        assert struct.unpack_from("<II", raw, 12) == (3, 4)
        assert raw[20] == 2  # f64 tag


class TestErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.difg"
        path.write_bytes(b"XXXX" + b"\x00" * 40)
        with pytest.raises(GridFormatError, match="magic"):
            read_grid(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "g.difg"
        write_grid(path, np.zeros(8, dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(GridFormatError, match="truncated"):
            read_grid(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "g.difg"
        write_grid(path, np.zeros(8, dtype=np.float32))
        path.write_bytes(path.read_bytes() + b"\x01")
        with pytest.raises(GridFormatError, match="trailing"):
            read_grid(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "g.difg"
        write_grid(path, np.zeros(2, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(GridFormatError, match="version"):
            read_grid(path)

    def test_bad_ndim(self, tmp_path):
        path = tmp_path / "g.difg"
        path.write_bytes(struct.pack("<4sII", b"DIFG", 1, 3) + b"\x00" * 16)
        with pytest.raises(GridFormatError, match="ndim"):
            read_grid(path)

    def test_dimension_overflow(self, tmp_path):
        path = tmp_path / "g.difg"
        header = struct.pack("<4sIIIIB", b"DIFG", 1, 2, 2**20, 2**20, 1)
        path.write_bytes(header)
        with pytest.raises(GridFormatError, match="overflow"):
            read_grid(path)

    def test_unknown_dtype_tag(self, tmp_path):
        path = tmp_path / "g.difg"
        path.write_bytes(struct.pack("<4sIIIB", b"DIFG", 1, 1, 2, 7) + b"\x00" * 8)
        with pytest.raises(GridFormatError, match="dtype tag"):
            read_grid(path)

    def test_write_rejects_unsupported_dtype(self, tmp_path):
        with pytest.raises(GridFormatError, match="dtype"):
            write_grid(tmp_path / "g.difg", np.zeros(4, dtype=np.int32))

    def test_write_rejects_3d(self, tmp_path):
        with pytest.raises(GridFormatError, match="1-D or 2-D"):
            write_grid(tmp_path / "g.difg", np.zeros((2, 2, 2), dtype=np.float32))
