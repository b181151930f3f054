import numpy as np
import pytest

from packhedge import matrix_io
from packhedge.core import game_rng


AWKWARD = np.array(
    [
        [0.1, -1.0, 1e-17],
        [1.0, -0.0, 0.3333333333333333],
        [2**-52, -(1 - 2**-53), 0.7],
    ]
)


class TestCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        path = tmp_path / "m.csv"
        matrix_io.write_matrix_csv(path, AWKWARD)
        assert np.array_equal(matrix_io.read_matrix_csv(path), AWKWARD)

    def test_golden_three_by_three(self, tmp_path):
        path = tmp_path / "golden.csv"
        matrix_io.write_matrix_csv(path, np.array([[0.5, -1.0, 0.25], [1.0, 0.0, -0.125], [0.1, 0.2, 0.3]]))
        assert path.read_text() == "0.5,-1.0,0.25\n1.0,0.0,-0.125\n0.1,0.2,0.3\n"

    def test_no_header(self, tmp_path):
        path = tmp_path / "m.csv"
        matrix_io.write_matrix_csv(path, np.zeros((2, 2)))
        first = path.read_text().splitlines()[0]
        assert first == "0.0,0.0"

    def test_ragged_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1.0,2.0\n3.0\n")
        with pytest.raises(ValueError, match="ragged"):
            matrix_io.read_matrix_csv(path)

    def test_empty_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("\n")
        with pytest.raises(ValueError, match="empty"):
            matrix_io.read_matrix_csv(path)


class TestBinary:
    def test_round_trip_bit_exact(self, tmp_path):
        path = tmp_path / "m.bin"
        matrix_io.write_matrix_binary(path, AWKWARD)
        out = matrix_io.read_matrix_binary(path)
        assert out.tobytes() == AWKWARD.tobytes()
        assert out.shape == AWKWARD.shape

    def test_header_layout(self, tmp_path):
        path = tmp_path / "m.bin"
        matrix_io.write_matrix_binary(path, np.zeros((3, 2)))
        raw = path.read_bytes()
        assert raw[:4] == b"CHLM"
        assert raw[4] == 1
        assert int.from_bytes(raw[5:9], "little") == 3
        assert int.from_bytes(raw[9:13], "little") == 2
        assert len(raw) == 13 + 8 * 6

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ValueError, match="magic"):
            matrix_io.read_matrix_binary(path)

    def test_bad_version_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        matrix_io.write_matrix_binary(path, np.zeros((1, 1)))
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version"):
            matrix_io.read_matrix_binary(path)

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        matrix_io.write_matrix_binary(path, np.zeros((2, 2)))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(ValueError, match="size"):
            matrix_io.read_matrix_binary(path)


class TestLoadMatrix:
    def test_sniffs_binary(self, tmp_path):
        path = tmp_path / "m.dat"
        matrix = game_rng(0).uniform(-1, 1, size=(4, 5))
        matrix_io.write_matrix_binary(path, matrix)
        assert np.array_equal(matrix_io.load_matrix(path), matrix)

    def test_sniffs_csv(self, tmp_path):
        path = tmp_path / "m.dat"
        matrix = game_rng(1).uniform(-1, 1, size=(4, 5))
        matrix_io.write_matrix_csv(path, matrix)
        assert np.array_equal(matrix_io.load_matrix(path), matrix)

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="format"):
            matrix_io.save_matrix(tmp_path / "x", np.zeros((1, 1)), fmt="parquet")
