import numpy as np
import pytest

from simloc.errors import ConfigurationError
from simloc.matio import (
    load_complex_matrix,
    load_csv,
    load_real_vector,
    save_complex_matrix,
    save_csv,
    save_real_vector,
)


class TestComplexMatrix:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((5, 7)) + 1j * rng.standard_normal((5, 7))
        path = tmp_path / "m.cmat"
        save_complex_matrix(path, m)
        np.testing.assert_array_equal(load_complex_matrix(path), m)

    def test_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        p1, p2 = tmp_path / "a.cmat", tmp_path / "b.cmat"
        save_complex_matrix(p1, m)
        save_complex_matrix(p2, m.copy())
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.cmat"
        path.write_text("# something 2 2\n1 0 0 0\n0 0 1 0\n")
        with pytest.raises(ConfigurationError):
            load_complex_matrix(path)

    def test_rejects_short_row(self, tmp_path):
        path = tmp_path / "bad.cmat"
        path.write_text("# cmatrix 1 2\n1 0\n")
        with pytest.raises(ConfigurationError):
            load_complex_matrix(path)


class TestRealVector:
    def test_round_trip_bit_exact(self, tmp_path):
        v = np.random.default_rng(2).standard_normal(17)
        path = tmp_path / "v.rvec"
        save_real_vector(path, v)
        np.testing.assert_array_equal(load_real_vector(path), v)

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.rvec"
        path.write_text("# cmatrix 3\n1\n2\n3\n")
        with pytest.raises(ConfigurationError):
            load_real_vector(path)


class TestCsv:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "t.csv"
        save_csv(path, ["a", "b"], [[1, 2.5], [3, -0.125]])
        header, rows = load_csv(path)
        assert header == ["a", "b"]
        assert rows == [["1", "2.5"], ["3", "-0.125"]]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.csv"
        save_csv(path, ["x"], [])
        header, rows = load_csv(path)
        assert header == ["x"]
        assert rows == []
