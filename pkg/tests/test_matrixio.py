import numpy as np
import pytest

from cdpa import InputError, read_matrix, read_matrix_binary, write_matrix_binary


def test_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((7, 4))
    path = tmp_path / "m.cdpm"
    write_matrix_binary(path, a)
    b = read_matrix_binary(path)
    np.testing.assert_array_equal(a, b)


def test_binary_header(tmp_path):
    path = tmp_path / "m.cdpm"
    write_matrix_binary(path, np.ones((3, 2)))
    raw = path.read_bytes()
    assert raw[:4] == b"CDPM"
    assert int.from_bytes(raw[4:8], "little") == 3
    assert int.from_bytes(raw[8:12], "little") == 2
    assert len(raw) == 12 + 3 * 2 * 8


def test_binary_bad_magic(tmp_path):
    path = tmp_path / "bad.cdpm"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(InputError, match="magic"):
        read_matrix_binary(path)


def test_binary_truncated(tmp_path):
    path = tmp_path / "short.cdpm"
    write_matrix_binary(path, np.ones((3, 2)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InputError, match="payload"):
        read_matrix_binary(path)


def test_read_sniffs_binary(tmp_path):
    a = np.arange(6.0).reshape(2, 3)
    path = tmp_path / "anyname.dat"
    write_matrix_binary(path, a)
    np.testing.assert_array_equal(read_matrix(path), a)


def test_csv_plain(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2,3\n4,5,6\n")
    np.testing.assert_array_equal(read_matrix(path), [[1, 2, 3], [4, 5, 6]])


def test_csv_header_and_row_names(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("name,s1,s2,s3\ngeneA,1,2.5,3\ngeneB,-4,5,6e-1\n")
    np.testing.assert_allclose(read_matrix(path), [[1, 2.5, 3], [-4, 5, 0.6]])


def test_tsv(tmp_path):
    path = tmp_path / "m.tsv"
    path.write_text("s1\ts2\n1\t2\n3\t4\n")
    np.testing.assert_array_equal(read_matrix(path), [[1, 2], [3, 4]])


def test_parse_error_reports_line_number(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2\n3,oops\n")
    with pytest.raises(InputError, match=r":2:"):
        read_matrix(path)


def test_ragged_rows_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("1,2,3\n4,5\n")
    with pytest.raises(InputError, match=r":2:"):
        read_matrix(path)


def test_missing_file():
    with pytest.raises(InputError, match="no such file"):
        read_matrix("/nonexistent/file.csv")
