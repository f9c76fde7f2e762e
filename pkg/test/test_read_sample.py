import numpy as np
import pytest

__import__("sys").path[0:0] = "."
from src.read_sample import *


def write_csv(tmp_path, text):
    path = tmp_path / "data.csv"
    path.write_text(text)
    return path


def test_read_sample(tmp_path):
    path = write_csv(tmp_path, "id,x1,x2,y1\na,0.1,0.2,1.5\nb,0.3,0.4,-2e-1\n")
    sample = read_sample(path)
    print(sample)
    assert (sample.n, sample.d, sample.k) == (2, 2, 1)
    assert np.array_equal(sample.X, [[0.1, 0.2], [0.3, 0.4]])
    assert np.array_equal(sample.Y, [[1.5], [-0.2]])


def test_columns_are_sorted_by_index(tmp_path):
    path = write_csv(tmp_path, "y2, x1, y1\n1, 2, 3\n")
    sample = read_sample(path)
    assert np.array_equal(sample.X, [[2.0]])
    assert np.array_equal(sample.Y, [[3.0, 1.0]])


read_error_data = [
    ("x1,y2\n1,2\n", "Missing column 'y1'."),
    ("x2,y1\n1,2\n", "Missing column 'x1'."),
    ("x1,y1\n", "no data row"),
    ("x1,y1\n1,2\n3,abc\n", ":3:2: non-numeric value 'abc' in column 'y1'."),
    ("x1,y1\n1,2\n,4\n", ":3:1: non-numeric value '' in column 'x1'."),
    ("x1,y1\n1,2\n1,2,3,4\n", "Error tokenizing data"),
    ("x1,y1\n1,inf\n", ":2:2: non-numeric value 'inf'"),
    ("x1,y1\n1;5,2\n", ":2:1: non-numeric value '1;5'"),
]


@pytest.mark.parametrize("text, message", read_error_data)
def test_read_errors(tmp_path, text, message):
    path = write_csv(tmp_path, text)
    with pytest.raises(DataFormatError) as error:
        read_sample(path)
    print(error.value)
    assert message in str(error.value)


def test_missing_file(tmp_path):
    with pytest.raises(DataFormatError, match="no such file"):
        read_sample(tmp_path / "nowhere.csv")


if __name__ == "__main__":  # pragma: no cover
    pytest.main(["-qq", __import__("sys").argv[0]])
