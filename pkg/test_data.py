"""Checks for LIBSVM parsing, synthetic data and block partitioning"""
import os
import sys

import numpy as np
import pytest

from minimax.data import (classification_accuracy, generate_synthetic, load_libsvm, parse_libsvm,
                          partition_blocks, serialize_libsvm)
from minimax.errors import DatasetError, ParameterError

HERE = os.path.dirname(os.path.abspath(__file__))


def test_parse_basic_file():
    ds = parse_libsvm("+1 1:0.5 3:2\n-1 2:1.5\n")
    assert ds.n == 2 and ds.p == 3
    assert np.array_equal(ds.labels, [1.0, -1.0])
    assert np.array_equal(ds.rows[0].indices, [0, 2])
    assert np.array_equal(ds.rows[0].values, [0.5, 2.0])


def test_crlf_and_comments():
    ds = parse_libsvm("# header\r\n1 1:1 # trailing\r\n\r\n0 2:1\r\n")
    assert ds.n == 2
    assert np.array_equal(ds.labels, [1.0, -1.0])


def test_errors_carry_line_numbers():
    with pytest.raises(DatasetError) as excinfo:
        parse_libsvm("+1 1:1\n+1 3:1 2:1\n")
    assert excinfo.value.line == 2
    with pytest.raises(DatasetError) as excinfo:
        parse_libsvm("+1 1:1\n-1 0:1\n")
    assert excinfo.value.line == 2
    with pytest.raises(DatasetError) as excinfo:
        parse_libsvm("abc 1:1\n")
    assert excinfo.value.line == 1
    with pytest.raises(DatasetError):
        parse_libsvm("+1 1:nan\n")
    with pytest.raises(DatasetError):
        parse_libsvm("+1 1\n")


def test_invalid_utf8_is_reported_by_line(tmp_path):
    path = tmp_path / "bad.libsvm"
    path.write_bytes(b"+1 1:0.5\n-1 2:\xff\n")
    with pytest.raises(DatasetError) as excinfo:
        load_libsvm(str(path))
    assert excinfo.value.line == 2
    with pytest.raises(DatasetError):
        parse_libsvm(b"\xfe 1:1\n")


def test_bytes_input():
    ds = parse_libsvm(b"+1 1:0.5\r\n-1 2:1\n")
    assert ds.n == 2 and ds.p == 2


def test_empty_dataset():
    with pytest.raises(DatasetError):
        parse_libsvm("# nothing\n\n")


def test_declared_dimension():
    assert parse_libsvm("+1 2:1\n", dim=6).p == 6
    with pytest.raises(DatasetError):
        parse_libsvm("+1 5:1\n", dim=3)


def test_serialize_round_trip():
    ds = generate_synthetic(12, 4, seed=3, density=0.6)
    assert parse_libsvm(serialize_libsvm(ds), dim=4) == ds


def test_synthetic_is_deterministic():
    assert generate_synthetic(30, 5, seed=9, margin_noise=0.2) == generate_synthetic(30, 5, seed=9, margin_noise=0.2)
    assert generate_synthetic(30, 5, seed=9) != generate_synthetic(30, 5, seed=10)
    with pytest.raises(ParameterError):
        generate_synthetic(0, 5, seed=1)


def test_partition_blocks():
    blocks = partition_blocks(10, 3)
    assert [len(b) for b in blocks] == [4, 3, 3]
    assert [i for b in blocks for i in b] == list(range(10))
    with pytest.raises(ParameterError):
        partition_blocks(3, 4)


def test_classification_accuracy():
    ds = parse_libsvm("+1 1:1\n-1 1:-1\n+1 1:-2\n")
    assert classification_accuracy(ds, np.array([1.0])) == pytest.approx(2 / 3)


def test_sample_file():
    ds = load_libsvm(os.path.join(HERE, "data", "sample.libsvm"))
    assert ds.n == 8 and ds.p == 5
    assert ds.labels.sum() == 0.0
    assert ds.to_csr().shape == (8, 5)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
