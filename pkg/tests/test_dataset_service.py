"""Tests for the benchmark generators, CSV ingestion and the group-level split."""

import math

import numpy as np
import pytest

from pnnlab.dataset_service import (
    CubicSpec,
    Dataset,
    IshigamiSpec,
    Standardizer,
    gen_cubic,
    gen_heteroscedastic_fixture,
    gen_ishigami,
    ishigami,
    load_csv,
    split,
    write_csv,
)
from pnnlab.errors import ConfigurationError, DatasetError, DomainError, StorageError
from pnnlab.model_selection import group_replicates
from pnnlab.numerics import Rng


class TestCubic:

    def test_default_protocol_counts(self):
        data = gen_cubic(CubicSpec(n_unique=100, replicates=10, seed=0))
        assert data.n == 1000
        assert data.n_groups == 100
        assert data.provenance == "cubic"
        assert np.all((data.inputs >= -1.0) & (data.inputs <= 1.0))

    def test_deterministic(self):
        a = gen_cubic(CubicSpec(seed=4))
        b = gen_cubic(CubicSpec(seed=4))
        np.testing.assert_array_equal(a.outputs, b.outputs)

    def test_replicate_moments(self):
        data = gen_cubic(CubicSpec(n_unique=1, replicates=100_000, seed=1))
        x = data.inputs[0, 0]
        assert abs(data.outputs.mean() - x ** 3) < 0.01
        assert data.outputs.std(ddof=1) == pytest.approx(0.1 * (2.0 + x), rel=0.02)

    def test_noise_scale_formula(self):
        assert CubicSpec.noise_scale * (2.0 + 1.0) == pytest.approx(0.3, abs=1e-15)
        assert CubicSpec.noise_scale * (2.0 - 1.0) == pytest.approx(0.1, abs=1e-15)

    def test_invalid_spec(self):
        with pytest.raises(ConfigurationError):
            CubicSpec(n_unique=0)
        with pytest.raises(ConfigurationError):
            CubicSpec(replicates=0)


class TestIshigami:

    def test_closed_forms(self):
        assert ishigami([0.0, 0.0, 0.0]) == 0.0
        assert ishigami([math.pi / 2, 0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)
        assert ishigami([math.pi / 2, math.pi / 2, 1.0], a=7.0, b=0.1) == pytest.approx(8.1, abs=1e-12)

    def test_matrix_input(self):
        X = np.array([[0.0, 0.0, 0.0], [math.pi / 2, math.pi / 2, 1.0]])
        np.testing.assert_allclose(ishigami(X), [0.0, 8.1], atol=1e-12)

    def test_odd_in_first_input_without_a(self):
        X = Rng(6).uniform(-math.pi, math.pi, size=(200, 3))
        flipped = X.copy()
        flipped[:, 0] = -flipped[:, 0]
        np.testing.assert_allclose(ishigami(flipped, a=0.0), -ishigami(X, a=0.0), rtol=0, atol=1e-15)

    def test_noise_variance(self):
        assert IshigamiSpec.noise_factor * abs(ishigami([math.pi / 2, math.pi / 2, 1.0])) == pytest.approx(1.62, abs=1e-12)

    def test_default_protocol_counts(self):
        data = gen_ishigami(IshigamiSpec(n_unique=300, replicates=10, seed=0))
        assert data.n == 3000
        assert data.dim == 3
        assert np.all(np.abs(data.inputs) <= math.pi)

    def test_replicate_variance(self):
        data = gen_ishigami(IshigamiSpec(n_unique=1, replicates=100_000, seed=3))
        f = ishigami(data.inputs[0])
        assert data.outputs.var(ddof=1) == pytest.approx(0.2 * abs(f), rel=0.03)

    def test_wrong_dimension(self):
        with pytest.raises(DomainError):
            ishigami([0.0, 1.0])


class TestHeteroscedasticFixture:

    def test_shapes_and_moments(self):
        data, means, variances = gen_heteroscedastic_fixture(n_unique=10, replicates=50, dim=7, seed=2)
        assert data.dim == 7
        assert data.n == 500
        assert means.shape == (10,) and variances.shape == (10,)
        emp = group_replicates(data)
        np.testing.assert_allclose(emp.emp_mean, means, rtol=0.05)
        assert np.all(variances > 0)


class TestCsv:

    def test_six_row_fixture(self, tmp_path):
        path = tmp_path / "six.csv"
        path.write_text("x1,x2,y\n0.5,1,2.0\n0.5,1,2.5\n0.25,3,1.0\n0.5,1,3.0\n0.25,3,1.5\n0.25,3,0.5\n")
        data = load_csv(str(path))
        assert data.n == 6
        assert data.n_groups == 2
        np.testing.assert_array_equal(np.bincount(data.group_key), [3, 3])
        np.testing.assert_array_equal(data.group_key, [0, 0, 1, 0, 1, 1])

    def test_last_digit_makes_distinct_groups(self, tmp_path):
        path = tmp_path / "digits.csv"
        path.write_text("x1,y\n1.0000000000000002,1\n1.0000000000000004,2\n")
        assert load_csv(str(path)).n_groups == 2

    def test_round_trip(self, tmp_path):
        data = gen_cubic(CubicSpec(n_unique=30, replicates=4, seed=8))
        path = str(tmp_path / "cubic.csv")
        write_csv(data, path)
        loaded = load_csv(path)
        np.testing.assert_array_equal(loaded.inputs, data.inputs)
        np.testing.assert_array_equal(loaded.outputs, data.outputs)
        np.testing.assert_array_equal(loaded.group_key, data.group_key)

    def test_header(self, tmp_path):
        data = gen_ishigami(IshigamiSpec(n_unique=2, replicates=2, seed=0))
        path = tmp_path / "ishigami.csv"
        write_csv(data, str(path))
        assert path.read_text().splitlines()[0] == "x1,x2,x3,y,group"

    def test_group_column_mode(self, tmp_path):
        path = tmp_path / "grouped.csv"
        path.write_text("x1,y,run\n1.0,2.0,a\n1.0,2.5,a\n2.0,1.0,b\n")
        data = load_csv(str(path), group_mode="column", group_column="run")
        assert data.dim == 1
        np.testing.assert_array_equal(data.group_key, [0, 0, 1])

    def test_explicit_columns(self, tmp_path):
        path = tmp_path / "wide.csv"
        path.write_text("a,b,out\n1,2,3\n4,5,6\n")
        data = load_csv(str(path), input_columns=["b"], output_column="out")
        np.testing.assert_array_equal(data.inputs, [[2.0], [5.0]])
        np.testing.assert_array_equal(data.outputs, [3.0, 6.0])

    def test_parse_error_has_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,y\n1,2\n3,abc\n")
        with pytest.raises(DatasetError) as excinfo:
            load_csv(str(path))
        assert excinfo.value.line == 3
        assert "line 3" in str(excinfo.value)

    def test_line_number_counts_blank_lines(self, tmp_path):
        path = tmp_path / "gappy.csv"
        path.write_text("x1,y\n1,2\n\n3,4\n5,abc\n")
        with pytest.raises(DatasetError) as excinfo:
            load_csv(str(path))
        assert excinfo.value.line == 5

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "gappy.csv"
        path.write_text("x1,y\n1,2\n\n1,4\n\n")
        data = load_csv(str(path))
        assert data.n == 2
        assert data.n_groups == 1

    def test_ragged_rows(self, tmp_path):
        short = tmp_path / "short.csv"
        short.write_text("x1,y\n1,2\n3\n")
        with pytest.raises(DatasetError):
            load_csv(str(short))
        long = tmp_path / "long.csv"
        long.write_text("x1,y\n1,2\n3,4,5\n")
        with pytest.raises(DatasetError):
            load_csv(str(long))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DatasetError):
            load_csv(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            load_csv(str(tmp_path / "nope.csv"))

    def test_missing_output_column(self, tmp_path):
        path = tmp_path / "noy.csv"
        path.write_text("x1,x2\n1,2\n")
        with pytest.raises(DatasetError):
            load_csv(str(path))


class TestSplit:

    def test_counts_and_no_leakage(self):
        data = gen_cubic(CubicSpec(n_unique=10, replicates=3, seed=0))
        train, test = split(data, 0.2, seed=1)
        assert test.n_groups == 2
        assert train.n_groups == 8
        assert train.n + test.n == data.n
        assert not set(train.group_key) & set(test.group_key)

    def test_large_group_count(self):
        n = 23_465
        data = Dataset(np.arange(n, dtype=np.float64)[:, None], np.zeros(n), np.arange(n))
        _, test = split(data, 0.2, seed=0)
        assert test.n_groups == 4_693

    def test_deterministic(self):
        data = gen_cubic(CubicSpec(n_unique=20, replicates=2, seed=0))
        a = split(data, 0.3, seed=5)[1]
        b = split(data, 0.3, seed=5)[1]
        np.testing.assert_array_equal(a.group_key, b.group_key)

    def test_too_few_groups(self):
        data = Dataset(np.zeros((3, 1)), [1.0, 2.0, 3.0], [0, 0, 0])
        with pytest.raises(DomainError):
            split(data, 0.5, seed=0)

    def test_invalid_fraction(self):
        data = gen_cubic(CubicSpec(n_unique=4, replicates=1, seed=0))
        with pytest.raises(DomainError):
            split(data, 1.0, seed=0)


class TestStandardizer:

    def test_fit_transform(self):
        X = Rng(0).uniform(-3, 5, size=(50, 2))
        X[:, 1] = 4.0
        s = Standardizer.fit(X)
        Z = s.transform(X)
        np.testing.assert_allclose(Z[:, 0].mean(), 0.0, atol=1e-12)
        np.testing.assert_allclose(Z[:, 0].std(), 1.0, rtol=1e-12)
        np.testing.assert_array_equal(Z[:, 1], 0.0)

    def test_dict_round_trip(self):
        s = Standardizer(np.array([1.0, 2.0]), np.array([0.5, 4.0]))
        restored = Standardizer.from_dict(s.to_dict())
        np.testing.assert_array_equal(restored.mean, s.mean)
        np.testing.assert_array_equal(restored.scale, s.scale)


class TestDataset:

    def test_inconsistent_group_inputs(self):
        with pytest.raises(DomainError):
            Dataset(np.array([[0.0], [1.0]]), [1.0, 2.0], [0, 0])

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            Dataset(np.zeros((2, 1)), [1.0], [0, 1])
