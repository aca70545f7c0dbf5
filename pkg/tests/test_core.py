import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisemat import PriorVector, TransitionMatrix, cyclic_shift_matrix, l11_error, validate
from noisemat.core import EstimatorConfig, ConfigError, LabeledDataset, TupleSet

from conftest import random_informative


class TestTransitionMatrix:
    def test_valid_construction(self):
        t = TransitionMatrix([[0.8, 0.2], [0.3, 0.7]])
        assert t.k == 2
        assert not t.entries.flags.writeable

    def test_rejects_bad_row_sum(self):
        with pytest.raises(ValueError, match="row 0 sums"):
            TransitionMatrix([[0.8, 0.1], [0.3, 0.7]])

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            TransitionMatrix([[1.2, -0.2], [0.3, 0.7]])

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            TransitionMatrix([[0.5, 0.3, 0.2]])

    def test_symmetric_closed_form(self):
        t = TransitionMatrix.symmetric(10, 0.4)
        assert np.allclose(np.diag(t.entries), 0.6)
        off = t.entries[~np.eye(10, dtype=bool)]
        assert np.allclose(off, 0.4 / 9)


class TestPriorVector:
    def test_uniform(self):
        p = PriorVector.uniform(4)
        assert np.allclose(p.entries, 0.25)

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError, match="sums to"):
            PriorVector([0.5, 0.6])


class TestCyclicShift:
    def test_zero_shift_is_identity_map(self):
        t = TransitionMatrix([[0.8, 0.2], [0.3, 0.7]])
        assert np.array_equal(cyclic_shift_matrix(t, 0), t.entries)

    def test_identity_shifted_once(self):
        out = cyclic_shift_matrix(np.eye(3), 1)
        # column j of the result comes from column (j + 1) % 3
        expected = np.zeros((3, 3))
        for i in range(3):
            expected[i, (i - 1) % 3] = 1.0
        assert np.array_equal(out, expected)

    def test_hand_example(self):
        out = cyclic_shift_matrix(TransitionMatrix([[0.8, 0.2], [0.3, 0.7]]), 1)
        assert np.allclose(out, [[0.2, 0.8], [0.7, 0.3]])

    def test_out_of_range_shift(self):
        with pytest.raises(ValueError, match="shift"):
            cyclic_shift_matrix(np.eye(3), 3)

    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 7))
    @settings(max_examples=30, deadline=None)
    def test_k_compositions_restore_matrix(self, seed, k):
        t, _ = random_informative(np.random.default_rng(seed), k)
        m = t.entries
        for _ in range(k):
            m = cyclic_shift_matrix(m, 1)
        assert np.allclose(m, t.entries)

    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 7))
    @settings(max_examples=30, deadline=None)
    def test_rows_still_stochastic(self, seed, k):
        rng = np.random.default_rng(seed)
        t, _ = random_informative(rng, k)
        r = int(rng.integers(k))
        assert np.allclose(cyclic_shift_matrix(t, r).sum(axis=1), 1.0)


class TestValidate:
    def test_identity_is_clean(self):
        report = validate(TransitionMatrix.identity(3))
        assert report.ok and report.informative and not report.singular

    def test_rank_one_is_singular(self):
        report = validate(np.array([[0.5, 0.5], [0.5, 0.5]]))
        assert report.singular

    def test_flags_non_informative_row(self):
        report = validate(np.array([[0.4, 0.6], [0.3, 0.7]]))
        assert report.non_informative_rows == (0,)
        assert not report.ok

    def test_reports_row_sum_violation_on_raw_matrix(self):
        report = validate(np.array([[0.9, 0.2], [0.3, 0.7]]))
        assert not report.row_stochastic

    def test_threshold_configurable(self):
        nearly = np.array([[0.5 + 5e-7, 0.5 - 5e-7], [0.5, 0.5]])
        assert validate(nearly, singular_tol=1e-6).singular
        assert not validate(nearly, singular_tol=1e-9).singular


class TestL11Error:
    def test_identical_is_zero(self):
        t = TransitionMatrix([[0.8, 0.2], [0.3, 0.7]])
        assert l11_error(t, t) == 0.0

    def test_hand_example(self):
        est = TransitionMatrix.identity(2)
        truth = TransitionMatrix([[0.9, 0.1], [0.1, 0.9]])
        assert l11_error(est, truth) == pytest.approx(0.2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            l11_error(np.eye(2), np.eye(3))

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_symmetry_and_triangle(self, seed):
        rng = np.random.default_rng(seed)
        a, _ = random_informative(rng, 4)
        b, _ = random_informative(rng, 4)
        c, _ = random_informative(rng, 4)
        assert l11_error(a, b) == pytest.approx(l11_error(b, a))
        assert l11_error(a, c) <= l11_error(a, b) + l11_error(b, c) + 1e-12


class TestDatasetAndTuples:
    def test_dataset_validation(self):
        with pytest.raises(ValueError, match="labels"):
            LabeledDataset(np.zeros((3, 2)), [0, 1, 5], 3)

    def test_dataset_subset_keeps_clean(self):
        ds = LabeledDataset(np.arange(8.0).reshape(4, 2), [0, 1, 0, 1], 2, clean_labels=[0, 0, 1, 1])
        sub = ds.subset([1, 3])
        assert sub.n == 2 and list(sub.clean_labels) == [0, 1]

    def test_tuple_distinctness(self):
        with pytest.raises(ValueError, match="repeated"):
            TupleSet([[0, 1, 1]])

    def test_disjoint_reuse_rejected(self):
        with pytest.raises(ValueError, match="reuses"):
            TupleSet([[0, 1, 2], [2, 3, 4]], disjoint=True)
        TupleSet([[0, 1, 2], [3, 4, 5]], disjoint=True)


class TestEstimatorConfig:
    def test_defaults_valid(self):
        cfg = EstimatorConfig()
        assert cfg.rounds == 50 and cfg.sample_size == 15000

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(rounds=0),
            dict(sample_size=0),
            dict(learning_rate=0.0),
            dict(tuple_mode="strange"),
            dict(sparse_reg_weight=-1.0),
            dict(sparse_reg_epsilon=0.0),
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            EstimatorConfig(**kwargs)
