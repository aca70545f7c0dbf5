import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisemat import (
    ClusterSpec,
    EstimatorConfig,
    LabeledDataset,
    NeighborIndex,
    feasible_tuple_ratio,
    find_2nn,
    generate_features,
    sample_tuples,
)
from noisemat.core import DataError
from noisemat.knn import DistanceMetric, _unit_rows


def _dataset(features, labels=None, k=2, clean=None):
    features = np.asarray(features, dtype=float)
    if labels is None:
        labels = np.zeros(features.shape[0], dtype=int)
    return LabeledDataset(features, labels, k, clean_labels=clean)


def brute_force_2nn(features, center):
    """Independent exhaustive scan used as the oracle."""
    x = np.asarray(features, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    best = []
    for j in range(x.shape[0]):
        if j == center:
            continue
        cos = float(np.dot(x[center], x[j]) / (norms[center] * norms[j]))
        best.append((-cos, j))
    best.sort()
    return best[0][1], best[1][1]


class TestFind2NN:
    def test_axes_tie_break(self):
        ds = _dataset(np.eye(3), k=2)
        tuples = find_2nn(ds, [0])
        assert tuple(tuples.tuples[0]) == (0, 1, 2)

    def test_cosine_ordering(self):
        ds = _dataset([[1.0, 0.0], [0.99, 0.14], [0.0, 1.0]])
        tuples = find_2nn(ds, [0])
        assert tuple(tuples.tuples[0]) == (0, 1, 2)

    def test_two_cluster_dataset_stays_within_cluster(self):
        base = np.array([[1.0, 0.0], [0.0, 1.0]])
        feats = np.vstack([
            base[0] + [0.0, 0.01], base[0] + [0.0, 0.02], base[0] + [0.0, 0.03],
            base[1] + [0.01, 0.0], base[1] + [0.02, 0.0], base[1] + [0.03, 0.0],
        ])
        ds = _dataset(feats, k=2, clean=[0, 0, 0, 1, 1, 1])
        tuples = find_2nn(ds, np.arange(6))
        cluster = tuples.tuples // 3
        assert (cluster == cluster[:, :1]).all()

    def test_zero_norm_row_named(self):
        feats = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(DataError, match="row 1"):
            find_2nn(_dataset(feats), [0])

    def test_neighbor_never_center(self, rng):
        feats = rng.standard_normal((40, 5))
        tuples = find_2nn(_dataset(feats), np.arange(40)).tuples
        assert (tuples[:, 0] != tuples[:, 1]).all()
        assert (tuples[:, 0] != tuples[:, 2]).all()

    def test_matches_exhaustive_scan(self, rng):
        feats = rng.standard_normal((150, 6))
        ds = _dataset(feats)
        tuples = find_2nn(ds, np.arange(150)).tuples
        for center in range(0, 150, 7):
            n1, n2 = brute_force_2nn(feats, center)
            assert (tuples[center, 1], tuples[center, 2]) == (n1, n2)

    def test_metric_restricted(self):
        with pytest.raises(ValueError, match="unsupported"):
            DistanceMetric("euclidean")

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=10, deadline=None)
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        feats = rng.standard_normal((30, 4))
        perm = rng.permutation(30)
        base = find_2nn(_dataset(feats), np.arange(30)).tuples
        shuffled = find_2nn(_dataset(feats[perm]), np.arange(30)).tuples
        # map the shuffled result back into original row ids
        mapped = perm[shuffled]
        by_center = {int(row[0]): (int(row[1]), int(row[2])) for row in mapped}
        for row in base:
            assert by_center[int(row[0])] == (int(row[1]), int(row[2]))


class TestNeighborIndex:
    def test_tree_path_matches_block_scan(self, rng):
        # large enough to engage the KD path
        feats = rng.standard_normal((4500, 6))
        ds = _dataset(feats, labels=np.zeros(4500, dtype=int))
        index = NeighborIndex.build(ds)
        reference = find_2nn(ds, np.arange(4500)).tuples
        assert np.array_equal(index.nn1, reference[:, 1])
        assert np.array_equal(index.nn2, reference[:, 2])

    def test_unit_rows_rejects_zero(self):
        with pytest.raises(DataError, match="row 2"):
            _unit_rows(np.array([[1.0], [2.0], [0.0]]))


class TestSampleTuples:
    def _clustered(self, n_clusters=3, size=3):
        feats = []
        for c in range(n_clusters):
            angle = 2.0 * np.pi * c / n_clusters
            base = np.array([np.cos(angle), np.sin(angle)])
            for i in range(size):
                feats.append(base + 1e-3 * i * np.array([-np.sin(angle), np.cos(angle)]))
        feats = np.array(feats)
        labels = np.repeat(np.arange(n_clusters), size) % 2
        return _dataset(feats, labels=labels, k=2)

    def test_disjoint_fills_clusters(self):
        ds = self._clustered()
        cfg = EstimatorConfig(sample_size=9, tuple_mode="disjoint")
        tuples = sample_tuples(ds, cfg, 5)
        assert len(tuples) == 3  # floor(9 / 3)
        assert tuples.disjoint

    def test_disjoint_count_bounded(self, rng):
        feats = rng.standard_normal((40, 4))
        ds = _dataset(feats)
        cfg = EstimatorConfig(sample_size=40, tuple_mode="disjoint")
        assert len(sample_tuples(ds, cfg, 0)) <= 40 // 3

    def test_single_tuple(self, rng):
        feats = rng.standard_normal((10, 3))
        cfg = EstimatorConfig(sample_size=1)
        tuples = sample_tuples(_dataset(feats), cfg, 1)
        assert len(tuples) == 1
        assert len(set(tuples.tuples[0].tolist())) == 3

    def test_same_seed_identical(self, rng):
        feats = rng.standard_normal((50, 4))
        ds = _dataset(feats)
        cfg = EstimatorConfig(sample_size=20)
        a = sample_tuples(ds, cfg, 77)
        b = sample_tuples(ds, cfg, 77)
        assert np.array_equal(a.tuples, b.tuples)

    def test_sample_size_checked(self, rng):
        feats = rng.standard_normal((10, 3))
        cfg = EstimatorConfig(sample_size=11)
        with pytest.raises(ValueError, match="sample_size"):
            sample_tuples(_dataset(feats), cfg, 0)

    def test_overlapping_draws_without_replacement(self, rng):
        feats = rng.standard_normal((30, 4))
        cfg = EstimatorConfig(sample_size=30)
        tuples = sample_tuples(_dataset(feats), cfg, 3)
        assert np.unique(tuples.tuples[:, 0]).size == 30


class TestFeasibleRatio:
    def test_single_class_is_one(self, rng):
        feats = rng.standard_normal((12, 3))
        ds = _dataset(feats, k=2, clean=np.zeros(12, dtype=int))
        tuples = find_2nn(ds, np.arange(12))
        assert feasible_tuple_ratio(ds, tuples) == 1.0

    def test_hand_built_half(self):
        feats = np.vstack([np.eye(3) + 1e-3, np.eye(3) * -1.0])
        ds = _dataset(feats, k=2, clean=[0, 0, 0, 1, 1, 1])
        tuples_ok = np.array([[0, 1, 2]])
        tuples_cross = np.array([[3, 0, 1]])
        from noisemat import TupleSet

        both = TupleSet(np.vstack([tuples_ok, tuples_cross]))
        assert feasible_tuple_ratio(ds, both) == pytest.approx(0.5)

    def test_requires_clean_labels(self, rng):
        feats = rng.standard_normal((9, 3))
        ds = _dataset(feats)
        tuples = find_2nn(ds, np.arange(9))
        with pytest.raises(DataError, match="clean"):
            feasible_tuple_ratio(ds, tuples)

    def test_clean_generator_ratio_high(self):
        spec = ClusterSpec(k=4, dim=6, points=600, separation=0.4, spread=0.02)
        ds = generate_features(spec, 11)
        tuples = find_2nn(ds, np.arange(ds.n))
        assert feasible_tuple_ratio(ds, tuples) >= 0.999
