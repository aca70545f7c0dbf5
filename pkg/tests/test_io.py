import numpy as np
import pytest

from noisemat import ClusterSpec, apply_symmetric_noise, forward_model, generate_features
from noisemat.core import DataError
from noisemat import io

from conftest import random_informative


def test_matrix_round_trip(tmp_path, rng):
    t, _ = random_informative(rng, 5)
    path = tmp_path / "m.txt"
    io.write_matrix(path, t.entries)
    assert np.array_equal(io.read_matrix(path), t.entries)  # 17 significant digits: lossless


def test_matrix_header_and_digits(tmp_path):
    path = tmp_path / "m.txt"
    io.write_matrix(path, np.array([[1.0 / 3.0, 2.0 / 3.0]]))
    lines = path.read_text().splitlines()
    assert lines[0] == "1 2"
    mantissa = lines[1].split()[0].split(".")[1]
    assert len(mantissa) >= 12


def test_vector_round_trip(tmp_path, rng):
    v = rng.random(7)
    v /= v.sum()
    path = tmp_path / "v.txt"
    io.write_vector(path, v)
    assert np.array_equal(io.read_vector(path), v)


def test_features_round_trip(tmp_path, rng):
    x = rng.standard_normal((11, 3)).astype(np.float32).astype(float)
    path = tmp_path / "f.bin"
    io.write_features(path, x)
    assert np.array_equal(io.read_features(path), x)


def test_features_header_is_little_endian(tmp_path):
    path = tmp_path / "f.bin"
    io.write_features(path, np.zeros((258, 2)))
    raw = path.read_bytes()
    assert raw[:4] == (258).to_bytes(4, "little")
    assert raw[4:8] == (2).to_bytes(4, "little")
    assert len(raw) == 8 + 4 * 258 * 2


def test_features_size_mismatch_detected(tmp_path):
    path = tmp_path / "f.bin"
    io.write_features(path, np.zeros((4, 2)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataError, match="expected"):
        io.read_features(path)


def test_dataset_bundle_round_trip(tmp_path):
    spec = ClusterSpec(k=3, dim=4, points=60, separation=0.5, spread=0.05)
    ds = generate_features(spec, 9)
    noisy, truth = apply_symmetric_noise(ds, 0.2, 9)
    manifest = io.save_dataset(noisy, tmp_path / "bundle", truth_t=truth)
    loaded, truth_t, truth_rows = io.load_dataset(manifest)
    assert loaded.k == 3 and loaded.n == 60
    assert np.array_equal(loaded.noisy_labels, noisy.noisy_labels)
    assert np.array_equal(loaded.clean_labels, noisy.clean_labels)
    assert np.allclose(loaded.features, noisy.features, atol=1e-7)  # float32 storage
    assert np.array_equal(truth_t, truth.entries)
    assert truth_rows is None


def test_load_dataset_accepts_directory(tmp_path):
    spec = ClusterSpec(k=2, dim=3, points=12, separation=0.5, spread=0.05)
    ds = generate_features(spec, 1)
    io.save_dataset(ds, tmp_path / "bundle")
    loaded, _, _ = io.load_dataset(tmp_path / "bundle")
    assert loaded.n == 12


def test_manifest_missing_key(tmp_path):
    (tmp_path / "manifest.txt").write_text("k=3\n")
    with pytest.raises(DataError, match="features"):
        io.load_dataset(tmp_path / "manifest.txt")


def test_keyvalue_malformed_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("k=3\nnota-pair\n")
    with pytest.raises(DataError, match="bad.txt:2"):
        io.read_keyvalues(path)


def test_consensus_round_trip(tmp_path, rng):
    t, p = random_informative(rng, 4)
    stats = forward_model(t, p)
    path = tmp_path / "stats.txt"
    io.write_consensus(path, stats)
    loaded = io.read_consensus(path)
    assert np.array_equal(loaded.c1, stats.c1)
    assert np.array_equal(loaded.c2, stats.c2)
    assert np.array_equal(loaded.c3, stats.c3)


def test_consensus_layout_sections(tmp_path, rng):
    t, p = random_informative(rng, 3)
    path = tmp_path / "stats.txt"
    io.write_consensus(path, forward_model(t, p))
    lines = path.read_text().splitlines()
    assert lines[0] == "3"
    assert lines[1] == "c1" and lines[3] == "c2" and lines[7] == "c3"
    assert len(lines) == 1 + 2 + 1 + 3 + 1 + 9
