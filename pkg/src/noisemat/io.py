"""File formats.

Matrices and vectors are UTF-8 text: the first line holds the dimensions
("K" for vectors, "K K" for matrices), each following line one row of
space-separated decimals rendered with 17 significant digits (lossless for
float64 and diffable).  Features are binary: an 8-byte header of two
little-endian uint32 (N, d) followed by N*d little-endian float32 values in
row-major order.  Labels are text with one integer per line.  A key=value
manifest binds the files of one dataset together and records K.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .core import ConsensusStats, DataError, LabeledDataset, PriorVector, TransitionMatrix

FLOAT_FMT = "%.17g"

FEATURES_FILE = "features.bin"
NOISY_LABELS_FILE = "noisy_labels.txt"
CLEAN_LABELS_FILE = "clean_labels.txt"
MANIFEST_FILE = "manifest.txt"
TRUTH_T_FILE = "truth_t.txt"
TRUTH_ROWS_FILE = "truth_rows.bin"


def _fmt_row(row: np.ndarray) -> str:
    return " ".join(FLOAT_FMT % v for v in row)


def write_matrix(path, m: np.ndarray) -> None:
    m = np.asarray(m, dtype=float)
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += [_fmt_row(r) for r in m]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty matrix file")
    dims = lines[0].split()
    if len(dims) != 2:
        raise DataError(f"{path}: first line must hold two dimensions")
    rows, cols = int(dims[0]), int(dims[1])
    body = [line.split() for line in lines[1 : 1 + rows]]
    if len(body) != rows or any(len(r) != cols for r in body):
        raise DataError(f"{path}: expected {rows} rows of {cols} values")
    return np.array([[float(v) for v in r] for r in body])


def write_vector(path, v: np.ndarray) -> None:
    v = np.asarray(v, dtype=float)
    Path(path).write_text(f"{v.shape[0]}\n{_fmt_row(v)}\n", encoding="utf-8")


def read_vector(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        raise DataError(f"{path}: vector file needs a length line and a value line")
    n = int(lines[0].split()[0])
    vals = lines[1].split()
    if len(vals) != n:
        raise DataError(f"{path}: expected {n} values, found {len(vals)}")
    return np.array([float(v) for v in vals])


def write_features(path, features: np.ndarray) -> None:
    x = np.asarray(features, dtype=np.float32)
    header = struct.pack("<II", x.shape[0], x.shape[1])
    Path(path).write_bytes(header + x.astype("<f4").tobytes(order="C"))


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise DataError(f"{path}: truncated feature file")
    n, d = struct.unpack("<II", raw[:8])
    expected = 8 + 4 * n * d
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes for {n}x{d}, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4", offset=8).reshape(n, d).astype(float)


def write_labels(path, labels: np.ndarray) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels), encoding="utf-8")


def read_labels(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8").split()
    return np.array([int(v) for v in text], dtype=np.int64)


def write_keyvalues(path, pairs: dict) -> None:
    Path(path).write_text(
        "".join(f"{k}={v}\n" for k, v in pairs.items()), encoding="utf-8"
    )


def read_keyvalues(path) -> dict:
    out = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}:{ln}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def save_dataset(
    dataset: LabeledDataset,
    out_dir,
    *,
    truth_t: Optional[TransitionMatrix] = None,
    truth_rows: Optional[np.ndarray] = None,
) -> Path:
    """Write the dataset files plus optional ground-truth sidecars; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_features(out / FEATURES_FILE, dataset.features)
    write_labels(out / NOISY_LABELS_FILE, dataset.noisy_labels)
    manifest = {
        "k": dataset.k,
        "n": dataset.n,
        "d": dataset.d,
        "features": FEATURES_FILE,
        "noisy_labels": NOISY_LABELS_FILE,
    }
    if dataset.clean_labels is not None:
        write_labels(out / CLEAN_LABELS_FILE, dataset.clean_labels)
        manifest["clean_labels"] = CLEAN_LABELS_FILE
    if truth_t is not None:
        write_matrix(out / TRUTH_T_FILE, truth_t.entries)
        manifest["truth_t"] = TRUTH_T_FILE
    if truth_rows is not None:
        write_features(out / TRUTH_ROWS_FILE, truth_rows)
        manifest["truth_rows"] = TRUTH_ROWS_FILE
    write_keyvalues(out / MANIFEST_FILE, manifest)
    return out / MANIFEST_FILE


def load_dataset(manifest_path) -> Tuple[LabeledDataset, Optional[np.ndarray], Optional[np.ndarray]]:
    """Read a dataset bundle; returns (dataset, truth matrix or None, truth rows or None)."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / MANIFEST_FILE
    base = manifest_path.parent
    meta = read_keyvalues(manifest_path)
    for key in ("k", "features", "noisy_labels"):
        if key not in meta:
            raise DataError(f"{manifest_path}: manifest misses required key {key!r}")
    features = read_features(base / meta["features"])
    noisy = read_labels(base / meta["noisy_labels"])
    clean = read_labels(base / meta["clean_labels"]) if "clean_labels" in meta else None
    dataset = LabeledDataset(features, noisy, int(meta["k"]), clean_labels=clean)
    truth_t = read_matrix(base / meta["truth_t"]) if "truth_t" in meta else None
    truth_rows = read_features(base / meta["truth_rows"]) if "truth_rows" in meta else None
    return dataset, truth_t, truth_rows


def write_consensus(path, stats: ConsensusStats) -> None:
    """Three-section text layout: c1, then c2 by shift r, then c3 by (r, s)."""
    lines = [str(stats.k), "c1", _fmt_row(stats.c1), "c2"]
    lines += [_fmt_row(stats.c2[r]) for r in range(stats.k)]
    lines.append("c3")
    for r in range(stats.k):
        lines += [_fmt_row(stats.c3[r, s]) for s in range(stats.k)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_consensus(path) -> ConsensusStats:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        k = int(lines[0])
        assert lines[1] == "c1" and lines[3] == "c2" and lines[4 + k] == "c3"
        c1 = np.array([float(v) for v in lines[2].split()])
        c2 = np.array([[float(v) for v in lines[4 + r].split()] for r in range(k)])
        c3_rows = lines[5 + k : 5 + k + k * k]
        c3 = np.array([[float(v) for v in row.split()] for row in c3_rows]).reshape(k, k, k)
    except (IndexError, ValueError, AssertionError) as exc:
        raise DataError(f"{path}: malformed consensus file ({exc})") from exc
    return ConsensusStats(k=k, c1=c1, c2=c2, c3=c3)


def save_estimate(out_dir, result, seed: int) -> None:
    """Write t_hat, p_hat and a run-metadata block."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "t_hat.txt", result.t_hat.entries)
    write_vector(out / "p_hat.txt", result.p_hat.entries)
    write_keyvalues(
        out / "estimate_meta.txt",
        {
            "seed": seed,
            "iterations_used": result.iterations_used,
            "final_objective": FLOAT_FMT % result.final_objective,
            "converged": str(result.converged).lower(),
        },
    )
