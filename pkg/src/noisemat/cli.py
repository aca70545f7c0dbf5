"""Command-line pipeline: generate, estimate, estimate-local, train, eval, sweep.

Configuration files are flat ``key=value`` text so that inputs and outputs
stay trivially diffable.  Every command takes ``--seed``; identical
invocations produce identical artifacts.  Exit codes: 0 success, 2 usage or
configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io
from .core import (
    ConfigError,
    DataError,
    EstimatorConfig,
    LabeledDataset,
    NumericalError,
    PriorVector,
    TransitionMatrix,
    l11_error,
)
from .local import build_local_datasets, default_zeta, estimate_local
from .solver import estimate_transition_matrix
from .synth import ClusterSpec, NoiseSpec, apply_noise, apply_soft_clusterability, generate_features
from .train import LinearModel, accuracy, train_ce, train_forward

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigFile:
    """key=value file with line numbers preserved for diagnostics."""

    def __init__(self, path):
        self.path = Path(path)
        self.values = {}
        self.lines = {}
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc})") from exc
        for ln, line in enumerate(text.splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{self.path}:{ln}: expected key=value, got {stripped!r}")
            key, value = stripped.split("=", 1)
            key = key.strip()
            if key in self.values:
                raise ConfigError(f"{self.path}:{ln}: duplicate key {key!r}")
            self.values[key] = value.strip()
            self.lines[key] = ln

    def error(self, key: str, message: str) -> ConfigError:
        ln = self.lines.get(key, "?")
        return ConfigError(f"{self.path}:{ln}: field {key!r}: {message}")

    def get(self, key: str, convert=str, default=None, required: bool = False):
        if key not in self.values:
            if required:
                raise ConfigError(f"{self.path}: missing required field {key!r}")
            return default
        raw = self.values[key]
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            raise self.error(key, f"cannot parse {raw!r} ({exc})") from exc


def _float_list(raw: str) -> List[float]:
    return [float(v) for v in raw.split(",") if v.strip()]


def _int_list(raw: str) -> List[int]:
    return [int(v) for v in raw.split(",") if v.strip()]


def _cluster_spec(cfg: ConfigFile, n_override: Optional[int] = None) -> ClusterSpec:
    prior_vals = cfg.get("prior", _float_list)
    prior = PriorVector(np.array(prior_vals)) if prior_vals is not None else None
    return ClusterSpec(
        k=cfg.get("k", int, required=True),
        dim=cfg.get("dim", int, required=True),
        points=n_override if n_override is not None else cfg.get("n", int, required=True),
        clusters_per_class=cfg.get("clusters_per_class", int, 1),
        separation=cfg.get("separation", float, 0.3),
        spread=cfg.get("spread", float, 0.02),
        prior=prior,
    )


def _noise_spec(cfg: ConfigFile, seed: int, eta_override: Optional[float] = None) -> Optional[NoiseSpec]:
    kind = cfg.get("noise", str, "symmetric")
    if kind == "none":
        return None
    eta = eta_override if eta_override is not None else cfg.get("eta", float, 0.2)
    if not 0.0 <= eta < 1.0:
        raise cfg.error("eta", f"must lie in [0, 1), got {eta}")
    matrix = None
    if kind == "matrix":
        kind = "explicit_matrix"
        matrix_file = cfg.get("matrix_file", str, required=True)
        matrix = TransitionMatrix(io.read_matrix(cfg.path.parent / matrix_file))
    if kind not in ("symmetric", "instance_dependent", "explicit_matrix"):
        raise cfg.error("noise", f"unknown noise kind {kind!r}")
    return NoiseSpec(kind=kind, eta=eta, matrix=matrix, seed=seed)


def _generate_bundle(cfg: ConfigFile, seed: int, out_dir, *, n_override=None, eta_override=None):
    spec = _cluster_spec(cfg, n_override)
    dataset = generate_features(spec, seed)
    soft_e = cfg.get("soft_e", float, 0.0)
    if soft_e:
        if not 0.0 <= soft_e < 1.0 / spec.k:
            raise cfg.error("soft_e", f"must lie in [0, 1/k), got {soft_e}")
        dataset = apply_soft_clusterability(dataset, soft_e, seed)
    noise = _noise_spec(cfg, seed, eta_override)
    truth_t = None
    truth_rows = None
    if noise is not None:
        dataset, truth = apply_noise(dataset, noise)
        if isinstance(truth, TransitionMatrix):
            truth_t = truth
        else:
            truth_rows = truth
            from .synth import effective_global_truth

            truth_t = TransitionMatrix(
                effective_global_truth(truth_rows, dataset.clean_labels, dataset.k)
            )
    else:
        truth_t = TransitionMatrix.identity(spec.k)
    return io.save_dataset(dataset, out_dir, truth_t=truth_t, truth_rows=truth_rows)


def cmd_generate(args) -> int:
    cfg = ConfigFile(args.config)
    seed = args.seed if args.seed is not None else cfg.get("seed", int, 0)
    manifest = _generate_bundle(cfg, seed, args.out_dir)
    print(f"wrote {manifest}")
    return EXIT_OK


def _estimator_config(args) -> EstimatorConfig:
    base = EstimatorConfig()
    if args.config:
        cfg = ConfigFile(args.config)
        base = EstimatorConfig(
            rounds=cfg.get("rounds", int, base.rounds),
            sample_size=cfg.get("sample_size", int, base.sample_size),
            max_iters=cfg.get("max_iters", int, base.max_iters),
            learning_rate=cfg.get("learning_rate", float, base.learning_rate),
            seed=cfg.get("seed", int, base.seed),
            tuple_mode=cfg.get("tuple_mode", str, base.tuple_mode),
            sparse_reg_weight=cfg.get("sparse_reg_weight", float, base.sparse_reg_weight),
            sparse_reg_epsilon=cfg.get("sparse_reg_epsilon", float, base.sparse_reg_epsilon),
        )
    updates = {}
    if args.rounds is not None:
        updates["rounds"] = args.rounds
    if args.sample_size is not None:
        updates["sample_size"] = args.sample_size
    if args.seed is not None:
        updates["seed"] = args.seed
    return replace(base, **updates) if updates else base


def cmd_estimate(args) -> int:
    dataset, truth_t, _ = io.load_dataset(args.dataset)
    config = _estimator_config(args)
    if config.sample_size > dataset.n:
        config = replace(config, sample_size=dataset.n)
    local_mode = getattr(args, "local", False) or args.command == "estimate-local"
    if local_mode and config.sparse_reg_weight == 0.0:
        config = replace(config, sparse_reg_weight=0.1)
    result = estimate_transition_matrix(dataset, config)
    out = Path(args.out_dir)
    io.save_estimate(out, result, config.seed)
    diag = float(np.diag(result.t_hat.entries).mean())
    print(f"diagonal_mean={diag:.6f} objective={result.final_objective:.6g}")
    if truth_t is not None:
        print(f"l11_error={l11_error(result.t_hat.entries, truth_t):.6f}")

    if local_mode:
        zeta = args.zeta if args.zeta is not None else default_zeta(dataset.k)
        plan = build_local_datasets(dataset, args.local_size, args.local_rounds, config.seed)
        locals_dir = out / "locals"
        locals_dir.mkdir(parents=True, exist_ok=True)
        estimates = estimate_local(dataset, plan, result, config, zeta)
        index = {}
        for center, matrix in estimates:
            name = f"center_{center:08d}.txt"
            io.write_matrix(locals_dir / name, matrix.entries)
            index[center] = name
        io.write_keyvalues(locals_dir / "locals_manifest.txt", index)
        print(f"local_estimates={len(estimates)}")
    return EXIT_OK


def cmd_train(args) -> int:
    dataset, truth_t, _ = io.load_dataset(args.dataset)
    eval_set = None
    if args.test_manifest:
        test_ds, _, _ = io.load_dataset(args.test_manifest)
        labels = test_ds.clean_labels if test_ds.clean_labels is not None else test_ds.noisy_labels
        eval_set = (test_ds.features, labels)
    metrics: List = []
    if args.correction == "none":
        model = train_ce(dataset, args.epochs, args.lr, args.seed, eval_set=eval_set, metrics=metrics)
    else:
        if args.correction == "truth":
            if truth_t is None:
                raise DataError("dataset bundle has no ground-truth matrix")
            t = TransitionMatrix(truth_t)
        else:
            t = TransitionMatrix(io.read_matrix(args.correction))
        model = train_forward(
            dataset, t, args.epochs, args.lr, args.seed, eval_set=eval_set, metrics=metrics
        )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix(out / "weights.txt", model.weights)
    io.write_vector(out / "bias.txt", model.bias)
    with (out / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "clean_test_accuracy"])
        for epoch, loss, acc in metrics:
            writer.writerow([epoch, io.FLOAT_FMT % loss, "" if np.isnan(acc) else io.FLOAT_FMT % acc])
    if metrics:
        print(f"final_train_loss={metrics[-1][1]:.6f}")
        if eval_set is not None:
            print(f"final_test_accuracy={metrics[-1][2]:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    weights = io.read_matrix(Path(args.model_dir) / "weights.txt")
    bias = io.read_vector(Path(args.model_dir) / "bias.txt")
    model = LinearModel(weights, bias)
    dataset, _, _ = io.load_dataset(args.dataset)
    labels = dataset.clean_labels if dataset.clean_labels is not None else dataset.noisy_labels
    acc = accuracy(model, dataset.features, labels)
    line = f"accuracy={io.FLOAT_FMT % acc}"
    print(line)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
    return EXIT_OK


def _sweep_point(payload):
    (config_path, param, value, seed) = payload
    cfg = ConfigFile(config_path)
    start = time.perf_counter()
    n_override = int(value) if param == "n" else None
    eta_override = float(value) if param == "eta" else None
    spec = _cluster_spec(cfg, n_override)
    dataset = generate_features(spec, seed)
    noise = _noise_spec(cfg, seed, eta_override)
    if noise is None:
        raise ConfigError(f"{config_path}: sweeps need a noise model")
    dataset, truth = apply_noise(dataset, noise)
    if not isinstance(truth, TransitionMatrix):
        from .synth import effective_global_truth

        truth = TransitionMatrix(effective_global_truth(truth, dataset.clean_labels, dataset.k))
    sample_size = cfg.get("sample_size", str, "half")
    if sample_size == "half":
        sample_size = max(1, dataset.n // 2)
    else:
        sample_size = min(int(sample_size), dataset.n)
    est_cfg = EstimatorConfig(
        rounds=cfg.get("rounds", int, 50),
        sample_size=sample_size,
        max_iters=cfg.get("max_iters", int, 1500),
        learning_rate=cfg.get("learning_rate", float, 0.1),
        seed=seed,
    )
    result = estimate_transition_matrix(dataset, est_cfg)
    err = l11_error(result.t_hat.entries, truth)
    return (value, seed, err, time.perf_counter() - start)


def cmd_sweep(args) -> int:
    cfg = ConfigFile(args.config)
    param = cfg.get("param", str, required=True)
    if param not in ("n", "eta"):
        raise cfg.error("param", f"must be 'n' or 'eta', got {param!r}")
    values = cfg.get("values", _float_list, required=True)
    if param == "n":
        values = [int(v) for v in values]
    seeds_raw = cfg.get("seeds", str, "1")
    seeds = _int_list(seeds_raw) if "," in seeds_raw else list(range(int(seeds_raw)))
    points = [(str(cfg.path), param, v, s) for v in values for s in seeds]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_sweep_point, points))
    else:
        rows = [_sweep_point(p) for p in points]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([param, "seed", "l11_error", "runtime_seconds"])
        for value, seed, err, runtime in rows:
            writer.writerow([value, seed, io.FLOAT_FMT % err, f"{runtime:.6f}"])
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisemat",
        description="Estimate label-noise transition matrices from neighbor-label consensus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset bundle with ground truth")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_generate)

    for name in ("estimate", "estimate-local"):
        p = sub.add_parser(name, help="estimate the transition matrix of a dataset bundle")
        p.add_argument("dataset", help="manifest file or bundle directory")
        p.add_argument("--config", default=None, help="estimator key=value config")
        p.add_argument("--rounds", type=int, default=None)
        p.add_argument("--sample-size", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", required=True)
        if name == "estimate":
            p.add_argument("--local", action="store_true", help="also write per-center local estimates")
        p.add_argument("--local-size", type=int, default=250)
        p.add_argument("--local-rounds", type=int, default=10)
        p.add_argument("--zeta", type=float, default=None)
        p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train", help="train the linear classifier on noisy labels")
    p.add_argument("dataset")
    p.add_argument("--correction", default="none", help="'none', 'truth', or a matrix file path")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-manifest", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a dataset")
    p.add_argument("model_dir")
    p.add_argument("dataset")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid of estimation runs, CSV output")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
