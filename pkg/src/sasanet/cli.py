"""Command-line entry points: synth, train, attribute, oracle, evaluate.

Exit codes: 0 success, 2 validation error, 3 runtime error or divergence.
Every output directory gets exactly one ``manifest.json`` recording the
config hash, seed, dataset fingerprint, version, and timestamps. All
randomness descends from ``--seed``. Heavy imports happen after argument
parsing so ``--threads`` can cap BLAS pools before numpy loads.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sasanet",
                                     description="Self-attributing set model toolkit")
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS/OpenMP thread cap (default 1 for reproducibility)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic task")
    p.add_argument("--task", choices=["linear", "binary"], required=True)
    p.add_argument("--n", type=int, default=10000, help="number of samples")
    p.add_argument("--features", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-std", type=float, default=0.1, help="linear task only")
    p.add_argument("--weights", type=str, default=None,
                   help="comma-separated feature weights (default: seeded draw)")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--config", required=True, help="JSON with 'model' and 'train' sections")
    p.add_argument("--out", required=True)

    p = sub.add_parser("attribute", help="self-attribution table for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=int, default=None, help="cap on rows")
    p.add_argument("--out", required=True)

    p = sub.add_parser("oracle", help="permutation-oracle attribution values")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--perms", type=int, default=10000)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="run fidelity/efficiency experiments")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--experiments", default="mask,add,subset,timing,oracle-rmse",
                   help="comma list from: mask,add,subset,timing,oracle-rmse")
    p.add_argument("--shift", action="store_true",
                   help="add a seeded per-dimension bias to the data first")
    p.add_argument("--samples", type=int, default=500, help="cap on evaluated rows")
    p.add_argument("--oracle-perms", type=int, default=10000)
    p.add_argument("--kernel-coalitions", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _config_hash(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_manifest(out_dir: Path, command: str, payload: dict, fingerprint: str,
                    seed, started: float) -> None:
    from . import __version__

    manifest = {
        "command": command,
        "config_hash": _config_hash(payload),
        "seed": seed,
        "dataset_fingerprint": fingerprint,
        "version": __version__,
        "started_at": started,
        "finished_at": time.time(),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _check_paths(*paths) -> list[str]:
    return [f"path does not exist: {p}" for p in paths if not Path(p).exists()]


def _cmd_synth(args) -> int:
    import numpy as np

    from .data import save_csv, save_split_manifest, train_test_split
    from .data.synthetic import synth_binary_classification, synth_linear_regression

    if args.weights is not None:
        weights = np.array([float(w) for w in args.weights.split(",")])
        if weights.size != args.features:
            print(f"error: --weights has {weights.size} entries for {args.features} features",
                  file=sys.stderr)
            return EXIT_VALIDATION
    else:
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, 11]))
        weights = rng.uniform(0.5, 2.0, size=args.features) * rng.choice([-1.0, 1.0], args.features)

    started = time.time()
    if args.task == "linear":
        ds, truth = synth_linear_regression(args.features, weights, args.noise_std,
                                            args.n, args.seed)
        truth_info = {"task": "linear", "weights": weights.tolist(),
                      "noise_std": args.noise_std}
    else:
        ds, _oracle = synth_binary_classification(args.features, weights, args.n, args.seed)
        truth_info = {"task": "binary", "weights": weights.tolist()}

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds.schema.save(out / "schema.json")
    train_ds, test_ds, manifest = train_test_split(ds, args.test_fraction, args.seed)
    save_csv(train_ds, out / "train.csv")
    save_csv(test_ds, out / "test.csv")
    save_split_manifest(manifest, out / "split.json")
    (out / "truth.json").write_text(json.dumps(truth_info, indent=2) + "\n")
    _write_manifest(out, "synth", vars(args), ds.fingerprint(), args.seed, started)
    print(f"wrote {len(train_ds)} train / {len(test_ds)} test rows to {out}")
    return EXIT_OK


def _load_model_dataset(model_path, data_path):
    from .data import load_csv
    from .model import SasanetModel

    model = SasanetModel.load(model_path)
    dataset = load_csv(data_path, model.schema, normalize_continuous=False)
    return model, dataset


def _cmd_train(args) -> int:
    problems = _check_paths(args.data, args.schema, args.config)
    config_raw = {}
    if not problems:
        try:
            config_raw = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            problems.append(f"--config is not valid JSON: {exc}")
    from .model import ModelConfig, ModelError
    from .training import TrainConfig, TrainingError

    model_cfg = train_cfg = None
    if not problems:
        try:
            model_cfg = ModelConfig.from_dict(config_raw.get("model", {}))
        except (ModelError, TypeError) as exc:
            problems.append(f"model config: {exc}")
        try:
            train_cfg = TrainConfig.from_dict(config_raw.get("train", {}))
        except (TrainingError, TypeError) as exc:
            problems.append(f"train config: {exc}")
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION

    from .data import FeatureSchema, load_csv
    from .training import TrainingDiverged, history_to_csv, train

    schema = FeatureSchema.load(args.schema)
    dataset = load_csv(args.data, schema, normalize_continuous=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        model, history = train(dataset, train_cfg, model_config=model_cfg,
                               diagnostics_dir=out)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    model.save(out / "checkpoint.ckpt")
    history_to_csv(history, out / "history.csv")
    (out / "config.json").write_text(json.dumps(
        {"model": model_cfg.to_dict(), "train": train_cfg.to_dict()},
        indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "train", {"args": vars(args), "config": config_raw},
                    dataset.fingerprint(), train_cfg.seed, started)
    final = history[-1] if history else {}
    print(f"trained {train_cfg.epochs} epochs; final loss "
          f"{final.get('loss', float('nan')):.6f}; checkpoint at {out / 'checkpoint.ckpt'}")
    return EXIT_OK


def _cmd_attribute(args) -> int:
    problems = _check_paths(args.model, args.data)
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    import numpy as np

    from .evaluation.report import write_csv

    model, dataset = _load_model_dataset(args.model, args.data)
    rows_cap = len(dataset) if args.samples is None else min(args.samples, len(dataset))
    ids = np.tile(np.arange(model.n_features), (rows_cap, 1))
    started = time.time()
    phi, f = model.attribution_batch(ids, dataset.values[:rows_cap])
    from .model import _apply_link

    scores = _apply_link(f, model.config.link)
    names = dataset.schema.names
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    for i in range(rows_cap):
        row = {"sample": i, "phi0": model.phi0, "f": float(f[i]),
               "score": float(np.atleast_1d(scores)[i]), "label": float(dataset.labels[i])}
        for j, name in enumerate(names):
            row[f"phi_{name}"] = float(phi[i, j])
        table.append(row)
    cols = ["sample"] + [f"phi_{n}" for n in names] + ["phi0", "f", "score", "label"]
    write_csv(out / "attributions.csv", table, cols)
    _write_manifest(out, "attribute", vars(args), dataset.fingerprint(), None, started)
    print(f"wrote attributions for {rows_cap} samples to {out / 'attributions.csv'}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    problems = _check_paths(args.model, args.data)
    if args.perms < 1:
        problems.append(f"--perms must be >= 1, got {args.perms}")
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    import numpy as np

    from .evaluation.report import write_csv
    from .oracle import ModelValueFunction, shapley_montecarlo

    model, dataset = _load_model_dataset(args.model, args.data)
    take = min(args.samples, len(dataset))
    names = dataset.schema.names
    started = time.time()
    rows, modes = [], set()
    sq_err, count = 0.0, 0
    ids = np.arange(model.n_features).reshape(1, -1)
    for i in range(take):
        x = dataset.values[i]
        res = shapley_montecarlo(ModelValueFunction(model, x), model.n_features,
                                 args.perms,
                                 seed=np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
        modes.add(res.mode)
        phi_self, _ = model.attribution_batch(ids, x.reshape(1, -1))
        for j, name in enumerate(names):
            rows.append({"sample": i, "feature": name, "phi": float(res.phi[j]),
                         "se": float(res.se[j]), "self_phi": float(phi_self[0, j]),
                         "mode": res.mode})
        sq_err += float(np.sum((phi_self[0] - res.phi) ** 2))
        count += model.n_features
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "oracle.csv", rows, ["sample", "feature", "phi", "se", "self_phi", "mode"])
    summary = {"mode": sorted(modes), "n_permutations": args.perms,
               "rmse_self_vs_oracle": (sq_err / count) ** 0.5 if count else None}
    (out / "oracle_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_manifest(out, "oracle", vars(args), dataset.fingerprint(), args.seed, started)
    print(f"oracle over {take} samples, mode={sorted(modes)}, "
          f"self-vs-oracle RMSE {summary['rmse_self_vs_oracle']}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    problems = _check_paths(args.model, args.data)
    wanted = [e.strip() for e in args.experiments.split(",") if e.strip()]
    known = {"mask", "add", "subset", "timing", "oracle-rmse"}
    for e in wanted:
        if e not in known:
            problems.append(f"unknown experiment '{e}' (choose from {sorted(known)})")
    if problems:
        for msg in problems:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION

    import numpy as np

    from .data.synthetic import shift_distribution
    from .evaluation import (
        emit_report,
        kernel_shap_method,
        masking_experiment,
        adding_experiment,
        metrics_suite,
        random_attribution_method,
        self_attribution_method,
        subset_size_eval,
        task_for_link,
        timing_experiment,
        timing_kernel_shap,
        timing_self_attribution,
    )
    from .oracle import ModelValueFunction, shapley_montecarlo

    model, dataset = _load_model_dataset(args.model, args.data)
    shift_bias = None
    if args.shift:
        dataset, shift_bias = shift_distribution(dataset, args.seed)
    take = min(args.samples, len(dataset))
    values = dataset.values[:take]
    labels = dataset.labels[:take]
    n = model.n_features
    started = time.time()

    methods = {
        "sasanet": self_attribution_method(),
        "kernelshap": kernel_shap_method(args.kernel_coalitions, seed=args.seed),
        "random": random_attribution_method(seed=args.seed),
    }
    results: dict = {}
    task = task_for_link(model.config.link)
    ids = np.tile(np.arange(n), (take, 1))
    phi, f = model.attribution_batch(ids, values)
    from .model import _apply_link

    preds = _apply_link(f, model.config.link)
    try:
        results["metrics"] = metrics_suite(np.atleast_1d(preds), labels, task)
    except Exception as exc:
        print(f"warning: base metrics unavailable: {exc}", file=sys.stderr)

    k_max = min(5, n - 1)
    if "mask" in wanted:
        results["masking"] = masking_experiment(model, methods, values, labels, k_max=k_max)
    if "add" in wanted:
        results["adding"] = adding_experiment(model, methods, values, labels, k_max=k_max)
    if "subset" in wanted:
        results["subset_size"] = subset_size_eval(model, values, labels, seed=args.seed)
    if "timing" in wanted:
        interpreters = {
            "sasanet": timing_self_attribution(),
            "kernelshap": timing_kernel_shap(args.kernel_coalitions, seed=args.seed),
        }
        results["timing"] = timing_experiment(model, interpreters, values,
                                              n_samples=min(take, 1000))
    if "oracle-rmse" in wanted:
        rows = []
        for i in range(min(take, 50)):
            res = shapley_montecarlo(ModelValueFunction(model, values[i]), n,
                                     args.oracle_perms,
                                     seed=np.random.SeedSequence([args.seed, i]).generate_state(1)[0])
            for j in range(n):
                rows.append({"sample": i, "feature": dataset.schema.names[j],
                             "oracle_phi": float(res.phi[j]), "self_phi": float(phi[i, j]),
                             "se": float(res.se[j])})
        results["oracle_rmse"] = rows

    results["attributions"] = {
        "feature_names": dataset.schema.names,
        "phi": phi,
        "phi0": model.phi0,
        "f0": float(f[0]) if take else model.phi0,
        "seed": args.seed,
    }
    out = Path(args.out)
    emit_report(results, out)
    payload = {"args": vars(args), "shift_bias": None if shift_bias is None else list(shift_bias)}
    _write_manifest(out, "evaluate", payload, dataset.fingerprint(), args.seed, started)
    print(f"evaluation report written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads >= 1:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    handlers = {
        "synth": _cmd_synth,
        "train": _cmd_train,
        "attribute": _cmd_attribute,
        "oracle": _cmd_oracle,
        "evaluate": _cmd_evaluate,
    }
    try:
        return handlers[args.command](args)
    except BrokenPipeError:
        return EXIT_RUNTIME
    except Exception as exc:  # surfaced with exit code 3 per contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
