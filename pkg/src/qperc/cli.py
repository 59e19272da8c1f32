"""Reproduction harness: seeded experiment runs driven by JSON config files.

Subcommands cover the full experiment surface: phase classification with
optional noise sweeps, multiclass entanglement classification, the
mapping-equivalence report, the approximation error-scaling benchmark, and
dataset generation.  Every output artifact embeds the fully resolved
config (no hidden defaults) and runs are byte-reproducible from
(config, seeds): output files contain no timestamps, and all randomness
flows from the explicit seeds.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import approx, classify, hamiltonians, kernels
from .circuits import OptimizerConfig
from .classify import FeatureConfig, TrainConfig, train_classifier
from .datasets import (
    NoiseSpec,
    build_entanglement_dataset,
    build_phase_dataset,
    save_dataset,
)


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "phase-classify": {
        "experiment": "phase-classify",
        "dataset": {
            "classes": ["Z2", "Z3"],
            "num_inputs": 8,
            "per_class_train": 36,
            "per_class_test": 36,
            "noise_p": 0.30,
            "noise_p_list": None,
        },
        "circuit": {
            "depth": 2,
            "tau_start": 0.1,
            "tau_stop": 1.0,
            "tau_step": 0.1,
            "model": "mapped-rydberg",
            "observable": "sigma_z",
            "share_tau_params": True,
            "dtype": "float32",
        },
        "training": {
            "optimizer": "adam",
            "learning_rate": 0.1,
            "epochs": 40,
            "warmup_epochs": 0,
            "fd_step": None,
            "init_scale": 0.1,
            "init_scale_ham": 2.0,
            "loss_tolerance": 1e-8,
            "patience": 10,
        },
        "seeds": {"data_train": 101, "data_test": 202, "init": [1, 2, 3, 4, 5]},
    },
    "ent-classify": {
        "experiment": "ent-classify",
        "dataset": {
            "num_inputs": 8,
            "classes": None,
            "per_class_train": 36,
            "per_class_test": 36,
            "fidelity_window": [0.93, 0.97],
            "r_min": 0.99,
        },
        "circuit": {
            "depth": 4,
            "tau_start": 0.1,
            "tau_stop": 1.0,
            "tau_step": 0.1,
            "model": "mapped-rydberg",
            "observable": "sigma_z",
            "share_tau_params": True,
            "dtype": "float32",
        },
        "training": {
            "optimizer": "adagrad",
            "learning_rate": 0.2,
            "epochs": 15,
            "warmup_epochs": 0,
            "fd_step": None,
            "init_scale": 0.1,
            "init_scale_ham": 2.0,
            "loss_tolerance": 1e-8,
            "patience": 10,
        },
        "seeds": {"data_train": 303, "data_test": 404, "init": [1, 2, 3, 4, 5]},
    },
    "map-verify": {
        "experiment": "map-verify",
        "draws": 200,
        "max_inputs": 6,
        "coefficient_range": 10.0,
        "tolerance": 1e-10,
        "seed": 7,
    },
    "approx-bench": {
        "experiment": "approx-bench",
        "target": "gaussian",
        "input_dim": 1,
        "n_list": [4, 16, 64, 256],
        "draws": 20,
        "mu_samples": 2000,
        "seed": 11,
    },
    "gen-data": {
        "experiment": "gen-data",
        "kind": "phase",
        "dataset": {
            "classes": ["Z2", "Z3"],
            "num_inputs": 8,
            "per_class": 36,
            "noise_p": 0.30,
            "fidelity_window": [0.93, 0.97],
            "r_min": 0.99,
        },
        "seed": 505,
        "filename": "dataset.qpd",
    },
}


def _merge_config(defaults, overrides, path=""):
    """Deep-merge user values over defaults, rejecting unknown keys."""
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge_config(defaults[key], value, where)
        else:
            merged[key] = value
    return merged


def load_config(path, experiment):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    declared = raw.get("experiment", experiment)
    if declared != experiment:
        raise ConfigError(
            f"{path}: config declares experiment {declared!r}, "
            f"but subcommand is {experiment!r}"
        )
    return _merge_config(DEFAULTS[experiment], raw)


def apply_seed_overrides(config, overrides):
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"seed override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        values = [int(v) for v in value.split(",")]
        if "seeds" in config:
            if key not in config["seeds"]:
                raise ConfigError(f"unknown seed name {key!r}")
            current = config["seeds"][key]
            config["seeds"][key] = values if isinstance(current, list) else values[0]
        elif key == "seed":
            config["seed"] = values[0]
        else:
            raise ConfigError(f"unknown seed name {key!r}")
    return config


def _tau_grid(circuit_cfg):
    start, stop, step = (circuit_cfg["tau_start"], circuit_cfg["tau_stop"],
                         circuit_cfg["tau_step"])
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


def _feature_config(config, num_inputs, num_outputs):
    c = config["circuit"]
    return FeatureConfig(
        num_inputs=num_inputs,
        num_outputs=num_outputs,
        depth=c["depth"],
        tau_grid=_tau_grid(c),
        model=c["model"],
        observable=c["observable"],
        dtype=c["dtype"],
        share_tau_params=c["share_tau_params"],
    )


def _train_config(config, feature, init_seed, threads):
    t = config["training"]
    return TrainConfig(
        feature=feature,
        optimizer=OptimizerConfig(
            kind=t["optimizer"],
            learning_rate=t["learning_rate"],
            max_epochs=t["epochs"],
            loss_tolerance=t["loss_tolerance"],
            patience=t["patience"],
        ),
        warmup_epochs=t["warmup_epochs"],
        fd_step=t["fd_step"],
        init_scale=t["init_scale"],
        init_scale_ham=t["init_scale_ham"],
        init_seed=init_seed,
        threads=threads,
    )


def _init_seed_list(config):
    init = config["seeds"]["init"]
    return list(init) if isinstance(init, list) else [init]


def _seed_result(result):
    return {
        "init_seed": result.init_seed,
        "train_accuracy": result.train_accuracy,
        "test_accuracy": result.test_accuracy,
        "train_confusion": result.train_confusion.tolist(),
        "test_confusion": result.test_confusion.tolist(),
        "final_loss": float(result.final_loss),
        "converged": result.converged,
        "epochs_run": len(result.loss_history) - 1,
        "loss_history": [float(x) for x in result.loss_history],
    }


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_samples_csv(path, rows, num_labels, num_features):
    header = ["noise_p", "init_seed", "split", "sample_id", "class"]
    header += [f"label_{i}" for i in range(num_labels)]
    header += [f"prediction_{i}" for i in range(num_labels)]
    header += [f"feature_{i}" for i in range(num_features)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _sample_rows_both(train, test, result, noise_p):
    rows = []
    for split, ds, preds, feats in (
        ("train", train, result.train_predictions, result.train_features),
        ("test", test, result.test_predictions, result.test_features),
    ):
        names = ds.metadata["classes"]
        per = len(ds) // len(names)
        for i, (_, label) in enumerate(ds.samples):
            rows.append(
                [noise_p, result.init_seed, split, i, names[i // per]]
                + [int(v) for v in np.atleast_1d(label)]
                + [int(v) for v in np.atleast_1d(preds[i])]
                + [repr(float(v)) for v in feats[i]]
            )
    return rows


def run_phase_classify(config, out_dir, threads=1, log=print):
    d = config["dataset"]
    p_values = d["noise_p_list"] if d["noise_p_list"] else [d["noise_p"]]
    feature = _feature_config(config, d["num_inputs"], 1)
    init_seeds = _init_seed_list(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    runs, sweep_rows, sample_rows = [], [], []
    for p in p_values:
        noise = NoiseSpec("amplitude_error", p=p)
        train = build_phase_dataset(tuple(d["classes"]), d["per_class_train"], noise,
                                    np.random.default_rng(config["seeds"]["data_train"]),
                                    length=d["num_inputs"])
        test = build_phase_dataset(tuple(d["classes"]), d["per_class_test"], noise,
                                   np.random.default_rng(config["seeds"]["data_test"]),
                                   length=d["num_inputs"])
        seed_results = []
        for seed in init_seeds:
            result = train_classifier(train, test, _train_config(config, feature, seed, threads))
            seed_results.append(_seed_result(result))
            sample_rows.extend(_sample_rows_both(train, test, result, p))
            log(f"phase-classify p={p} seed={seed}: "
                f"test accuracy {result.test_accuracy:.4f}")
        median = float(np.median([r["test_accuracy"] for r in seed_results]))
        runs.append({"noise_p": p, "median_test_accuracy": median, "seeds": seed_results})
        sweep_rows.append([p, median] + [r["test_accuracy"] for r in seed_results])

    payload = {
        "config": config,
        "kernel_backend": kernels.BACKEND,
        "runs": runs,
    }
    _write_json(out_dir / "result.json", payload)
    _write_samples_csv(out_dir / "samples.csv", sample_rows, 1, feature.num_features)
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["noise_p", "median_test_accuracy"]
                        + [f"test_accuracy_seed_{s}" for s in init_seeds])
        writer.writerows(sweep_rows)
    return payload


def run_ent_classify(config, out_dir, threads=1, log=print):
    d = config["dataset"]
    feature = _feature_config(config, d["num_inputs"], 2)
    init_seeds = _init_seed_list(config)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    window = tuple(d["fidelity_window"])
    classes = d["classes"]
    train = build_entanglement_dataset(d["num_inputs"], d["per_class_train"], window,
                                       d["r_min"],
                                       np.random.default_rng(config["seeds"]["data_train"]),
                                       classes=classes)
    test = build_entanglement_dataset(d["num_inputs"], d["per_class_test"], window,
                                      d["r_min"],
                                      np.random.default_rng(config["seeds"]["data_test"]),
                                      classes=classes)
    seed_results, sample_rows = [], []
    for seed in init_seeds:
        result = train_classifier(train, test, _train_config(config, feature, seed, threads))
        seed_results.append(_seed_result(result))
        sample_rows.extend(_sample_rows_both(train, test, result, ""))
        log(f"ent-classify seed={seed}: test accuracy {result.test_accuracy:.4f}")
    median = float(np.median([r["test_accuracy"] for r in seed_results]))
    payload = {
        "config": config,
        "kernel_backend": kernels.BACKEND,
        "median_test_accuracy": median,
        "seeds": seed_results,
        "classes": train.metadata["classes"],
        "class_labels": train.metadata["class_labels"],
    }
    _write_json(out_dir / "result.json", payload)
    _write_samples_csv(out_dir / "samples.csv", sample_rows, 2, feature.num_features)
    return payload


def run_map_verify(config, out_dir, threads=1, log=print):
    rng = np.random.default_rng(config["seed"])
    coeff = config["coefficient_range"]
    residuals_single, residuals_two = [], []
    for _ in range(config["draws"]):
        n = int(rng.integers(1, config["max_inputs"] + 1))
        params = _random_feasible(rng, n, False, coeff)
        mapped, _ = hamiltonians.map_rydberg_to_perceptron(params)
        residuals_single.append(hamiltonians.verify_mapping(
            hamiltonians.build_rydberg(params, hamiltonians.perceptron_mask(n)),
            hamiltonians.build_perceptron(mapped)))
        params2 = _random_feasible(rng, n, True, coeff)
        mapped2, _ = hamiltonians.map_two_output(params2)
        residuals_two.append(hamiltonians.verify_mapping(
            hamiltonians.build_two_output_rydberg(params2),
            hamiltonians.build_two_output(mapped2)))
    # deliberately infeasible counterexample: V_i != 2 Delta_i
    v = np.zeros((2, 2))
    v[0, 1] = v[1, 0] = 4.0
    counterexample = hamiltonians.RydbergParams(2, [0.0, 0.0], [1.0, 0.0], v)
    try:
        hamiltonians.map_rydberg_to_perceptron(counterexample)
        counterexample_msg = "ERROR: infeasible counterexample was not rejected"
        rejected = False
    except hamiltonians.MappingInfeasibleError as exc:
        counterexample_msg = str(exc)
        rejected = True
    payload = {
        "config": config,
        "draws": config["draws"],
        "max_residual_single_output": float(np.max(residuals_single)),
        "max_residual_two_output": float(np.max(residuals_two)),
        "tolerance": config["tolerance"],
        "passed": bool(
            np.max(residuals_single) <= config["tolerance"]
            and np.max(residuals_two) <= config["tolerance"]
            and rejected
        ),
        "counterexample_rejected": rejected,
        "counterexample_message": counterexample_msg,
    }
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", payload)
    log(f"map-verify: max residual single={payload['max_residual_single_output']:.3e} "
        f"two-output={payload['max_residual_two_output']:.3e} "
        f"(tolerance {config['tolerance']:.1e})")
    log(f"map-verify: infeasible counterexample rejected: {rejected}")
    return payload


def _random_feasible(rng, n_inputs, two_output, coeff):
    n = n_inputs + (2 if two_output else 1)
    v = np.zeros((n, n))
    det = np.zeros(n)
    om = rng.uniform(-coeff, coeff, n)
    for i in range(n_inputs):
        if two_output:
            v[i, n - 2] = v[n - 2, i] = rng.uniform(-coeff, coeff)
            v[i, n - 1] = v[n - 1, i] = rng.uniform(-coeff, coeff)
            det[i] = (v[i, n - 2] + v[i, n - 1]) / 2.0
        else:
            v[i, n - 1] = v[n - 1, i] = rng.uniform(-coeff, coeff)
            det[i] = v[i, n - 1] / 2.0
    det[n_inputs:] = rng.uniform(-coeff, coeff, n - n_inputs)
    return hamiltonians.RydbergParams(n, om, det, v)


def run_approx_bench(config, out_dir, threads=1, log=print):
    name = config["target"]
    if name == "gaussian":
        target = approx.gaussian_target(config["input_dim"])
    elif name == "cosine":
        target = approx.cosine_target([1.3] * config["input_dim"], phase=0.3)
    else:
        raise ConfigError(f"unknown benchmark target {name!r}")
    rng = np.random.default_rng(config["seed"])
    rows, slope = approx.error_curve(target, config["n_list"], config["draws"],
                                     config["mu_samples"], rng)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["target", "n", "draw", "rmse", "bound", "seed"])
        for row in rows:
            for k, rmse in enumerate(row.rmse_per_draw):
                writer.writerow([target.name, row.num_blocks, k, repr(rmse),
                                 repr(row.bound), config["seed"]])
    payload = {
        "config": config,
        "target": target.name,
        "fourier_l1": target.fourier_l1,
        "fitted_loglog_slope": slope,
        "rows": [
            {"n": r.num_blocks, "median_rmse": r.median_rmse, "bound": r.bound}
            for r in rows
        ],
    }
    _write_json(out_dir / "summary.json", payload)
    log(f"approx-bench {target.name}: fitted log-log slope {slope:.3f}")
    for r in rows:
        log(f"  n={r.num_blocks}: median rmse {r.median_rmse:.4e} "
            f"(bound {r.bound:.4e})")
    return payload


def run_gen_data(config, out_dir, threads=1, log=print):
    d = config["dataset"]
    rng = np.random.default_rng(config["seed"])
    if config["kind"] == "phase":
        ds = build_phase_dataset(tuple(d["classes"]), d["per_class"],
                                 NoiseSpec("amplitude_error", p=d["noise_p"]), rng,
                                 length=d["num_inputs"])
    elif config["kind"] == "entanglement":
        ds = build_entanglement_dataset(d["num_inputs"], d["per_class"],
                                        tuple(d["fidelity_window"]), d["r_min"], rng,
                                        classes=d["classes"] if d["classes"] else None)
    else:
        raise ConfigError(f"unknown dataset kind {config['kind']!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / config["filename"]
    save_dataset(ds, path)
    log(f"gen-data: wrote {len(ds)} samples to {path}")
    return {"path": str(path), "num_samples": len(ds)}


RUNNERS = {
    "phase-classify": run_phase_classify,
    "ent-classify": run_ent_classify,
    "map-verify": run_map_verify,
    "approx-bench": run_approx_bench,
    "gen-data": run_gen_data,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qperc",
        description="Quantum-perceptron experiment harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed-override", action="append", default=[],
                       metavar="KEY=VALUE", help="override a seed from the config")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker count for gradient probes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.command)
        config = apply_seed_overrides(config, args.seed_override)
        RUNNERS[args.command](config, args.out, threads=args.threads)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
