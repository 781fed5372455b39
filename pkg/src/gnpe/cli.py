"""Command-line entry point: simulate | train | infer | evaluate | reproduce.

Exit-code contract (documented, stable for scripting):
    0  success
    2  I/O problem (missing/unreadable/unwritable inputs or outputs)
    3  configuration error (invalid values, unknown keys)
    4  training failure (divergence)
    5  sampler non-convergence (partial outputs are retained)
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    ExperimentConfig,
    build_kernel,
    build_model,
    config_hash,
    load_config,
    resolve_config,
    resolved_seeds,
)
from .exceptions import ConfigError, DataError, GnpeError, StructuralError, TrainingError
from .experiments import (
    InferOutput,
    appb_data,
    default_fig3b_config,
    fig3b_rows,
    fig3d_data,
    infer_method,
    observation_payload,
    save_diagnostics_json,
    save_samples_csv,
    train_method,
)
from .metrics import C2stConfig, c2st, ks_statistic, mse_of_means
from .models import Observation, dataset_content_hash, dataset_to_csv, load_dataset, save_dataset
from .models.datasets_io import simulate_dataset
from .nde import load_checkpoint, save_checkpoint, save_loss_history
from .validation import ensure_rng

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_TRAINING = 4
EXIT_CONVERGENCE = 5


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seeds.master = args.seed
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    resolved = resolve_config(cfg)
    model = build_model(cfg.model)
    seeds = resolved["seeds"]
    n = args.n if args.n is not None else cfg.training.n_train
    sims = simulate_dataset(model, n, seeds["simulate"], workers=args.workers)
    out = _out_dir(cfg)
    ds_path = out / "dataset.gnpe-ds"
    save_dataset(sims, ds_path)
    dataset_to_csv(sims, out / "dataset_preview.csv", max_rows=10)
    manifest = {
        "model": model.name,
        "n_records": n,
        "seed": seeds["simulate"],
        "content_sha256": dataset_content_hash(sims),
        "file_sha256": _file_sha256(ds_path),
        "config": resolved,
        "config_hash": config_hash(resolved),
    }
    _write_json(out / "dataset_manifest.json", manifest)
    print(f"wrote {ds_path} ({n} records, sha256 {manifest['content_sha256'][:12]}...)")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    resolved = resolve_config(cfg)
    model = build_model(cfg.model)
    sims = load_dataset(args.dataset)
    if sims.model_name != model.name:
        raise ConfigError(
            f"model.name: dataset was simulated from {sims.model_name!r}, config says {model.name!r}"
        )
    ests = train_method(cfg, model, sims, resolved["seeds"]["train"])
    out = _out_dir(cfg)
    manifest = {
        "method": cfg.method,
        "dataset_sha256": _file_sha256(args.dataset),
        "config": resolved,
        "config_hash": config_hash(resolved),
        "checkpoints": {},
    }
    for name, est in ests.items():
        ckpt = out / f"{name}.ckpt"
        save_checkpoint(est, ckpt)
        save_loss_history(est, out / f"loss_{name}.csv")
        manifest["checkpoints"][name] = {
            "file": ckpt.name,
            "sha256": _file_sha256(ckpt),
            "best_epoch": est.best_epoch_,
            "n_epochs": est.n_epochs_,
        }
        print(f"trained {name}: best epoch {est.best_epoch_}/{est.n_epochs_} -> {ckpt}")
    _write_json(out / "train_manifest.json", manifest)
    return EXIT_OK


def _load_observation(args, cfg, model, seeds) -> Observation:
    if args.dataset:
        sims = load_dataset(args.dataset)
        if sims.model_name != model.name:
            raise ConfigError(
                f"model.name: observation dataset is from {sims.model_name!r}, config says {model.name!r}"
            )
        idx = args.obs_index
        if not 0 <= idx < len(sims):
            raise StructuralError(f"--obs-index {idx} out of range for {len(sims)} records")
        x = sims.xs[idx]
        theta_center = sims.theta_centers[idx]
        return Observation(
            model_name=model.name,
            x=x,
            theta=sims.thetas[idx],
            theta_center=theta_center,
            oracle=model.oracle_posterior(x, theta_center),
            seed=None,
        )
    return model.observe(ensure_rng(seeds["observation"]), interior=True)


def cmd_infer(args) -> int:
    cfg = _load_cfg(args)
    resolved = resolve_config(cfg)
    seeds = resolved["seeds"]
    model = build_model(cfg.model)

    estimators = {}
    input_hashes = {}
    main_est = load_checkpoint(args.checkpoint)
    input_hashes["checkpoint"] = _file_sha256(args.checkpoint)
    if cfg.method in ("npe", "npe-cnn"):
        estimators["q"] = main_est
    elif cfg.method == "gnpe":
        estimators["q"] = main_est
        if cfg.sampler.init_pose is None:
            if not args.init_checkpoint:
                raise ConfigError(
                    "sampler.init_pose: gnpe needs --init-checkpoint unless a fixed init pose is configured"
                )
            estimators["q_init"] = load_checkpoint(args.init_checkpoint)
            input_hashes["init_checkpoint"] = _file_sha256(args.init_checkpoint)
    elif cfg.method == "chained-npe":
        if not args.init_checkpoint:
            raise ConfigError("chained-npe needs --init-checkpoint for the pose estimator")
        estimators["q_rest"] = main_est
        estimators["q_pose"] = load_checkpoint(args.init_checkpoint)
        input_hashes["init_checkpoint"] = _file_sha256(args.init_checkpoint)

    obs = _load_observation(args, cfg, model, seeds)
    out_dir = _out_dir(cfg)
    _write_json(out_dir / "observation.json", observation_payload(obs, resolved))

    out = infer_method(cfg, model, estimators, obs.x, seeds["infer"])
    save_samples_csv(out, out_dir / "samples.csv")
    save_diagnostics_json(
        out,
        out_dir / "diagnostics.json",
        resolved,
        extra={"inputs": input_hashes, "observation": {"theta_center": obs.theta_center.tolist()}},
    )
    print(
        f"wrote {out_dir / 'samples.csv'} ({len(out.samples)} samples, "
        f"{out.n_iterations} iterations, converged={out.converged})"
    )
    return EXIT_OK if out.converged else EXIT_CONVERGENCE


def _read_samples_csv(path, param_names):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = [header.index(p) for p in param_names]
        rows = [[float(row[c]) for c in cols] for row in reader]
    if not rows:
        raise DataError(f"no sample rows in {path!r}")
    return np.asarray(rows)


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    resolved = resolve_config(cfg)
    seeds = resolved["seeds"]
    model = build_model(cfg.model)

    samples = _read_samples_csv(args.samples, model.param_names)
    with open(args.observation) as fh:
        obs_payload = json.load(fh)
    mean = np.asarray(obs_payload["oracle"]["mean"])
    variance = np.asarray(obs_payload["oracle"]["variance"])
    from .models.base import GaussianPosterior

    oracle = GaussianPosterior(mean, variance)
    reference = oracle.sample(cfg.metrics.n_reference, ensure_rng(seeds["evaluate"]))

    c2st_cfg = C2stConfig(
        hidden_multiplier=cfg.metrics.c2st_hidden_multiplier,
        max_iter=cfg.metrics.c2st_max_iter,
        train_fraction=cfg.metrics.c2st_train_fraction,
        repetitions=cfg.metrics.c2st_repetitions,
        seed=seeds["evaluate"],
    )
    ks = {}
    for i, name in enumerate(model.param_names):
        stat, pval = ks_statistic(samples[:, i], oracle.marginal_cdf(i))
        ks[name] = {"statistic": stat, "p_value": pval}
    payload = {
        "config": resolved,
        "config_hash": config_hash(resolved),
        "inputs": {
            "samples_sha256": _file_sha256(args.samples),
            "observation_sha256": _file_sha256(args.observation),
        },
        "results": {
            "c2st": c2st(samples, reference, c2st_cfg, workers=args.workers),
            "mse_of_means": mse_of_means(samples, reference, model.prior_stds()),
            "ks": ks,
        },
        "seeds": seeds,
        "n_samples": int(len(samples)),
    }
    out = _out_dir(cfg)
    _write_json(out / "metrics.json", payload)
    print(f"wrote {out / 'metrics.json'} (c2st={payload['results']['c2st']:.4f})")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    target = args.target
    out_dir = None
    if target == "fig3b":
        cfg = load_config(args.config) if args.config else default_fig3b_config()
        if args.seed is not None:
            cfg.seeds.master = args.seed
        if args.out:
            cfg.out_dir = args.out
        resolved = resolve_config(cfg)
        out_dir = _out_dir(cfg)
        rows = fig3b_rows(
            cfg,
            n_seeds=args.n_seeds,
            n_sims=args.n_sims,
            progress=lambda r: print(
                f"  method={r['method']} sim={r['simulation']} seed={r['seed']} c2st={r['c2st']:.4f}"
            ),
        )
        with open(out_dir / "fig3b.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["method", "simulation", "seed", "c2st", "n_train"])
            writer.writeheader()
            writer.writerows(rows)
        summary = {}
        for method in ("npe", "npe-cnn", "gnpe"):
            vals = [r["c2st"] for r in rows if r["method"] == method]
            if vals:
                summary[method] = {"mean_c2st": float(np.mean(vals)), "n_runs": len(vals)}
        _write_json(out_dir / "fig3b_summary.json", {"summary": summary, "config": resolved})
        print(json.dumps(summary, indent=2, sort_keys=True))
    elif target == "fig3d":
        cfg = _load_cfg(args)
        resolved = resolve_config(cfg)
        out_dir = _out_dir(cfg)
        data = fig3d_data(cfg)
        with open(out_dir / "fig3d_spectra.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "singular_value_raw", "singular_value_standardized"])
            for i, (a, b) in enumerate(
                zip(data["singular_values_raw"], data["singular_values_standardized"])
            ):
                writer.writerow([i, repr(float(a)), repr(float(b))])
        _write_json(
            out_dir / "fig3d_summary.json",
            {
                "effective_dim_raw": data["effective_dim_raw"],
                "effective_dim_standardized": data["effective_dim_standardized"],
                "threshold": data["threshold"],
                "config": resolved,
            },
        )
        print(
            f"effective dimension: raw={data['effective_dim_raw']} "
            f"standardized={data['effective_dim_standardized']}"
        )
    elif target == "appB":
        cfg = _load_cfg(args)
        resolved = resolve_config(cfg)
        out_dir = _out_dir(cfg)
        data = appb_data(cfg)
        with open(out_dir / "appB.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_center", "gnpe_density", "analytic_density"])
            for c, g, a in zip(data["bin_center"], data["sample_density"], data["analytic_density"]):
                writer.writerow([repr(float(c)), repr(float(g)), repr(float(a))])
        _write_json(
            out_dir / "appB_summary.json",
            {
                "sample_mean": data["sample_mean"],
                "sample_variance": data["sample_variance"],
                "posterior_mean": data["posterior_mean"],
                "posterior_variance": data["posterior_variance"],
                "converged": data["converged"],
                "config": resolved,
            },
        )
        print(
            f"sample mean {data['sample_mean']:.4f} (target {data['posterior_mean']}), "
            f"variance {data['sample_variance']:.4f} (target {data['posterior_variance']})"
        )
    else:
        raise ConfigError(f"unknown reproduce target {target!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnpe",
        description="Pose-standardized simulation-based inference on analytic toy models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config (defaults apply if omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, default=1, help="internal parallelism bound")
        p.add_argument("--out", help="output directory (overrides config)")

    p = sub.add_parser("simulate", help="generate and persist a simulation dataset")
    common(p)
    p.add_argument("--n", type=int, help="number of simulations (default: training.n_train)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the method's estimator(s) on a dataset")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset file from `gnpe simulate`")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="sample the posterior for one observation")
    common(p)
    p.add_argument("--checkpoint", required=True, help="main estimator checkpoint")
    p.add_argument("--init-checkpoint", help="pose-initialization / pose estimator checkpoint")
    p.add_argument("--dataset", help="take the observation from this dataset")
    p.add_argument("--obs-index", type=int, default=0, help="record index within --dataset")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="compute the metric suite for a sample file")
    common(p)
    p.add_argument("--samples", required=True, help="samples.csv from `gnpe infer`")
    p.add_argument("--observation", required=True, help="observation.json from `gnpe infer`")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reproduce", help="run a canned study and emit its table data")
    common(p)
    p.add_argument("target", choices=["fig3b", "fig3d", "appB"])
    p.add_argument("--n-seeds", type=int, default=10, help="fig3b: training seeds")
    p.add_argument("--n-sims", type=int, default=5, help="fig3b: evaluation simulations")
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (OSError, DataError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GnpeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
