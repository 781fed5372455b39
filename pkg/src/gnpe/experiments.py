"""End-to-end pipelines shared by the CLI and the acceptance suite.

Each method name maps to a training recipe (which estimators to fit on which
view of the simulations) and an inference recipe (single pass or pose-proxy
Gibbs). Everything is seeded explicitly; identical config + seeds give
byte-identical sample tables.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .config import (
    ExperimentConfig,
    build_kernel,
    build_model,
    config_hash,
    resolve_config,
    resolved_seeds,
)
from .exceptions import StructuralError
from .groups import act_on_data_batch
from .kernels import gaussian_kernel
from .metrics import C2stConfig, c2st, effective_dimension, singular_spectrum
from .models import GaussianToyModel, GaussianToyPosteriorOracle, Observation
from .models.datasets_io import SimulationDataset, simulate_dataset
from .nde import (
    ConditionalGaussianEstimator,
    chained_dataset_from_sims,
    gnpe_dataset_from_sims,
    npe_dataset_from_sims,
    pose_dataset_from_sims,
)
from .sampler import GnpeRunConfig, chained_npe_sample, run_gnpe
from .validation import ensure_rng


def derive_int_seed(*parts) -> int:
    """Stable 32-bit seed from a tuple of ints/strings (process-independent)."""
    flat = [
        int.from_bytes(hashlib.sha256(p.encode()).digest()[:4], "little")
        if isinstance(p, str)
        else int(p)
        for p in parts
    ]
    return int(np.random.SeedSequence(flat).generate_state(1)[0])


def make_estimator(cfg: ExperimentConfig, seed: int, embedding: str | None = None):
    e, t = cfg.estimator, cfg.training
    return ConditionalGaussianEstimator(
        embedding=embedding if embedding is not None else e.embedding,
        hidden_sizes=tuple(e.hidden_sizes),
        conv_channels=tuple(e.conv_channels),
        conv_kernel_sizes=tuple(e.conv_kernel_sizes),
        pool_size=e.pool_size,
        pool_stride=e.pool_stride,
        learning_rate=t.learning_rate,
        beta1=t.beta1,
        beta2=t.beta2,
        batch_size=t.batch_size,
        patience=t.patience,
        max_epochs=t.max_epochs,
        validation_fraction=t.validation_fraction,
        logstd_min=e.logstd_min,
        logstd_max=e.logstd_max,
        standardize_context=e.standardize_context,
        seed=seed,
    )


def train_method(cfg: ExperimentConfig, model, sims: SimulationDataset, seed: int) -> dict:
    """Fit the estimator(s) a method needs from one simulation set.

    Returns "q" (plus "q_init" for gnpe; "q_pose"/"q_rest" for chained-npe).
    For gnpe the initialization network is a plain NPE fit of the pose on the
    same dataset.
    """
    kernel = build_kernel(cfg.kernel)
    method = cfg.method
    frac = cfg.training.validation_fraction

    if method in ("npe", "npe-cnn"):
        embedding = "conv" if method == "npe-cnn" else None
        ds = npe_dataset_from_sims(sims, model, derive_int_seed(seed, 1), frac)
        q = make_estimator(cfg, derive_int_seed(seed, 2), embedding)
        q.fit(ds.contexts, ds.targets, val_mask=ds.val_mask, meta=ds.meta)
        return {"q": q}

    if method == "gnpe":
        ds = gnpe_dataset_from_sims(sims, model, kernel, derive_int_seed(seed, 1), None, frac)
        q = make_estimator(cfg, derive_int_seed(seed, 2))
        q.fit(ds.contexts, ds.targets, proxies=ds.proxies, val_mask=ds.val_mask, meta=ds.meta)
        init_ds = pose_dataset_from_sims(sims, model, derive_int_seed(seed, 3), frac)
        q_init = make_estimator(cfg, derive_int_seed(seed, 4))
        q_init.fit(init_ds.contexts, init_ds.targets, val_mask=init_ds.val_mask, meta=init_ds.meta)
        return {"q": q, "q_init": q_init}

    if method == "chained-npe":
        pose_ds = pose_dataset_from_sims(sims, model, derive_int_seed(seed, 1), frac)
        q_pose = make_estimator(cfg, derive_int_seed(seed, 2))
        q_pose.fit(pose_ds.contexts, pose_ds.targets, val_mask=pose_ds.val_mask, meta=pose_ds.meta)
        rest_ds = chained_dataset_from_sims(sims, model, derive_int_seed(seed, 3), frac)
        q_rest = make_estimator(cfg, derive_int_seed(seed, 4))
        q_rest.fit(
            rest_ds.contexts,
            rest_ds.targets,
            proxies=rest_ds.proxies,
            val_mask=rest_ds.val_mask,
            meta=rest_ds.meta,
        )
        return {"q_pose": q_pose, "q_rest": q_rest}

    raise StructuralError(f"unknown method {method!r}")


@dataclass
class InferOutput:
    samples: np.ndarray
    param_names: tuple[str, ...]
    pose_names: tuple[str, ...] = ()
    proxies: np.ndarray | None = None
    chain_ids: np.ndarray | None = None
    iterations: np.ndarray | None = None
    converged: bool = True
    n_iterations: int = 0
    js_trace: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def infer_method(cfg: ExperimentConfig, model, estimators: dict, x, seed: int) -> InferOutput:
    method = cfg.method
    s = cfg.sampler

    if method in ("npe", "npe-cnn"):
        rng = ensure_rng(seed)
        samples = estimators["q"].sample(x, s.n_samples, rng)
        return InferOutput(samples=samples, param_names=model.param_names)

    if method == "gnpe":
        run_cfg = GnpeRunConfig(
            kernel=build_kernel(cfg.kernel),
            n_chains=s.n_chains,
            iteration_policy=s.iteration_policy,
            iterations=s.iterations,
            max_iterations=s.max_iterations,
            js_threshold=s.js_threshold,
            burn_in=s.burn_in,
            thinning=s.thinning,
            init_pose=None if s.init_pose is None else tuple(s.init_pose),
        )
        result = run_gnpe(
            x,
            estimators["q"],
            run_cfg,
            model,
            seed=seed,
            q_init=None if s.init_pose is not None else estimators.get("q_init"),
        )
        return InferOutput(
            samples=result.samples,
            param_names=result.param_names,
            pose_names=result.pose_names,
            proxies=result.proxies,
            chain_ids=result.chain_ids,
            iterations=result.iterations,
            converged=result.converged,
            n_iterations=result.n_iterations,
            js_trace=result.js_trace,
            diagnostics=result.diagnostics,
        )

    if method == "chained-npe":
        samples, poses = chained_npe_sample(
            estimators["q_pose"], estimators["q_rest"], x, s.n_samples, seed, model
        )
        return InferOutput(
            samples=samples,
            param_names=model.param_names,
            pose_names=model.pose_names,
            proxies=poses,
        )

    raise StructuralError(f"unknown method {method!r}")


def save_samples_csv(out: InferOutput, path) -> None:
    """One row per kept sample: parameters, proxies, chain id, iteration."""
    proxy_names = [f"proxy_{p}" for p in out.pose_names] if out.proxies is not None else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(out.param_names) + proxy_names + ["chain_id", "iteration"])
        n = len(out.samples)
        chain_ids = out.chain_ids if out.chain_ids is not None else np.arange(n)
        iterations = out.iterations if out.iterations is not None else np.zeros(n, dtype=int)
        for i in range(n):
            row = [repr(v) for v in out.samples[i]]
            if out.proxies is not None:
                row += [repr(v) for v in out.proxies[i]]
            row += [int(chain_ids[i]), int(iterations[i])]
            writer.writerow(row)


def save_diagnostics_json(out: InferOutput, path, resolved_cfg: dict, extra: dict | None = None):
    payload = {
        "converged": out.converged,
        "n_iterations": out.n_iterations,
        "js_trace": [float(v) for v in out.js_trace],
        "n_samples": int(len(out.samples)),
        "sampler": out.diagnostics,
        "config": resolved_cfg,
        "config_hash": config_hash(resolved_cfg),
    }
    payload.update(extra or {})
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def observation_payload(obs: Observation, resolved_cfg: dict) -> dict:
    return {
        "model": obs.model_name,
        "theta": obs.theta.tolist(),
        "theta_center": obs.theta_center.tolist(),
        "x": obs.x.tolist(),
        "oracle": {"mean": obs.oracle.mean.tolist(), "variance": obs.oracle.variance.tolist()},
        "config": resolved_cfg,
        "config_hash": config_hash(resolved_cfg),
    }


# ----------------------------------------------------------------- reproduce


def default_fig3b_config() -> ExperimentConfig:
    """Budget-calibrated config for the three-method toy comparison.

    Values trade paper-default training length for a single-core runtime
    envelope; every knob remains overridable through a config file.
    """
    cfg = ExperimentConfig()
    cfg.model.name = "oscillator"
    cfg.kernel.kind = "gaussian"
    cfg.kernel.widths = [0.1]
    cfg.training.n_train = 10_000
    cfg.training.max_epochs = 60
    cfg.training.patience = 8
    cfg.sampler.n_chains = 10_000
    cfg.sampler.iteration_policy = "fixed"
    cfg.sampler.iterations = 3
    cfg.sampler.burn_in = 2
    cfg.metrics.c2st_repetitions = 1
    cfg.metrics.c2st_max_iter = 300
    return cfg


def fig3b_rows(
    cfg: ExperimentConfig,
    n_seeds: int = 10,
    n_sims: int = 5,
    methods=("npe", "npe-cnn", "gnpe"),
    progress=None,
) -> list[dict]:
    """c2st scores for each method x simulation x seed at a fixed budget."""
    model = build_model(cfg.model)
    seeds = resolved_seeds(cfg.seeds)
    obs_rng = ensure_rng(seeds["observation"])
    observations = [model.observe(obs_rng, interior=True) for _ in range(n_sims)]

    c2st_cfg = C2stConfig(
        hidden_multiplier=cfg.metrics.c2st_hidden_multiplier,
        max_iter=cfg.metrics.c2st_max_iter,
        train_fraction=cfg.metrics.c2st_train_fraction,
        repetitions=cfg.metrics.c2st_repetitions,
        seed=seeds["evaluate"],
    )

    rows = []
    for seed_idx in range(n_seeds):
        sims = simulate_dataset(
            model, cfg.training.n_train, derive_int_seed(seeds["simulate"], seed_idx)
        )
        for method in methods:
            mcfg = dataclasses.replace(cfg, method=method)
            ests = train_method(mcfg, model, sims, derive_int_seed(seeds["train"], seed_idx, method))
            for sim_idx, obs in enumerate(observations):
                out = infer_method(
                    mcfg, model, ests, obs.x,
                    derive_int_seed(seeds["infer"], seed_idx, method, sim_idx),
                )
                ref = obs.oracle.sample(
                    cfg.metrics.n_reference,
                    ensure_rng(derive_int_seed(seeds["evaluate"], seed_idx, method, sim_idx)),
                )
                score = c2st(out.samples, ref, dataclasses.replace(
                    c2st_cfg, seed=derive_int_seed(seeds["evaluate"], seed_idx, method, sim_idx, 7)
                ))
                rows.append(
                    {
                        "method": method,
                        "simulation": sim_idx,
                        "seed": seed_idx,
                        "c2st": score,
                        "n_train": cfg.training.n_train,
                    }
                )
                if progress:
                    progress(rows[-1])
    return rows


def fig3d_data(cfg: ExperimentConfig, n_batch: int = 512) -> dict:
    """Singular spectra of raw vs pose-standardized simulation batches."""
    model = build_model(cfg.model)
    kernel = build_kernel(cfg.kernel)
    seeds = resolved_seeds(cfg.seeds)
    sims = simulate_dataset(model, n_batch, seeds["simulate"])
    raw = sims.xs.reshape(n_batch, -1)
    std_ds = gnpe_dataset_from_sims(sims, model, kernel, seeds["train"])
    standardized = std_ds.contexts.reshape(n_batch, -1)
    sv_raw = singular_spectrum(raw)
    sv_std = singular_spectrum(standardized)
    thr = cfg.metrics.effective_dim_threshold
    return {
        "singular_values_raw": sv_raw,
        "singular_values_standardized": sv_std,
        "effective_dim_raw": effective_dimension(sv_raw, thr),
        "effective_dim_standardized": effective_dimension(sv_std, thr),
        "threshold": thr,
    }


def appb_data(cfg: ExperimentConfig, x_obs: float = 3.0, n_hist_bins: int = 60) -> dict:
    """Pose-proxy sampling on the Gaussian worked example vs the analytic posterior."""
    model = GaussianToyModel()
    seeds = resolved_seeds(cfg.seeds)
    run_cfg = GnpeRunConfig(
        kernel=gaussian_kernel(1.0),
        n_chains=cfg.sampler.n_chains,
        iterations=cfg.sampler.burn_in + 1,
        burn_in=cfg.sampler.burn_in,
        init_pose=(0.0,),
    )
    result = run_gnpe(
        np.array([x_obs]), GaussianToyPosteriorOracle(), run_cfg, model, seed=seeds["infer"]
    )
    posterior = model.posterior(x_obs)
    samples = result.samples[:, 0]
    edges = np.linspace(posterior.mean[0] - 5 * posterior.std[0],
                        posterior.mean[0] + 5 * posterior.std[0], n_hist_bins + 1)
    hist, _ = np.histogram(samples, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    analytic = np.exp(-0.5 * ((centers - posterior.mean[0]) / posterior.std[0]) ** 2) / (
        posterior.std[0] * np.sqrt(2 * np.pi)
    )
    return {
        "bin_center": centers,
        "sample_density": hist,
        "analytic_density": analytic,
        "sample_mean": float(samples.mean()),
        "sample_variance": float(samples.var()),
        "posterior_mean": float(posterior.mean[0]),
        "posterior_variance": float(posterior.variance[0]),
        "converged": result.converged,
    }


def pose_standardized_batch(model, sims: SimulationDataset, kernel, seed) -> np.ndarray:
    """Contexts after one blurring + inverse-proxy alignment step (helper for spectra)."""
    ds = gnpe_dataset_from_sims(sims, model, kernel, seed)
    return ds.contexts


def shift_observation(model, x, shifts) -> np.ndarray:
    """Transform one observation by a group element given as raw shifts."""
    return act_on_data_batch(np.asarray(shifts, dtype=np.float64)[None, :], x, model.data_rep)[0]
