"""Gibbs sampling over (parameters, pose proxy), plus the chained baseline.

An ensemble of N independent chains is advanced in lockstep. One iteration,
per chain: transform the observation by the inverse of the current proxy,
draw parameters from the density estimator on the standardized data (adding
the proxy back on exact factors), then re-blur the new pose into the next
proxy. Chains own their rng streams, so results are identical regardless of
how the ensemble is scheduled, and two fixed-seed runs whose initial proxies
differ by a group element h produce sample sets related exactly by h.

Marginalizing over the proxy (simply keeping the parameter columns) yields
posterior samples; burn-in truncation and thinning select which iterations
contribute. Non-convergence of the iteration policy is a result value, not
an exception.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import NotFittedError

from .exceptions import StructuralError
from .groups import act_on_data_batch
from .kernels import Kernel, sample_kernel_shifts
from .models.base import ForwardModel
from .validation import seed_fingerprint, spawn_rngs

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)


@dataclass
class GnpeRunConfig:
    """Sampling policy for one inference run."""

    kernel: Kernel
    modes: tuple[str, ...] | None = None   # default: the model's declared modes
    n_chains: int = 10_000
    iteration_policy: str = "fixed"        # "fixed" or "js"
    iterations: int = 11                   # total updates under the fixed policy
    max_iterations: int = 30               # cap under the js policy
    js_threshold: float = 0.01             # nats
    burn_in: int = 10
    thinning: int = 1
    init_pose: tuple | None = None         # fixed init; None means use q_init

    def __post_init__(self):
        if self.thinning < 1:
            raise StructuralError("thinning stride must be >= 1")
        if self.js_threshold <= 0:
            raise StructuralError("JS threshold must be positive")
        if self.iteration_policy not in ("fixed", "js"):
            raise StructuralError(f"unknown iteration policy {self.iteration_policy!r}")
        if self.burn_in < 0:
            raise StructuralError("burn-in must be non-negative")


@dataclass
class GibbsChainEnsemble:
    """State of N parallel chains: current parameters, current proxies, rng streams."""

    thetas: np.ndarray                 # (N, d)
    proxies: np.ndarray                # (N, F)
    rngs: list
    init_thetas: np.ndarray            # fallback for flagged chains
    iteration: int = 0
    pose_history: list = field(default_factory=list)   # (N, F) snapshots
    used_proxies: np.ndarray | None = None             # proxies behind the latest thetas

    @property
    def n_chains(self) -> int:
        return self.thetas.shape[0]


def _sample_per_rng(source, x, rngs, proxies=None) -> np.ndarray:
    """One draw per chain from an estimator-shaped object, chain i using rngs[i]."""
    if hasattr(source, "sample_per_rng"):
        return source.sample_per_rng(x, rngs, proxies)
    contexts = np.broadcast_to(np.asarray(x)[None, ...], (len(rngs),) + np.asarray(x).shape)
    return source.sample_batch(contexts, rngs, proxies)


def init_chains(
    x,
    n_chains: int,
    seed,
    model: ForwardModel,
    kernel: Kernel,
    q_init=None,
    fixed_pose=None,
    initial_proxies=None,
) -> GibbsChainEnsemble:
    """Start an ensemble: draw initial poses and apply one blurring step.

    Exactly one of ``q_init`` (an estimator of the pose given raw data),
    ``fixed_pose`` (a single pose shared by all chains) or
    ``initial_proxies`` (explicit proxies, used by the equivariance checks;
    skips the blurring step) must be supplied.
    """
    sources = [q_init is not None, fixed_pose is not None, initial_proxies is not None]
    if sum(sources) != 1:
        raise StructuralError("supply exactly one of q_init, fixed_pose, initial_proxies")
    rngs = spawn_rngs(seed, n_chains)
    n_factors = model.n_factors

    if initial_proxies is not None:
        proxies = np.asarray(initial_proxies, dtype=np.float64).reshape(n_chains, n_factors).copy()
        poses = proxies.copy()
    else:
        if fixed_pose is not None:
            poses = np.tile(np.asarray(fixed_pose, dtype=np.float64).reshape(1, n_factors), (n_chains, 1))
        else:
            try:
                poses = _sample_per_rng(q_init, x, rngs)
            except NotFittedError as exc:
                raise StructuralError("q_init is not trained") from exc
            if poses.shape[1] != n_factors:
                raise StructuralError(
                    f"q_init produces {poses.shape[1]} pose components, model has {n_factors}"
                )
        proxies = poses + sample_kernel_shifts(kernel, rngs)

    thetas = np.zeros((n_chains, model.param_dim))
    for i, slot in enumerate(model.pose_slots):
        thetas[:, slot] = poses[:, i]
    ens = GibbsChainEnsemble(
        thetas=thetas,
        proxies=proxies,
        rngs=rngs,
        init_thetas=thetas.copy(),
    )
    ens.pose_history.append(poses.copy())
    return ens


def gibbs_iteration(
    ens: GibbsChainEnsemble,
    q,
    x,
    model: ForwardModel,
    kernel: Kernel,
    modes: tuple[str, ...],
) -> GibbsChainEnsemble:
    """Advance every chain by one update; mutates and returns the ensemble."""
    modes = tuple(modes)
    if len(modes) != model.n_factors:
        raise StructuralError(f"{len(modes)} modes for {model.n_factors} factors")
    approx_idx = [i for i, m in enumerate(modes) if m == "approximate"]
    exact_idx = [i for i, m in enumerate(modes) if m == "exact"]

    contexts = act_on_data_batch(-ens.proxies, x, model.data_rep)
    proxy_feats = ens.proxies[:, approx_idx] if approx_idx else None
    theta_new = q.sample_batch(contexts, ens.rngs, proxies=proxy_feats)
    if theta_new.shape != ens.thetas.shape:
        raise StructuralError(
            f"estimator produced shape {theta_new.shape}, ensemble holds {ens.thetas.shape}"
        )
    theta_new = theta_new.copy()
    for i in exact_idx:
        theta_new[:, model.pose_slots[i]] += ens.proxies[:, i]

    bad = ~np.all(np.isfinite(theta_new), axis=1)
    if bad.any():
        logger.warning("%d chain(s) produced non-finite parameters; resampled from init", bad.sum())
        theta_new[bad] = ens.init_thetas[bad]

    ens.used_proxies = ens.proxies.copy()
    ens.thetas = theta_new
    pose = np.column_stack([theta_new[:, s] for s in model.pose_slots])
    ens.proxies = pose + sample_kernel_shifts(kernel, ens.rngs)
    ens.iteration += 1
    ens.pose_history.append(pose.copy())
    return ens


def _js_1d(a: np.ndarray, b: np.ndarray) -> float:
    edges = np.histogram_bin_edges(np.concatenate([a, b]), bins="fd")
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    p = pa / pa.sum()
    q = pb / pb.sum()
    m = 0.5 * (p + q)

    def kl(u, v):
        mask = u > 0
        return float(np.sum(u[mask] * np.log(u[mask] / v[mask])))

    return min(max(0.5 * kl(p, m) + 0.5 * kl(q, m), 0.0), LOG2)


def convergence_js(pose_samples_a, pose_samples_b) -> float:
    """Histogram Jensen-Shannon divergence between pose marginals, in nats.

    Multi-factor poses report the worst factor. Bins are Freedman-Diaconis on
    the pooled sample, shared between both sets. A single-point (degenerate)
    marginal carries no usable histogram and is defined as log 2 with a
    warning — this is what makes a frozen delta-kernel chain register as
    non-converged rather than spuriously converged.
    """
    a = np.atleast_2d(np.asarray(pose_samples_a, dtype=np.float64).T).T
    b = np.atleast_2d(np.asarray(pose_samples_b, dtype=np.float64).T).T
    if a.shape[1] != b.shape[1]:
        raise StructuralError("pose sample sets disagree on factor count")
    for f in range(a.shape[1]):
        if a[:, f].min() == a[:, f].max() or b[:, f].min() == b[:, f].max():
            warnings.warn(
                "degenerate (single-point) pose marginal; JS defined as log 2",
                RuntimeWarning,
                stacklevel=2,
            )
            return LOG2
    if a.shape == b.shape and np.array_equal(a, b):
        return 0.0
    return max(_js_1d(a[:, f], b[:, f]) for f in range(a.shape[1]))


@dataclass
class GnpeResult:
    """Kept samples plus diagnostics; ``converged`` is part of the result."""

    samples: np.ndarray          # (M, d)
    proxies: np.ndarray          # (M, F) proxies that conditioned each sample
    chain_ids: np.ndarray        # (M,)
    iterations: np.ndarray       # (M,) which update each sample came from
    converged: bool
    n_iterations: int
    js_trace: list
    param_names: tuple[str, ...]
    pose_names: tuple[str, ...]
    diagnostics: dict = field(default_factory=dict)

    @property
    def pose_marginal(self) -> np.ndarray:
        return self.samples[:, self.diagnostics["pose_slots"]]


def run_gnpe(
    x,
    q,
    config: GnpeRunConfig,
    model: ForwardModel,
    seed=0,
    q_init=None,
    initial_proxies=None,
) -> GnpeResult:
    """Run the full pose-proxy sampler for one observation.

    Samples are pooled over post-burn-in iterations at the thinning stride,
    with the conditioning proxy, chain id and iteration retained per row. If
    the JS policy fails to reach its threshold within ``max_iterations`` the
    result carries ``converged=False`` and whatever post-burn-in samples
    exist (falling back to the final ensemble if burn-in was never cleared).
    """
    meta = getattr(q, "meta_", None)
    modes = tuple(config.modes) if config.modes is not None else model.gnpe_modes
    if meta:
        if "kernel" in meta and meta["kernel"] != config.kernel.to_dict():
            raise StructuralError(
                f"estimator was trained with kernel {meta['kernel']}, run requests "
                f"{config.kernel.to_dict()}"
            )
        if "modes" in meta and tuple(meta["modes"]) != modes:
            raise StructuralError(
                f"estimator was trained with modes {meta['modes']}, run requests {modes}"
            )

    ens = init_chains(
        x,
        config.n_chains,
        seed,
        model,
        config.kernel,
        q_init=q_init,
        fixed_pose=config.init_pose if initial_proxies is None and q_init is None else None,
        initial_proxies=initial_proxies,
    )

    kept_thetas, kept_proxies, kept_chain, kept_iter = [], [], [], []
    js_trace: list[float] = []
    converged = config.iteration_policy == "fixed"

    def _keep(iteration: int):
        if iteration > config.burn_in and (iteration - config.burn_in - 1) % config.thinning == 0:
            kept_thetas.append(ens.thetas.copy())
            kept_proxies.append(ens.used_proxies.copy())
            kept_chain.append(np.arange(ens.n_chains))
            kept_iter.append(np.full(ens.n_chains, iteration))

    max_updates = config.iterations if config.iteration_policy == "fixed" else config.max_iterations
    iteration = 0
    while iteration < max_updates:
        gibbs_iteration(ens, q, x, model, config.kernel, modes)
        iteration = ens.iteration
        js_trace.append(convergence_js(ens.pose_history[-2], ens.pose_history[-1]))
        _keep(iteration)
        if config.iteration_policy == "js" and js_trace[-1] < config.js_threshold:
            if iteration > config.burn_in:
                converged = True
                break

    if not kept_thetas:  # non-convergence before clearing burn-in: partial result
        kept_thetas.append(ens.thetas.copy())
        kept_proxies.append(ens.used_proxies.copy())
        kept_chain.append(np.arange(ens.n_chains))
        kept_iter.append(np.full(ens.n_chains, ens.iteration))

    return GnpeResult(
        samples=np.concatenate(kept_thetas),
        proxies=np.concatenate(kept_proxies),
        chain_ids=np.concatenate(kept_chain),
        iterations=np.concatenate(kept_iter),
        converged=converged,
        n_iterations=ens.iteration,
        js_trace=js_trace,
        param_names=model.param_names,
        pose_names=model.pose_names,
        diagnostics={
            "pose_slots": list(model.pose_slots),
            "kernel": config.kernel.to_dict(),
            "modes": list(modes),
            "n_chains": config.n_chains,
            "burn_in": config.burn_in,
            "thinning": config.thinning,
            "iteration_policy": config.iteration_policy,
            "js_threshold": config.js_threshold,
            "seed": seed_fingerprint(seed),
        },
    )


def chained_npe_sample(q_pose, q_rest, x, n: int, seed, model: ForwardModel):
    """Single-pass chain-rule baseline: draw the pose, standardize, draw the rest.

    No iteration happens, so the output inherits whatever bias the pose
    estimator has. Returns ``(samples (n, d), poses (n, F))``.
    """
    rngs = spawn_rngs(seed, n)
    poses = _sample_per_rng(q_pose, x, rngs)
    if poses.shape[1] != model.n_factors:
        raise StructuralError(
            f"pose estimator produces {poses.shape[1]} components, model has {model.n_factors}"
        )
    contexts = act_on_data_batch(-poses, x, model.data_rep)
    phi = q_rest.sample_batch(contexts, rngs, proxies=poses)
    rest_slots = [i for i in range(model.param_dim) if i not in model.pose_slots]
    if phi.shape[1] != len(rest_slots):
        raise StructuralError(
            f"q_rest produces {phi.shape[1]} components, model has {len(rest_slots)} non-pose"
        )
    samples = np.empty((n, model.param_dim))
    for j, slot in enumerate(rest_slots):
        samples[:, slot] = phi[:, j]
    for i, slot in enumerate(model.pose_slots):
        samples[:, slot] = poses[:, i]
    return samples, poses
