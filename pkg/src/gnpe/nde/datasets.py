"""Training-set construction for the NPE, pose-standardized and chained objectives.

Starting from plain (theta, x) simulations, the different objectives differ
only in how each example is turned into a (target, context[, proxy]) triple:

- plain NPE: target = theta, context = x;
- pose init: target = the pose components of theta, context = x;
- pose-standardized (exact factors): blur the pose into a proxy, transform
  the data by the inverse proxy, and shift the exact-factor pose targets by
  the proxy (so they become minus the blur noise); approximate factors keep
  their raw targets and expose the proxy value as a conditioning feature;
- chained: standardize by the *exact* pose (no blur), target the non-pose
  parameters, condition on the pose.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import StructuralError
from ..groups import act_on_data, compose, inverse, pose_of
from ..kernels import Kernel, sample_kernel
from ..models.base import ForwardModel
from ..models.datasets_io import SimulationDataset, simulate_dataset
from ..validation import as_seed_sequence, spawn_rngs


@dataclass
class TrainingDataset:
    """Context/target pairs with a frozen validation split."""

    contexts: np.ndarray            # (n, *context_shape)
    targets: np.ndarray             # (n, d)
    val_mask: np.ndarray            # (n,) bool
    proxies: np.ndarray | None = None
    target_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.contexts) != len(self.targets):
            raise StructuralError("contexts and targets must have equal counts")
        if self.val_mask.shape != (len(self.contexts),):
            raise StructuralError("val_mask must have one entry per example")
        if self.proxies is not None and len(self.proxies) != len(self.contexts):
            raise StructuralError("proxies must have one row per example")

    @property
    def n_train(self) -> int:
        return int((~self.val_mask).sum())

    @property
    def n_val(self) -> int:
        return int(self.val_mask.sum())

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.contexts, self.targets, self.val_mask):
            h.update(np.ascontiguousarray(arr).tobytes())
        if self.proxies is not None:
            h.update(np.ascontiguousarray(self.proxies).tobytes())
        h.update(json.dumps(self.meta, sort_keys=True, default=str).encode())
        return h.hexdigest()


def _split_mask(n: int, fraction: float, seed) -> np.ndarray:
    if n < 2:
        raise StructuralError("need at least 2 examples")
    n_val = max(1, int(round(fraction * n))) if fraction > 0 else 0
    order = np.random.default_rng(as_seed_sequence(seed)).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[order[:n_val]] = True
    return mask


def gnpe_transform_example(theta, x, kernel: Kernel, modes, rng, model: ForwardModel):
    """Turn one (theta, x) pair into a pose-standardized training example.

    Returns ``(target, context, proxy_features)``; ``proxy_features`` is None
    when every factor is exact. Exact factors subtract the proxy from the
    pose target (leaving minus the blur noise); approximate factors keep the
    raw target and surface the proxy value for post-embedding conditioning.
    """
    modes = tuple(modes)
    if len(modes) != model.n_factors:
        raise StructuralError(
            f"{len(modes)} modes given for {model.n_factors} group factors"
        )
    if any(m not in ("exact", "approximate") for m in modes):
        raise StructuralError(f"modes must be 'exact' or 'approximate', got {modes}")
    theta = np.asarray(theta, dtype=np.float64)
    g_pose = pose_of(theta, model.pose_slots)
    proxy = compose(g_pose, sample_kernel(kernel, rng))
    context = act_on_data(inverse(proxy), x, model.data_rep)
    target = theta.copy()
    proxy_features = []
    for i, mode in enumerate(modes):
        if mode == "exact":
            target[model.pose_slots[i]] -= proxy.shifts[i]
        else:
            proxy_features.append(proxy.shifts[i])
    feats = np.array(proxy_features) if proxy_features else None
    return target, context, feats


def npe_dataset_from_sims(
    sims: SimulationDataset, model: ForwardModel, seed, validation_fraction: float = 0.02
) -> TrainingDataset:
    mask = _split_mask(len(sims), validation_fraction, seed)
    return TrainingDataset(
        contexts=sims.xs.copy(),
        targets=sims.thetas.copy(),
        val_mask=mask,
        target_names=model.param_names,
        meta={"kind": "npe", "model": model.name, "sim_seed": sims.seed},
    )


def pose_dataset_from_sims(
    sims: SimulationDataset, model: ForwardModel, seed, validation_fraction: float = 0.02
) -> TrainingDataset:
    """Targets restricted to the pose components (for the initialization network)."""
    mask = _split_mask(len(sims), validation_fraction, seed)
    slots = list(model.pose_slots)
    return TrainingDataset(
        contexts=sims.xs.copy(),
        targets=sims.thetas[:, slots].copy(),
        val_mask=mask,
        target_names=model.pose_names,
        meta={"kind": "pose-init", "model": model.name, "sim_seed": sims.seed},
    )


def gnpe_dataset_from_sims(
    sims: SimulationDataset,
    model: ForwardModel,
    kernel: Kernel,
    seed,
    modes=None,
    validation_fraction: float = 0.02,
) -> TrainingDataset:
    modes = tuple(modes) if modes is not None else model.gnpe_modes
    split_seed, blur_seed = as_seed_sequence(seed).spawn(2)
    rngs = spawn_rngs(blur_seed, len(sims))
    targets, contexts, proxies = [], [], []
    for i in range(len(sims)):
        t, c, p = gnpe_transform_example(
            sims.thetas[i], sims.xs[i], kernel, modes, rngs[i], model
        )
        targets.append(t)
        contexts.append(c)
        proxies.append(p)
    has_proxy = proxies[0] is not None
    mask = _split_mask(len(sims), validation_fraction, split_seed)
    return TrainingDataset(
        contexts=np.stack(contexts),
        targets=np.stack(targets),
        val_mask=mask,
        proxies=np.stack(proxies) if has_proxy else None,
        target_names=model.param_names,
        meta={
            "kind": "gnpe",
            "model": model.name,
            "sim_seed": sims.seed,
            "kernel": kernel.to_dict(),
            "modes": list(modes),
        },
    )


def chained_dataset_from_sims(
    sims: SimulationDataset, model: ForwardModel, seed, validation_fraction: float = 0.02
) -> TrainingDataset:
    """Pose-standardized by the exact pose, conditioned on it, targeting the rest."""
    mask = _split_mask(len(sims), validation_fraction, seed)
    slots = list(model.pose_slots)
    rest = [i for i in range(model.param_dim) if i not in slots]
    contexts = []
    for i in range(len(sims)):
        pose = pose_of(sims.thetas[i], model.pose_slots)
        contexts.append(act_on_data(inverse(pose), sims.xs[i], model.data_rep))
    return TrainingDataset(
        contexts=np.stack(contexts),
        targets=sims.thetas[:, rest].copy(),
        val_mask=mask,
        proxies=sims.thetas[:, slots].copy(),
        target_names=tuple(model.param_names[i] for i in rest),
        meta={"kind": "chained", "model": model.name, "sim_seed": sims.seed},
    )


def generate_npe_dataset(
    model: ForwardModel,
    n: int,
    seed,
    validation_fraction: float = 0.02,
    workers: int = 1,
) -> TrainingDataset:
    """Simulate ``n`` prior draws and package them as a plain NPE training set."""
    if n < 2:
        raise StructuralError("need at least 2 simulations")
    sim_seed, split_seed = as_seed_sequence(seed).spawn(2)
    sims = simulate_dataset(model, n, sim_seed, workers=workers)
    return npe_dataset_from_sims(sims, model, split_seed, validation_fraction)
