"""Simulation-dataset container: generation, binary persistence, CSV export.

The on-disk format is the package container (magic ``GNPE-DS\\0``) whose JSON
header carries the parameter schema, grid metadata, seed and record count,
followed by the ``theta``, ``theta_center`` and ``x`` arrays. Files with the
same content are byte-identical, so the manifest hash is stable across reruns
with the same seed.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .. import _binio
from ..exceptions import StructuralError
from ..validation import seed_fingerprint, spawn_rngs
from .base import ForwardModel

MAGIC = b"GNPE-DS\x00"


@dataclass
class SimulationDataset:
    model_name: str
    param_names: tuple[str, ...]
    thetas: np.ndarray         # (n, d)
    theta_centers: np.ndarray  # (n, d)
    xs: np.ndarray             # (n, *context_shape)
    seed: object = None        # int or a seed fingerprint dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.thetas) == len(self.theta_centers) == len(self.xs)):
            raise StructuralError("dataset arrays must have equal record counts")

    def __len__(self) -> int:
        return len(self.thetas)


def simulate_dataset(
    model: ForwardModel, n: int, seed: int, workers: int = 1, interior: bool = False
) -> SimulationDataset:
    """Draw ``n`` (theta, x) pairs from the model.

    Each record gets its own child rng stream derived from ``seed``, so the
    result is identical for any ``workers`` value and any scheduling.
    """
    if n < 1:
        raise StructuralError(f"need at least one record, got n={n}")
    rngs = spawn_rngs(seed, n)

    def _one(i: int):
        rng = rngs[i]
        theta = model.sample_prior_interior(rng) if interior else model.sample_prior(rng)
        x, theta_center = model.simulate(theta, rng)
        return theta, theta_center, x

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunks = np.array_split(np.arange(n), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(
                    _simulate_chunk,
                    [(model, seed, chunk.tolist(), interior) for chunk in chunks],
                )
            )
        records = [rec for part in parts for rec in part]
    else:
        records = [_one(i) for i in range(n)]

    thetas = np.stack([r[0] for r in records])
    centers = np.stack([r[1] for r in records])
    xs = np.stack([r[2] for r in records])
    return SimulationDataset(
        model_name=model.name,
        param_names=model.param_names,
        thetas=thetas,
        theta_centers=centers,
        xs=xs,
        seed=seed_fingerprint(seed),
        meta={"interior": interior, "context_shape": list(model.context_shape)},
    )


def _simulate_chunk(args):
    model, seed, indices, interior = args
    rngs = spawn_rngs(seed, max(indices) + 1)
    out = []
    for i in indices:
        rng = rngs[i]
        theta = model.sample_prior_interior(rng) if interior else model.sample_prior(rng)
        x, theta_center = model.simulate(theta, rng)
        out.append((theta, theta_center, x))
    return out


def _header(ds: SimulationDataset) -> dict:
    return {
        "model": ds.model_name,
        "param_names": list(ds.param_names),
        "n_records": len(ds),
        "seed": ds.seed,
        "meta": ds.meta,
    }


def save_dataset(ds: SimulationDataset, path) -> None:
    _binio.write_container(
        path,
        MAGIC,
        _header(ds),
        {"theta": ds.thetas, "theta_center": ds.theta_centers, "x": ds.xs},
    )


def load_dataset(path) -> SimulationDataset:
    header, arrays = _binio.read_container(path, MAGIC)
    return SimulationDataset(
        model_name=header["model"],
        param_names=tuple(header["param_names"]),
        thetas=arrays["theta"],
        theta_centers=arrays["theta_center"],
        xs=arrays["x"],
        seed=header["seed"],
        meta=header.get("meta", {}),
    )


def dataset_content_hash(ds: SimulationDataset) -> str:
    blob = _binio.write_container_bytes(
        MAGIC, _header(ds), {"theta": ds.thetas, "theta_center": ds.theta_centers, "x": ds.xs}
    )
    return hashlib.sha256(blob).hexdigest()


def dataset_to_csv(ds: SimulationDataset, path, max_rows: int | None = None) -> None:
    """Flat CSV for eyeballing: parameters, centers, then the data bins."""
    n = len(ds) if max_rows is None else min(len(ds), max_rows)
    x_flat = ds.xs.reshape(len(ds), -1)
    header = (
        ["index"]
        + [f"theta_{p}" for p in ds.param_names]
        + [f"center_{p}" for p in ds.param_names]
        + [f"x_{j}" for j in range(x_flat.shape[1])]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            writer.writerow(
                [i]
                + [repr(v) for v in ds.thetas[i]]
                + [repr(v) for v in ds.theta_centers[i]]
                + [repr(v) for v in x_flat[i]]
            )
