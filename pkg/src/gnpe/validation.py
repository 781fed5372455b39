"""Input-validation helpers used across estimators, models and the sampler.

These mirror the role of sklearn's ``check_array``/``check_random_state`` but
are built around :class:`numpy.random.Generator`, which is the only RNG type
the package passes around (every stochastic operation takes an explicit
generator so results are reproducible and worker-safe).
"""

from __future__ import annotations

import numpy as np

from .exceptions import DataError, StructuralError


def ensure_rng(seed_or_rng=None) -> np.random.Generator:
    """Return a numpy Generator from a seed, a Generator, or None (fresh entropy)."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    if isinstance(seed_or_rng, np.random.SeedSequence):
        return np.random.default_rng(seed_or_rng)
    return np.random.default_rng(seed_or_rng)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int, None, or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def seed_fingerprint(seed):
    """JSON-safe description of a seed (for manifests)."""
    if seed is None or isinstance(seed, int):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return str(seed)


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent child generators from one root seed.

    Uses ``SeedSequence.spawn`` so streams are statistically independent and
    the mapping seed -> streams is stable across runs and platforms.
    """
    if n < 0:
        raise StructuralError(f"cannot spawn {n} rng streams")
    return [np.random.default_rng(child) for child in as_seed_sequence(seed).spawn(n)]


def as_float_array(x, name: str = "x", ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 ndarray, optionally enforcing dimensionality."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise StructuralError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def require_finite(x: np.ndarray, name: str = "x") -> np.ndarray:
    """Raise :class:`DataError` if the array contains NaN or infinities."""
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} contains non-finite entries")
    return x


def check_matching_length(a, b, name_a: str, name_b: str) -> None:
    if len(a) != len(b):
        raise StructuralError(
            f"{name_a} and {name_b} must have equal length, got {len(a)} vs {len(b)}"
        )
