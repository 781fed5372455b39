"""Evaluation metrics: classifier two-sample test, mean MSE, spectra, KS.

The two-sample test follows the widely used SBI-benchmark convention: a
two-hidden-layer MLP classifier of width 10x the sample dimension, trained
to separate the two sets after pooled z-scoring; the score is held-out
accuracy, 0.5 when the sets are indistinguishable, 1.0 when fully separable.
Repetitions use fresh splits and the mean is reported.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPClassifier

from .exceptions import StructuralError
from .validation import as_seed_sequence

MIN_C2ST_SAMPLES = 500


@dataclass(frozen=True)
class C2stConfig:
    hidden_multiplier: int = 10
    max_iter: int = 10_000
    learning_rate: float = 1e-3
    train_fraction: float = 0.8
    repetitions: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise StructuralError("train fraction must be in (0, 1)")
        if self.repetitions < 1:
            raise StructuralError("need at least one repetition")


def _c2st_single(payload) -> float:
    data, labels, cfg, child = payload
    import warnings as _warnings

    rng = np.random.default_rng(child)
    order = rng.permutation(len(data))
    n_train = int(round(cfg.train_fraction * len(data)))
    train, test = order[:n_train], order[n_train:]
    ndim = data.shape[1]
    clf = MLPClassifier(
        activation="relu",
        hidden_layer_sizes=(cfg.hidden_multiplier * ndim, cfg.hidden_multiplier * ndim),
        max_iter=cfg.max_iter,
        learning_rate_init=cfg.learning_rate,
        solver="adam",
        random_state=int(rng.integers(2**31 - 1)),
    )
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore", ConvergenceWarning)
        clf.fit(data[train], labels[train])
    return float(clf.score(data[test], labels[test]))


def c2st(samples_p, samples_q, cfg: C2stConfig = C2stConfig(), workers: int = 1) -> float:
    """Mean held-out accuracy of a classifier separating the two sample sets.

    Repetitions get independent child seeds, so the score is identical for
    any ``workers`` value.
    """
    p = np.asarray(samples_p, dtype=np.float64)
    q = np.asarray(samples_q, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if q.ndim == 1:
        q = q[:, None]
    if p.shape[1] != q.shape[1]:
        raise StructuralError(f"dimension mismatch: {p.shape[1]} vs {q.shape[1]}")
    if len(p) < MIN_C2ST_SAMPLES or len(q) < MIN_C2ST_SAMPLES:
        raise StructuralError(f"need at least {MIN_C2ST_SAMPLES} samples per set")

    data = np.concatenate([p, q])
    labels = np.concatenate([np.zeros(len(p)), np.ones(len(q))])
    mean = data.mean(axis=0)
    scale = data.std(axis=0)
    scale[scale == 0.0] = 1.0
    data = (data - mean) / scale

    children = as_seed_sequence(cfg.seed).spawn(cfg.repetitions)
    payloads = [(data, labels, cfg, child) for child in children]
    if workers > 1 and cfg.repetitions > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_c2st_single, payloads))
    else:
        scores = [_c2st_single(pl) for pl in payloads]
    return float(np.mean(scores))


def mse_of_means(samples, reference, prior_stds) -> float:
    """Squared distance between sample means after normalizing by prior widths."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    reference = np.atleast_2d(np.asarray(reference, dtype=np.float64))
    prior_stds = np.asarray(prior_stds, dtype=np.float64)
    if samples.shape[1] != reference.shape[1] or samples.shape[1] != prior_stds.shape[0]:
        raise StructuralError("samples, reference and prior_stds disagree on dimension")
    diff = (samples.mean(axis=0) - reference.mean(axis=0)) / prior_stds
    return float(np.sum(diff**2))


def singular_spectrum(matrix, center: bool = True) -> np.ndarray:
    """Descending singular values of a (simulations x bins) matrix.

    ``center=True`` removes the column means (the mean simulation) first.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise StructuralError("need a non-empty 2-D matrix")
    if center:
        m = m - m.mean(axis=0, keepdims=True)
    return np.linalg.svd(m, compute_uv=False)


def effective_dimension(singular_values, rel_threshold: float = 1e-2) -> int:
    """Count of singular values at least ``rel_threshold`` times the largest."""
    sv = np.asarray(singular_values, dtype=np.float64)
    if sv.size == 0:
        raise StructuralError("empty singular value list")
    top = sv.max()
    if top == 0.0:
        return 0
    return int(np.sum(sv >= rel_threshold * top))


def ks_statistic(samples_1d, cdf) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic and asymptotic p-value."""
    samples = np.asarray(samples_1d, dtype=np.float64).ravel()
    if samples.shape[0] < 100:
        raise StructuralError("need at least 100 samples for the KS gate")
    result = stats.kstest(samples, cdf)
    return float(result.statistic), float(result.pvalue)


def c2st_config_echo(cfg: C2stConfig) -> dict:
    return asdict(cfg)
