"""Forward-model contract and shared evaluation records.

A forward model bundles prior sampling, simulation, the pose definition
(which parameter slots the translation group moves) and an analytic
posterior oracle. All in-scope models are constructed so that the simulator
perturbs parameters with Gaussian noise and returns the perturbed center,
which makes the ground-truth posterior available without inverting the
forward map numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..exceptions import StructuralError
from ..validation import as_float_array


@dataclass(frozen=True)
class GaussianPosterior:
    """Uncorrelated Gaussian posterior with per-dimension mean and variance."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = as_float_array(self.mean, "mean", ndim=1)
        variance = as_float_array(self.variance, "variance", ndim=1)
        if mean.shape != variance.shape:
            raise StructuralError("mean and variance must have equal shape")
        if np.any(variance <= 0):
            raise StructuralError("posterior variance must be strictly positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", variance)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.std, size=(n, self.mean.shape[0]))

    def logpdf(self, theta) -> np.ndarray:
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        z = (theta - self.mean) / self.std
        return np.sum(-0.5 * z**2 - 0.5 * np.log(2 * np.pi * self.variance), axis=1)

    def marginal_cdf(self, dim: int):
        """CDF of one marginal, suitable for one-sample KS tests."""
        return stats.norm(loc=self.mean[dim], scale=self.std[dim]).cdf


@dataclass(frozen=True)
class Observation:
    """One simulated observation plus the bookkeeping its evaluation needs."""

    model_name: str
    x: np.ndarray
    theta: np.ndarray
    theta_center: np.ndarray
    oracle: GaussianPosterior
    seed: int | None = None


class ForwardModel:
    """Base class; subclasses fill in the attributes and the two core methods.

    Required attributes: ``name``, ``param_names``, ``pose_slots``,
    ``gnpe_modes`` (one of "exact"/"approximate" per group factor),
    ``data_rep`` and ``context_shape``.
    """

    name: str
    param_names: tuple[str, ...]
    pose_slots: tuple[int, ...]
    gnpe_modes: tuple[str, ...]
    context_shape: tuple[int, ...]

    @property
    def param_dim(self) -> int:
        return len(self.param_names)

    @property
    def n_factors(self) -> int:
        return len(self.pose_slots)

    @property
    def pose_names(self) -> tuple[str, ...]:
        return tuple(self.param_names[s] for s in self.pose_slots)

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def simulate(self, theta, rng: np.random.Generator):
        """Return ``(x, theta_center)`` for one parameter draw."""
        raise NotImplementedError

    def oracle_posterior(self, x, theta_center) -> GaussianPosterior:
        raise NotImplementedError

    def in_support(self, theta) -> bool:
        raise NotImplementedError

    def prior_stds(self) -> np.ndarray:
        """Per-dimension prior standard deviations (for metric normalization)."""
        raise NotImplementedError

    def observe(self, rng: np.random.Generator, interior: bool = False) -> Observation:
        """Simulate one observation together with its ground-truth posterior."""
        theta = self.sample_prior_interior(rng) if interior else self.sample_prior(rng)
        x, theta_center = self.simulate(theta, rng)
        return Observation(
            model_name=self.name,
            x=x,
            theta=theta,
            theta_center=theta_center,
            oracle=self.oracle_posterior(x, theta_center),
        )

    def sample_prior_interior(self, rng: np.random.Generator) -> np.ndarray:
        """Prior draw kept away from the support boundary.

        Evaluation observations use this so the Gaussian oracle (which
        neglects prior-boundary truncation) stays an honest reference.
        Models with unbounded priors just return a prior draw.
        """
        return self.sample_prior(rng)


class _BoxPrior:
    """Uniform box prior helper mixed into the time-series models."""

    prior_lows: np.ndarray
    prior_highs: np.ndarray
    noise_sigmas: np.ndarray

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.prior_lows, self.prior_highs)

    def sample_prior_interior(self, rng: np.random.Generator, margin_sigmas: float = 3.0):
        lows = self.prior_lows + margin_sigmas * self.noise_sigmas
        highs = self.prior_highs - margin_sigmas * self.noise_sigmas
        return rng.uniform(lows, highs)

    def in_support(self, theta) -> bool:
        theta = np.asarray(theta, dtype=np.float64)
        return bool(np.all(theta >= self.prior_lows) and np.all(theta <= self.prior_highs))

    def prior_stds(self) -> np.ndarray:
        return (self.prior_highs - self.prior_lows) / np.sqrt(12.0)


@dataclass
class FixedPoseSampler:
    """Estimator-shaped adapter drawing the pose from a fixed Gaussian.

    Stands in for a pose-initialization network when an oracle (or a
    deliberately biased oracle) is wanted: samples ignore the context.
    ``sigma`` entries may be zero, in which case that factor is a point mass.
    """

    mean: np.ndarray
    sigma: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        if self.bias is None:
            self.bias = np.zeros_like(self.mean)
        else:
            self.bias = np.atleast_1d(np.asarray(self.bias, dtype=np.float64))

    @property
    def param_dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, context, n: int, rng: np.random.Generator, proxy=None) -> np.ndarray:
        loc = self.mean + self.bias
        z = rng.standard_normal((n, self.param_dim))
        return loc + self.sigma * z

    def sample_batch(self, contexts, rngs, proxies=None) -> np.ndarray:
        return np.vstack([self.sample(None, 1, rng) for rng in rngs])

    def sample_per_rng(self, context, rngs, proxies=None) -> np.ndarray:
        return self.sample_batch(None, rngs)
