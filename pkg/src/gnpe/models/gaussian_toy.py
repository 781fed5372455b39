"""Scalar Gaussian worked example with a fully analytic posterior.

Prior tau ~ N(-5, 1), likelihood x | tau ~ N(tau, 1), hence evidence
N(-5, 2) and posterior tau | x ~ N((x - 5) / 2, 1/2). The likelihood is
equivariant under the joint shift (tau, x) -> (tau + d, x + d); the
*posterior* is equivariant under (tau, x) -> (tau + d, x + 2 d) because the
prior is not invariant, so the data representation relevant for
pose-standardized inference has scale 2 while the likelihood-level one has
scale 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..groups import Affine1d
from ..validation import as_float_array
from .base import ForwardModel, GaussianPosterior

PRIOR_MEAN = -5.0
PRIOR_VAR = 1.0
LIKELIHOOD_VAR = 1.0


class GaussianToyModel(ForwardModel):
    """One-parameter model: the pose is the parameter itself."""

    name = "gaussian-toy"
    param_names = ("tau",)
    pose_slots = (0,)
    gnpe_modes = ("exact",)
    context_shape = (1,)

    data_rep = Affine1d(scale=2.0)  # posterior-level representation
    likelihood_rep = Affine1d(scale=1.0)

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return np.array([rng.normal(PRIOR_MEAN, np.sqrt(PRIOR_VAR))])

    def simulate(self, theta, rng: np.random.Generator):
        theta = as_float_array(theta, "theta", ndim=1)
        x = theta[0] + rng.normal(0.0, np.sqrt(LIKELIHOOD_VAR))
        return np.array([x]), theta.copy()

    def posterior(self, x: float) -> GaussianPosterior:
        """Analytic posterior N((x - 5) / 2, 1/2)."""
        return GaussianPosterior(np.array([(x - 5.0) / 2.0]), np.array([0.5]))

    def oracle_posterior(self, x, theta_center=None) -> GaussianPosterior:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        return self.posterior(float(x[0]))

    def log_likelihood(self, x: float, theta) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        return float(stats.norm.logpdf(x, loc=theta[0], scale=np.sqrt(LIKELIHOOD_VAR)))

    def in_support(self, theta) -> bool:
        return True

    def prior_stds(self) -> np.ndarray:
        return np.array([np.sqrt(PRIOR_VAR)])


def gaussian_toy_simulate(tau: float, rng: np.random.Generator) -> float:
    """Scalar convenience wrapper: one likelihood draw x = tau + noise."""
    return float(tau + rng.normal(0.0, np.sqrt(LIKELIHOOD_VAR)))


def gaussian_toy_posterior(x: float) -> GaussianPosterior:
    return GaussianToyModel().posterior(x)


@dataclass(frozen=True)
class GaussianToyPosteriorOracle:
    """Standardized-argument posterior function N((x' - 5) / 2, 1/2).

    This is the density the worked example plugs into its pose-proxy sampler:
    the posterior itself, evaluated at pose-standardized arguments. With it,
    one Gibbs update already lands on the true posterior marginal regardless
    of the proxy value.
    """

    param_dim: int = 1

    def sample(self, context, n: int, rng: np.random.Generator, proxy=None) -> np.ndarray:
        xp = float(np.atleast_1d(np.asarray(context, dtype=np.float64))[0])
        return rng.normal((xp - 5.0) / 2.0, np.sqrt(0.5), size=(n, 1))

    def sample_batch(self, contexts, rngs, proxies=None) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        means = (contexts[:, 0] - 5.0) / 2.0
        z = np.array([rng.standard_normal() for rng in rngs])
        return (means + np.sqrt(0.5) * z)[:, None]


@dataclass(frozen=True)
class GaussianToyTrainedOracle:
    """Exact minimizer of the pose-standardized training loss for this model.

    For a Gaussian blurring kernel of width ``kernel_sigma`` = k, the
    conditional of the blurred joint is

        tau' | x'  ~  N( k^2 (x' - 5) / (1 + 2 k^2),  k^2 / (1 + 2 k^2) ),

    which is what a perfectly trained network converges to. It approaches the
    posterior function N((x'-5)/2, 1/2) as k -> inf and degenerates to a point
    mass at 0 as k -> 0 — the no-blurring limit in which the Gibbs chain
    cannot move. Plugging this density into the sampler gives the exact
    distribution-level update whose fixed point is the true posterior.
    """

    kernel_sigma: float
    param_dim: int = 1

    def _moments(self, xp: np.ndarray):
        k2 = self.kernel_sigma**2
        if k2 == 0.0:
            return np.zeros_like(xp), 0.0
        slope = k2 / (1.0 + 2.0 * k2)
        return slope * (xp - 5.0), np.sqrt(k2 / (1.0 + 2.0 * k2))

    def sample(self, context, n: int, rng: np.random.Generator, proxy=None) -> np.ndarray:
        xp = np.atleast_1d(np.asarray(context, dtype=np.float64))[:1]
        mean, std = self._moments(xp)
        z = rng.standard_normal((n, 1))
        return mean[None, :] + std * z

    def sample_batch(self, contexts, rngs, proxies=None) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=np.float64))
        means, std = self._moments(contexts[:, 0])
        z = np.array([rng.standard_normal() for rng in rngs])
        return (means + std * z)[:, None]
