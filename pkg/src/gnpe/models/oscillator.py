"""Damped harmonic oscillator excited by a unit impulse at time tau.

The observable is the impulse response on a periodic grid of 2000 bins over
[-5, 5] s: zero before the excitation, a damped sinusoid after it.
Stochasticity enters through a Gaussian perturbation of the parameters
before solving, so the ground-truth posterior is an uncorrelated Gaussian
centered on the perturbed parameters with the perturbation widths — the
simulator returns that center alongside the data.

The posterior is exactly equivariant under time translations of tau
(cyclically, given the periodic grid). The "approx" variant breaks this by
letting the tau-noise width ramp linearly in tau.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import DataError
from ..groups import CyclicTimeShift, Grid
from ..validation import as_float_array
from .base import ForwardModel, GaussianPosterior, _BoxPrior

GRID = Grid(n_bins=2000, duration=10.0, t_start=-5.0, units="s")

PRIOR_LOWS = np.array([3.0, 0.2, -5.0])
PRIOR_HIGHS = np.array([10.0, 0.5, 0.0])
NOISE_SIGMAS = np.array([0.3, 0.03, 0.3])


def oscillator_solution(omega0: float, beta: float, tau: float, grid: Grid = GRID) -> np.ndarray:
    """Impulse response: 0 for t <= tau, damped sinusoid for t > tau.

    Requires 0 < beta < 1 (underdamped); the prior box keeps well inside.
    """
    if not 0.0 < beta < 1.0:
        raise DataError(f"damping ratio must be in (0, 1), got {beta}")
    t = grid.times
    damped = np.sqrt(1.0 - beta**2) * omega0
    dt = t - tau
    out = np.zeros_like(t)
    after = dt > 0
    s = dt[after]
    out[after] = np.exp(-beta * omega0 * s) * np.sin(damped * s) / damped
    return out


class OscillatorModel(_BoxPrior, ForwardModel):
    """Exactly tau-equivariant oscillator model."""

    name = "oscillator"
    param_names = ("omega0", "beta", "tau")
    pose_slots = (2,)
    gnpe_modes = ("exact",)
    context_shape = (GRID.n_bins,)

    def __init__(self, noise_sigmas=NOISE_SIGMAS, grid: Grid = GRID, prior_lows=None, prior_highs=None):
        self.noise_sigmas = np.asarray(noise_sigmas, dtype=np.float64)
        self.grid = grid
        self.prior_lows = PRIOR_LOWS if prior_lows is None else np.asarray(prior_lows, dtype=np.float64)
        self.prior_highs = PRIOR_HIGHS if prior_highs is None else np.asarray(prior_highs, dtype=np.float64)
        self.data_rep = CyclicTimeShift(grid)

    def solution(self, theta) -> np.ndarray:
        theta = as_float_array(theta, "theta", ndim=1)
        return oscillator_solution(theta[0], theta[1], theta[2], self.grid)

    def _perturbation_sigmas(self, theta) -> np.ndarray:
        return self.noise_sigmas

    def simulate(self, theta, rng: np.random.Generator):
        theta = as_float_array(theta, "theta", ndim=1)
        sigmas = self._perturbation_sigmas(theta)
        theta_center = theta + rng.normal(0.0, 1.0, size=theta.shape) * sigmas
        return self.solution(theta_center), theta_center

    def oracle_posterior(self, x, theta_center) -> GaussianPosterior:
        theta_center = as_float_array(theta_center, "theta_center", ndim=1)
        sigmas = self._perturbation_sigmas(theta_center)
        return GaussianPosterior(theta_center.copy(), sigmas**2)


class OscillatorApproxModel(OscillatorModel):
    """Oscillator with tau-dependent tau-noise, breaking exact equivariance.

    The tau perturbation width ramps as
    ``sigma_tau * (1 + ramp_coefficient * (tau + 2.5) / 2.5)``: unchanged at
    the prior center tau = -2.5, wider toward tau = 0. The ramp coefficient
    is a made-up knob sized so violations are measurable but small; it is
    config-exposed.
    """

    name = "oscillator-approx"
    gnpe_modes = ("approximate",)

    def __init__(
        self,
        ramp_coefficient: float = 0.5,
        noise_sigmas=NOISE_SIGMAS,
        grid: Grid = GRID,
        prior_lows=None,
        prior_highs=None,
    ):
        super().__init__(
            noise_sigmas=noise_sigmas, grid=grid, prior_lows=prior_lows, prior_highs=prior_highs
        )
        self.ramp_coefficient = float(ramp_coefficient)

    def effective_tau_sigma(self, tau: float) -> float:
        return float(self.noise_sigmas[2] * (1.0 + self.ramp_coefficient * (tau + 2.5) / 2.5))

    def _perturbation_sigmas(self, theta) -> np.ndarray:
        sigmas = self.noise_sigmas.copy()
        sigmas[2] = self.effective_tau_sigma(float(theta[2]))
        return sigmas
