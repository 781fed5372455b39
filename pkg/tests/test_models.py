import numpy as np
import pytest
from scipy import stats
from scipy.integrate import solve_ivp

from gnpe import DataError, GroupElement, act_on_data
from gnpe.models import (
    GaussianToyModel,
    MultichannelModel,
    OscillatorApproxModel,
    OscillatorModel,
    dataset_content_hash,
    dataset_to_csv,
    gaussian_toy_posterior,
    gaussian_toy_simulate,
    load_dataset,
    oscillator_solution,
    save_dataset,
    simulate_dataset,
)
from gnpe.models.oscillator import GRID


class TestGaussianToy:
    model = GaussianToyModel()

    def test_prior_mean(self):
        rng = np.random.default_rng(11)
        draws = np.array([self.model.sample_prior(rng)[0] for _ in range(100_000)])
        assert -5.02 <= draws.mean() <= -4.98

    def test_evidence_variance(self):
        # joint draws should have x ~ N(-5, 2)
        rng = np.random.default_rng(12)
        xs = np.array(
            [gaussian_toy_simulate(self.model.sample_prior(rng)[0], rng) for _ in range(100_000)]
        )
        assert 1.97 <= xs.var() <= 2.03
        assert -5.03 <= xs.mean() <= -4.97

    def test_fixed_seed_reproducible(self):
        x1, _ = self.model.simulate([1.0], np.random.default_rng(42))
        x2, _ = self.model.simulate([1.0], np.random.default_rng(42))
        assert np.array_equal(x1, x2)

    def test_posterior_at_x3(self):
        post = gaussian_toy_posterior(3.0)
        assert post.mean[0] == -1.0
        assert post.variance[0] == 0.5

    def test_posterior_at_x5(self):
        post = gaussian_toy_posterior(5.0)
        assert post.mean[0] == 0.0

    def test_posterior_at_prior_center_importance_sampling(self):
        # independent check of the closed form at x = -5 via self-normalized
        # importance sampling with the prior as proposal
        rng = np.random.default_rng(13)
        taus = rng.normal(-5.0, 1.0, size=400_000)
        w = np.exp(stats.norm.logpdf(-5.0, loc=taus, scale=1.0))
        w /= w.sum()
        mean_is = np.sum(w * taus)
        var_is = np.sum(w * (taus - mean_is) ** 2)
        post = gaussian_toy_posterior(-5.0)
        assert post.mean[0] == pytest.approx(-5.0)
        assert mean_is == pytest.approx(post.mean[0], abs=0.01)
        assert var_is == pytest.approx(post.variance[0], rel=0.02)

    def test_likelihood_equivariance_under_joint_shift(self):
        # likelihood-level representation has scale 1
        for tau, x, d in [(-4.0, -3.0, 2.5), (0.0, 1.0, -7.0)]:
            lhs = self.model.log_likelihood(x, [tau])
            rhs = self.model.log_likelihood(x + d, [tau + d])
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_posterior_equivariance_scale_two(self):
        # posterior-level representation doubles the data shift
        for x, d in [(3.0, 1.0), (-2.0, -0.7)]:
            base = gaussian_toy_posterior(x)
            shifted = gaussian_toy_posterior(x + 2 * d)
            assert shifted.mean[0] == pytest.approx(base.mean[0] + d)
            assert shifted.variance[0] == base.variance[0]
        rep = self.model.data_rep
        assert act_on_data(GroupElement((1.0,)), np.array([3.0]), rep)[0] == 5.0


class TestOscillatorSolution:
    def test_zero_before_excitation_exactly(self):
        for theta in [(5.0, 0.3, -2.0), (3.0, 0.2, -5.0), (10.0, 0.49, -0.5)]:
            x = oscillator_solution(*theta)
            before = GRID.times <= theta[2]
            assert np.all(x[before] == 0.0)

    def test_matches_ode_integration(self):
        # independent oracle: integrate the damped-oscillator ODE with the
        # impulse folded into the initial condition (velocity jump of 1 at tau)
        omega0, beta, tau = 5.0, 0.3, -2.0
        x = oscillator_solution(omega0, beta, tau)

        def rhs(t, y):
            return [y[1], -2 * beta * omega0 * y[1] - omega0**2 * y[0]]

        after = GRID.times > tau
        sol = solve_ivp(
            rhs,
            (tau, GRID.times[after][-1]),
            [0.0, 1.0],
            t_eval=GRID.times[after],
            rtol=1e-10,
            atol=1e-12,
        )
        assert np.max(np.abs(x[after] - sol.y[0])) < 1e-4

    def test_first_peak_location(self):
        # stationarity oracle: first maximum at atan(sqrt(1-b^2)/b)/omega_d
        omega0, beta, tau = 5.0, 0.3, -2.0
        x = oscillator_solution(omega0, beta, tau)
        omega_d = np.sqrt(1 - beta**2) * omega0
        s_star = np.arctan2(np.sqrt(1 - beta**2), beta) / omega_d
        peak_idx = np.argmax(x)
        assert abs(GRID.times[peak_idx] - (tau + s_star)) <= GRID.dt

    def test_overdamped_rejected(self):
        with pytest.raises(DataError):
            oscillator_solution(5.0, 1.0, -2.0)
        with pytest.raises(DataError):
            oscillator_solution(5.0, -0.1, -2.0)


class TestOscillatorModel:
    model = OscillatorModel()

    def test_forced_zero_noise_equals_solution(self):
        quiet = OscillatorModel(noise_sigmas=(0.0, 0.0, 0.0))
        theta = np.array([5.0, 0.3, -2.0])
        x, center = quiet.simulate(theta, np.random.default_rng(0))
        assert np.array_equal(x, oscillator_solution(*theta))
        assert np.array_equal(center, theta)

    def test_oracle_posterior_widths(self):
        rng = np.random.default_rng(1)
        theta = self.model.sample_prior(rng)
        x, center = self.model.simulate(theta, rng)
        post = self.model.oracle_posterior(x, center)
        assert np.allclose(post.std, [0.3, 0.03, 0.3])
        assert np.array_equal(post.mean, center)

    def test_simulate_deterministic(self):
        theta = np.array([6.0, 0.4, -3.0])
        x1, c1 = self.model.simulate(theta, np.random.default_rng(9))
        x2, c2 = self.model.simulate(theta, np.random.default_rng(9))
        assert np.array_equal(x1, x2)
        assert np.array_equal(c1, c2)

    def test_oracle_equivariance_under_time_shift(self):
        # shifting the data shifts only the tau component of the oracle
        rng = np.random.default_rng(2)
        theta = np.array([5.0, 0.3, -2.5])
        x, center = self.model.simulate(theta, rng)
        dtau = 0.8
        shifted = act_on_data(GroupElement((dtau,)), x, self.model.data_rep)
        center_shifted = center + np.array([0.0, 0.0, dtau])
        post = self.model.oracle_posterior(x, center)
        post_shifted = self.model.oracle_posterior(shifted, center_shifted)
        assert np.allclose(post_shifted.mean, post.mean + [0.0, 0.0, dtau])
        assert np.allclose(post_shifted.variance, post.variance)
        # and the shifted data is the solution at shifted tau, up to the
        # ~1e-5 spectral ringing a fractional shift of the kink produces
        direct = oscillator_solution(center[0], center[1], center[2] + dtau)
        assert np.max(np.abs(shifted - direct)) < 5e-5

    def test_prior_support(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            assert self.model.in_support(self.model.sample_prior(rng))

    def test_interior_draws_stay_inside(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            theta = self.model.sample_prior_interior(rng)
            assert np.all(theta >= self.model.prior_lows + 3 * self.model.noise_sigmas)
            assert np.all(theta <= self.model.prior_highs - 3 * self.model.noise_sigmas)


class TestOscillatorApprox:
    model = OscillatorApproxModel()

    def test_ramp_at_center_unchanged(self):
        assert self.model.effective_tau_sigma(-2.5) == pytest.approx(0.3)

    def test_ramp_at_zero(self):
        assert self.model.effective_tau_sigma(0.0) == pytest.approx(0.45)

    def test_equivariance_violation_detectable(self):
        # oracle posteriors for tau and shifted tau differ in width
        sig_a = self.model.effective_tau_sigma(-4.0)
        sig_b = self.model.effective_tau_sigma(-1.0)
        assert abs(sig_a - sig_b) > 0.1
        post_a = self.model.oracle_posterior(None, np.array([5.0, 0.3, -4.0]))
        post_b = self.model.oracle_posterior(None, np.array([5.0, 0.3, -1.0]))
        assert post_b.std[2] > post_a.std[2] * 1.3

    def test_modes_declared_approximate(self):
        assert self.model.gnpe_modes == ("approximate",)


class TestMultichannel:
    model = MultichannelModel()

    def test_zero_delta_equal_amplitude_channels(self):
        theta = np.array([5.0, 0.3, -2.0, 0.0])
        x = self.model.solution(theta)
        assert np.array_equal(x[0], x[1])

    def test_absolute_shift_moves_both_channels(self):
        theta = np.array([5.0, 0.3, -2.5, 0.004])
        x = self.model.solution(theta)
        shift = 0.6
        moved = act_on_data(GroupElement((shift, 0.0)), x, self.model.data_rep)
        direct = self.model.solution(theta + [0.0, 0.0, shift, 0.0])
        assert np.max(np.abs(moved - direct)) < 1e-5

    def test_relative_shift_amplitude_change_small(self):
        # a one-sigma (1 ms) relative shift changes channel-2 amplitude by <= 2%
        for delta in np.linspace(-0.001, 0.001, 9):
            ratio = self.model.channel2_amplitude(delta) / self.model.channel2_amplitude(0.0)
            assert abs(ratio - 1.0) <= 0.02 + 1e-12

    def test_oracle_shifts_only_tau_under_absolute(self):
        rng = np.random.default_rng(5)
        theta = self.model.sample_prior_interior(rng)
        x, center = self.model.simulate(theta, rng)
        post = self.model.oracle_posterior(x, center)
        shifted_center = center + np.array([0.0, 0.0, 0.3, 0.0])
        post2 = self.model.oracle_posterior(None, shifted_center)
        assert np.allclose(post2.mean - post.mean, [0.0, 0.0, 0.3, 0.0])
        assert np.allclose(post2.variance, post.variance)


class TestDatasetIO:
    def test_roundtrip_and_hash_stability(self, tmp_path):
        model = OscillatorModel()
        ds1 = simulate_dataset(model, 20, seed=7)
        ds2 = simulate_dataset(model, 20, seed=7)
        assert dataset_content_hash(ds1) == dataset_content_hash(ds2)
        path = tmp_path / "sims.gnpe-ds"
        save_dataset(ds1, path)
        loaded = load_dataset(path)
        assert np.array_equal(loaded.xs, ds1.xs)
        assert np.array_equal(loaded.thetas, ds1.thetas)
        assert loaded.param_names == ds1.param_names
        save_dataset(loaded, tmp_path / "again.gnpe-ds")
        assert (tmp_path / "sims.gnpe-ds").read_bytes() == (tmp_path / "again.gnpe-ds").read_bytes()

    def test_different_seed_different_hash(self):
        model = GaussianToyModel()
        a = simulate_dataset(model, 50, seed=1)
        b = simulate_dataset(model, 50, seed=2)
        assert dataset_content_hash(a) != dataset_content_hash(b)

    def test_workers_do_not_change_content(self):
        model = GaussianToyModel()
        a = simulate_dataset(model, 30, seed=3, workers=1)
        b = simulate_dataset(model, 30, seed=3, workers=3)
        assert dataset_content_hash(a) == dataset_content_hash(b)

    def test_csv_export(self, tmp_path):
        model = GaussianToyModel()
        ds = simulate_dataset(model, 5, seed=0)
        out = tmp_path / "preview.csv"
        dataset_to_csv(ds, out, max_rows=3)
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 4  # header + 3 rows
        assert lines[0].startswith("index,theta_tau,center_tau,x_0")

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.gnpe-ds"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(DataError):
            load_dataset(path)
