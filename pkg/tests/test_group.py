import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnpe import (
    Affine1d,
    CyclicTimeShift,
    FrequencyPhaseShift,
    Grid,
    GroupElement,
    StructuralError,
    act_on_data,
    act_on_data_batch,
    act_on_params,
    compose,
    delta_kernel,
    gaussian_kernel,
    identity,
    inverse,
    kernel_density,
    make_proxy,
    pose_of,
    sample_kernel,
    uniform_kernel,
)

GRID = Grid(n_bins=200, duration=10.0, t_start=-5.0)

finite_shifts = st.floats(min_value=-100.0, max_value=100.0, allow_nan=False)


def elements(n_factors):
    return st.lists(finite_shifts, min_size=n_factors, max_size=n_factors).map(
        lambda s: GroupElement(tuple(s))
    )


class TestGroupAxioms:
    @given(st.integers(1, 3).flatmap(lambda n: elements(n)))
    def test_identity_and_inverse_exact(self, g):
        e = identity(g.n_factors)
        assert compose(g, e) == g
        assert compose(e, g) == g
        assert compose(g, inverse(g)).shifts == e.shifts

    @given(st.integers(1, 3).flatmap(lambda n: st.tuples(elements(n), elements(n), elements(n))))
    def test_associativity(self, ghk):
        g, h, k = ghk
        left = compose(compose(g, h), k)
        right = compose(g, compose(h, k))
        for a, b in zip(left.shifts, right.shifts):
            assert math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)

    def test_associativity_exact_on_integers(self):
        g, h, k = GroupElement((1.0, -3.0)), GroupElement((7.0, 2.0)), GroupElement((-4.0, 9.0))
        assert compose(compose(g, h), k) == compose(g, compose(h, k))

    def test_compose_examples(self):
        assert compose(GroupElement((1.0,)), GroupElement((-1.0,))).shifts == (0.0,)
        assert compose(GroupElement((0.3,)), GroupElement((0.2,))).shifts[0] == pytest.approx(0.5)
        assert compose(GroupElement((1.0, 2.0)), GroupElement((3.0, -2.0))).shifts == (4.0, 0.0)

    def test_factor_mismatch(self):
        with pytest.raises(StructuralError):
            compose(GroupElement((1.0,)), GroupElement((1.0, 2.0)))


class TestParamAction:
    def test_translation_on_one_slot(self):
        theta, logdet = act_on_params(GroupElement((1.0,)), [5.0, 0.3, -2.0], (2,))
        assert np.allclose(theta, [5.0, 0.3, -1.0])
        assert logdet.value == 0.0

    def test_identity_leaves_theta(self):
        theta, _ = act_on_params(GroupElement((0.0,)), [5.0, 0.3, -2.0], (2,))
        assert np.array_equal(theta, [5.0, 0.3, -2.0])

    def test_shift_by_two(self):
        theta, _ = act_on_params(GroupElement((2.0,)), [-5.0], (0,))
        assert theta[0] == -3.0

    def test_out_of_range_slot(self):
        with pytest.raises(StructuralError):
            act_on_params(GroupElement((1.0,)), [1.0, 2.0], (5,))

    def test_pose_extraction(self):
        g = pose_of([5.0, 0.3, -2.0], (2,))
        assert g.shifts == (-2.0,)


class TestCyclicTimeShift:
    rep = CyclicTimeShift(GRID)

    def _signal(self, seed=0):
        return np.random.default_rng(seed).standard_normal(GRID.n_bins)

    def _band_limited(self, seed=0):
        # fractional shifts act as an exact group only off the Nyquist mode
        spec = np.fft.rfft(self._signal(seed))
        spec[-1] = 0.0
        return np.fft.irfft(spec, n=GRID.n_bins)

    def test_identity_bit_identical(self):
        x = self._signal()
        out = act_on_data(identity(), x, self.rep)
        assert np.array_equal(out, x)

    def test_one_bin_shift_matches_roll(self):
        x = self._signal(1)
        out = act_on_data(GroupElement((GRID.dt,)), x, self.rep)
        assert np.max(np.abs(out - np.roll(x, 1))) < 1e-9

    def test_delta_spike_moves_one_bin(self):
        x = np.zeros(GRID.n_bins)
        x[40] = 1.0
        out = act_on_data(GroupElement((GRID.dt,)), x, self.rep)
        assert out[41] == pytest.approx(1.0, abs=1e-9)
        mask = np.ones(GRID.n_bins, dtype=bool)
        mask[41] = False
        assert np.max(np.abs(out[mask])) < 1e-9

    @given(st.floats(-20.0, 20.0), st.floats(-20.0, 20.0))
    @settings(max_examples=30)
    def test_homomorphism(self, a, b):
        x = self._band_limited(2)
        g, h = GroupElement((a,)), GroupElement((b,))
        lhs = act_on_data(compose(g, h), x, self.rep)
        rhs = act_on_data(g, act_on_data(h, x, self.rep), self.rep)
        assert np.max(np.abs(lhs - rhs)) < 1e-9 * max(1.0, np.max(np.abs(x)))

    @given(st.floats(-20.0, 20.0))
    @settings(max_examples=30)
    def test_round_trip(self, a):
        x = self._band_limited(3)
        g = GroupElement((a,))
        back = act_on_data(g, act_on_data(inverse(g), x, self.rep), self.rep)
        assert np.max(np.abs(back - x)) < 1e-9

    def test_batch_matches_single(self):
        x = self._signal(4)
        shifts = np.array([[0.7], [-1.3], [0.0]])
        batch = act_on_data_batch(shifts, x, self.rep)
        for row, s in zip(batch, shifts):
            single = act_on_data(GroupElement((s[0],)), x, self.rep)
            assert np.max(np.abs(row - single)) < 1e-12

    def test_multichannel_factor_map(self):
        rep = CyclicTimeShift(GRID, factor_map=((1.0, 0.0), (1.0, 1.0)))
        x = np.stack([self._signal(5), self._signal(6)])
        out = act_on_data(GroupElement((GRID.dt, GRID.dt)), x, rep)
        assert np.max(np.abs(out[0] - np.roll(x[0], 1))) < 1e-9
        assert np.max(np.abs(out[1] - np.roll(x[1], 2))) < 1e-9

    def test_non_finite_rejected(self):
        x = self._signal()
        x[3] = np.nan
        from gnpe import DataError

        with pytest.raises(DataError):
            act_on_data(GroupElement((1.0,)), x, self.rep)


class TestFrequencyPhaseShift:
    rep = FrequencyPhaseShift(GRID)

    def test_matches_cyclic_action(self):
        x = np.random.default_rng(7).standard_normal(GRID.n_bins)
        g = GroupElement((0.42,))
        via_freq = np.fft.irfft(act_on_data(g, np.fft.rfft(x), self.rep), n=GRID.n_bins)
        via_time = act_on_data(g, x, CyclicTimeShift(GRID))
        assert np.max(np.abs(via_freq - via_time)) < 1e-12

    def test_identity_exact(self):
        x = np.fft.rfft(np.random.default_rng(8).standard_normal(GRID.n_bins))
        assert np.array_equal(act_on_data(identity(), x, self.rep), x)

    def test_round_trip(self):
        x = np.fft.rfft(np.random.default_rng(9).standard_normal(GRID.n_bins))
        g = GroupElement((1.234,))
        back = act_on_data(g, act_on_data(inverse(g), x, self.rep), self.rep)
        assert np.max(np.abs(back - x)) < 1e-9 * np.max(np.abs(x))


class TestAffine1d:
    def test_scale_two_shift(self):
        # posterior-level representation of the scalar worked example
        out = act_on_data(GroupElement((1.0,)), np.array([3.0]), Affine1d(scale=2.0))
        assert out[0] == 5.0

    def test_scale_one(self):
        out = act_on_data(GroupElement((0.5,)), np.array([3.0]), Affine1d(scale=1.0))
        assert out[0] == 3.5

    def test_identity_exact(self):
        x = np.array([1.234])
        assert np.array_equal(act_on_data(identity(), x, Affine1d(scale=2.0)), x)

    def test_single_factor_only(self):
        with pytest.raises(StructuralError):
            act_on_data(GroupElement((1.0, 2.0)), np.array([3.0]), Affine1d(scale=2.0))


class TestKernels:
    def test_delta_always_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            assert sample_kernel(delta_kernel(2), rng).shifts == (0.0, 0.0)

    def test_gaussian_sample_std(self):
        rng = np.random.default_rng(123)
        draws = np.array([sample_kernel(gaussian_kernel(0.1), rng).shifts[0] for _ in range(100_000)])
        assert 0.097 <= draws.std() <= 0.103
        assert abs(draws.mean()) <= 3 * 0.1 / np.sqrt(100_000)

    def test_uniform_bounds(self):
        rng = np.random.default_rng(5)
        draws = np.array([sample_kernel(uniform_kernel(0.003), rng).shifts[0] for _ in range(10_000)])
        assert np.all(np.abs(draws) <= 0.003)
        assert abs(draws.mean()) <= 3 * (0.003 / np.sqrt(3)) / np.sqrt(10_000)

    @given(st.floats(-5, 5))
    def test_density_symmetry(self, s):
        for kern in (gaussian_kernel(0.7), uniform_kernel(2.0)):
            eps = GroupElement((s,))
            assert kernel_density(kern, eps) == kernel_density(kern, inverse(eps))

    @pytest.mark.parametrize(
        "kern,half_range",
        [(gaussian_kernel(0.5), 5.0), (uniform_kernel(1.5), 2.0), (gaussian_kernel(0.1), 1.0)],
    )
    def test_density_integrates_to_one(self, kern, half_range):
        grid = np.linspace(-half_range, half_range, 200_001)
        dens = np.array([kernel_density(kern, GroupElement((v,))) for v in grid])
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-4)

    def test_two_factor_density_is_product(self):
        kern = gaussian_kernel(0.5, 2.0)
        eps = GroupElement((0.3, -1.0))
        expected = kernel_density(gaussian_kernel(0.5), GroupElement((0.3,))) * kernel_density(
            gaussian_kernel(2.0), GroupElement((-1.0,))
        )
        assert kernel_density(kern, eps) == pytest.approx(expected, rel=1e-12)

    def test_delta_density(self):
        assert kernel_density(delta_kernel(), identity()) == math.inf
        assert kernel_density(delta_kernel(), GroupElement((0.1,))) == 0.0

    def test_make_proxy_delta_returns_pose(self):
        rng = np.random.default_rng(0)
        pose = GroupElement((-2.0,))
        assert make_proxy(pose, delta_kernel(), rng) == pose

    def test_make_proxy_additive(self):
        class _Fixed:
            def normal(self, loc, scale):
                return 0.05

        proxy = make_proxy(GroupElement((-2.0,)), gaussian_kernel(1.0), _Fixed())
        assert proxy.shifts[0] == pytest.approx(-1.95)

    def test_proxy_of_zero_pose_is_kernel_draw(self):
        # blurring a zero pose with a unit kernel reproduces the kernel law
        from scipy import stats

        rng = np.random.default_rng(77)
        draws = np.array(
            [make_proxy(GroupElement((0.0,)), gaussian_kernel(1.0), rng).shifts[0] for _ in range(20_000)]
        )
        assert stats.kstest(draws, "norm").pvalue > 0.01
