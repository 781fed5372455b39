import numpy as np
import pytest

from gnpe import StructuralError, delta_kernel, gaussian_kernel
from gnpe.models import GaussianToyModel, OscillatorApproxModel, OscillatorModel, simulate_dataset
from gnpe.models.oscillator import GRID, oscillator_solution
from gnpe.nde import (
    ConditionalGaussianEstimator,
    generate_npe_dataset,
    gnpe_dataset_from_sims,
    gnpe_transform_example,
    load_checkpoint,
    npe_dataset_from_sims,
    save_checkpoint,
)
from gnpe.nde.layers import Conv1dCircular, ReLU

LOG_2PI = np.log(2 * np.pi)


def manual_estimator(context_dim=1, param_dim=1, proxy_dim=0, embedding="identity", seed=0, **kw):
    """Built estimator with identity standardization, no training."""
    est = ConditionalGaussianEstimator(embedding=embedding, seed=seed, **kw)
    est._build((context_dim,) if isinstance(context_dim, int) else context_dim,
               param_dim, proxy_dim, np.random.default_rng(seed))
    est.x_mean_ = np.zeros(est.context_dim_)
    est.x_scale_ = np.ones(est.context_dim_)
    est.y_mean_ = np.zeros(param_dim)
    est.y_scale_ = np.ones(param_dim)
    if proxy_dim:
        est.p_mean_ = np.zeros(proxy_dim)
        est.p_scale_ = np.ones(proxy_dim)
    est.meta_ = {}
    return est


class TestForward:
    def test_zero_weights_give_zero_outputs(self):
        est = manual_estimator(context_dim=3, param_dim=2, embedding="identity")
        est.set_weights({k: np.zeros_like(v) for k, v in est.get_weights().items()})
        means, logstd = est.forward(np.random.default_rng(0).standard_normal((4, 3)))
        assert np.array_equal(means, np.zeros((4, 2)))
        assert np.array_equal(logstd, np.zeros((4, 2)))

    def test_output_shape_is_param_dim(self):
        est = manual_estimator(context_dim=5, param_dim=3, embedding="mlp", hidden_sizes=(8, 4))
        means, logstd = est.forward(np.zeros((7, 5)))
        assert means.shape == (7, 3)
        assert logstd.shape == (7, 3)

    def test_deterministic_given_weights(self):
        est = manual_estimator(context_dim=4, param_dim=2, embedding="mlp", hidden_sizes=(6,))
        X = np.random.default_rng(1).standard_normal((5, 4))
        a = est.forward(X)
        b = est.forward(X)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_logstd_clamp_respected(self):
        est = manual_estimator(context_dim=1, param_dim=1, logstd_min=-2.0, logstd_max=1.5)
        w = est.get_weights()
        w["head.b"] = np.array([0.0, 100.0])
        est.set_weights(w)
        _, logstd = est.forward(np.zeros((1, 1)))
        assert logstd[0, 0] == 1.5


class TestNllLoss:
    def test_matched_mean_unit_std_value(self):
        est = manual_estimator(context_dim=1, param_dim=1)
        est.set_weights({k: np.zeros_like(v) for k, v in est.get_weights().items()})
        loss = est.nll(np.zeros((1, 1)), np.zeros((1, 1)))
        assert loss == pytest.approx(0.5 * LOG_2PI, abs=1e-12)
        assert loss == pytest.approx(0.9189385, abs=1e-6)

    def test_loss_decreases_as_mean_approaches_target(self):
        est = manual_estimator(context_dim=1, param_dim=1)
        losses = []
        for bias in [2.0, 1.0, 0.5, 0.0]:
            w = {k: np.zeros_like(v) for k, v in est.get_weights().items()}
            w["head.b"] = np.array([bias, 0.0])
            est.set_weights(w)
            losses.append(est.nll(np.zeros((1, 1)), np.zeros((1, 1))))
        assert losses == sorted(losses, reverse=True)

    def test_analytic_minimizer_recovered(self):
        # for y ~ N(mu*, sigma*^2) ignoring context, optimal head is (mu*, log sigma*)
        rng = np.random.default_rng(7)
        mu_star, sigma_star = 1.3, 0.6
        y = rng.normal(mu_star, sigma_star, size=(4000, 1))
        X = np.zeros((4000, 1))
        est = ConditionalGaussianEstimator(
            embedding="identity", max_epochs=200, patience=15, batch_size=256, seed=3
        )
        est.fit(X, y)
        mean, std = est.predict_moments(np.zeros((1, 1)))
        assert mean[0, 0] == pytest.approx(mu_star, abs=0.05)
        assert std[0, 0] == pytest.approx(sigma_star, rel=0.08)

    def test_standardization_logdet_in_loss(self):
        # raw-space loss includes sum(log y_scale); compare two scalings
        rng = np.random.default_rng(8)
        X = rng.standard_normal((500, 1))
        y = rng.standard_normal((500, 1))
        est = ConditionalGaussianEstimator(embedding="identity", max_epochs=5, seed=0)
        est.fit(X, y)
        base = est.nll(X, y)
        est2 = ConditionalGaussianEstimator(embedding="identity", max_epochs=5, seed=0)
        est2.fit(X, 10.0 * y)
        scaled = est2.nll(X, 10.0 * y)
        assert scaled - base == pytest.approx(np.log(10.0), abs=0.2)


def _gradcheck(est, X, y, proxies=None, step=1e-5, rel_tol=1e-4):
    loss0, grads = est.loss_and_gradients(X, y, proxies)
    assert np.isfinite(loss0)
    n_checked = 0
    for owner in est._owners():
        for key, w in owner.param_items():
            g = grads[key]
            assert g.shape == w.shape
            for idx in np.ndindex(*w.shape):
                orig = w[idx]
                w[idx] = orig + step
                lp = est.loss_and_gradients(X, y, proxies)[0]
                w[idx] = orig - step
                lm = est.loss_and_gradients(X, y, proxies)[0]
                w[idx] = orig
                num = (lp - lm) / (2 * step)
                denom = max(abs(num), abs(g[idx]), 1e-6)
                assert abs(num - g[idx]) / denom < rel_tol, (
                    f"{key}{idx}: numeric {num}, analytic {g[idx]}"
                )
                n_checked += 1
    return n_checked


class TestGradients:
    def test_identity_head_gradcheck(self):
        rng = np.random.default_rng(0)
        est = manual_estimator(context_dim=3, param_dim=2, seed=1)
        n = _gradcheck(est, rng.standard_normal((8, 3)), rng.standard_normal((8, 2)))
        assert n == 3 * 4 + 4  # W and b of the head

    def test_mlp_gradcheck(self):
        rng = np.random.default_rng(1)
        est = manual_estimator(context_dim=6, param_dim=2, embedding="mlp", hidden_sizes=(5, 4), seed=2)
        n = _gradcheck(est, rng.standard_normal((8, 6)), rng.standard_normal((8, 2)))
        assert n <= 200

    def test_conv_gradcheck_with_proxy(self):
        rng = np.random.default_rng(2)
        est = manual_estimator(
            context_dim=(12,),
            param_dim=1,
            proxy_dim=2,
            embedding="conv",
            conv_channels=(2, 3),
            conv_kernel_sizes=(5, 5),
            pool_size=3,
            pool_stride=3,
            seed=3,
        )
        n = _gradcheck(
            est,
            rng.standard_normal((6, 12)),
            rng.standard_normal((6, 1)),
            proxies=rng.standard_normal((6, 2)),
        )
        assert n <= 200

    def test_zero_gradient_at_interpolating_optimum(self):
        # 1-point batch, mean == target, matched (unit) std: gradient of the
        # mean head vanishes; logstd gradient is zero when resid^2 == 1
        est = manual_estimator(context_dim=1, param_dim=1)
        est.set_weights({k: np.zeros_like(v) for k, v in est.get_weights().items()})
        _, grads = est.loss_and_gradients(np.zeros((1, 1)), np.zeros((1, 1)))
        assert grads["head.b"][0] == 0.0  # mean component

    def test_duplicated_batch_same_gradient(self):
        rng = np.random.default_rng(3)
        est = manual_estimator(context_dim=4, param_dim=2, embedding="mlp", hidden_sizes=(5,), seed=4)
        X = rng.standard_normal((6, 4))
        y = rng.standard_normal((6, 2))
        _, g1 = est.loss_and_gradients(X, y)
        _, g2 = est.loss_and_gradients(np.vstack([X, X]), np.vstack([y, y]))
        for k in g1:
            assert np.allclose(g1[k], g2[k], rtol=1e-12, atol=1e-12)


class TestConvTranslation:
    def test_pre_pool_feature_maps_shift_with_input(self):
        rng = np.random.default_rng(4)
        layers = [
            Conv1dCircular("c0", 1, 3, 5, rng),
            ReLU(),
            Conv1dCircular("c1", 3, 4, 5, rng),
            ReLU(),
            Conv1dCircular("c2", 4, 4, 5, rng),
            ReLU(),
        ]
        x = rng.standard_normal((2, 1, 64))

        def run(v):
            h = v
            for layer in layers:
                h, _ = layer.forward(h)
            return h

        base = run(x)
        rolled = run(np.roll(x, 1, axis=-1))
        assert np.array_equal(rolled, np.roll(base, 1, axis=-1))


class TestTraining:
    def test_gaussian_toy_posterior_slope(self):
        model = GaussianToyModel()
        ds = generate_npe_dataset(model, 20_000, seed=5)
        est = ConditionalGaussianEstimator(
            embedding="identity", batch_size=512, max_epochs=150, patience=10, seed=6
        )
        est.fit(ds.contexts, ds.targets, val_mask=ds.val_mask)
        xs = np.linspace(-8.0, -2.0, 13).reshape(-1, 1)
        means = est.predict(xs)[:, 0]
        slope = np.polyfit(xs[:, 0], means, 1)[0]
        assert slope == pytest.approx(0.5, abs=0.03)

    def test_early_stopping_contract(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((2000, 2))
        y = (X[:, :1] * 0.5) + 0.1 * rng.standard_normal((2000, 1))
        est = ConditionalGaussianEstimator(
            embedding="mlp", hidden_sizes=(8,), max_epochs=40, patience=5, seed=7
        )
        est.fit(X, y)
        vals = est.history_["val_loss"]
        best = est.best_epoch_
        assert vals[best - 1] <= min(vals[: best - 1], default=np.inf) + 1e-15
        assert vals[best - 1] == min(vals)

    def test_fixed_seed_identical_weights(self):
        rng = np.random.default_rng(10)
        X = rng.standard_normal((400, 3))
        y = rng.standard_normal((400, 1))
        a = ConditionalGaussianEstimator(embedding="mlp", hidden_sizes=(6,), max_epochs=10, seed=11)
        b = ConditionalGaussianEstimator(embedding="mlp", hidden_sizes=(6,), max_epochs=10, seed=11)
        a.fit(X, y)
        b.fit(X, y)
        for k, w in a.get_weights().items():
            assert np.array_equal(w, b.get_weights()[k])

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises_naming_epoch(self):
        from gnpe import TrainingError

        rng = np.random.default_rng(12)
        X = rng.standard_normal((300, 2))
        y = rng.standard_normal((300, 1))
        # Adam normalizes step sizes, so the rate must overflow the forward pass
        est = ConditionalGaussianEstimator(
            embedding="mlp", hidden_sizes=(8,), learning_rate=1e200, max_epochs=20, seed=13,
            logstd_min=-1e6, logstd_max=1e6,
        )
        with pytest.raises(TrainingError, match="epoch"):
            est.fit(X, y)

    def test_sampling_statistics_and_reproducibility(self):
        est = manual_estimator(context_dim=1, param_dim=2)
        w = {k: np.zeros_like(v) for k, v in est.get_weights().items()}
        w["head.b"] = np.array([1.0, -2.0, np.log(0.5), np.log(2.0)])
        est.set_weights(w)
        s1 = est.sample(np.zeros(1), 100_000, np.random.default_rng(0))
        s2 = est.sample(np.zeros(1), 100_000, np.random.default_rng(0))
        assert np.array_equal(s1, s2)
        assert s1[:, 0].mean() == pytest.approx(1.0, abs=4 * 0.5 / np.sqrt(100_000))
        assert s1[:, 1].mean() == pytest.approx(-2.0, abs=4 * 2.0 / np.sqrt(100_000))
        assert s1[:, 0].std() == pytest.approx(0.5, rel=0.02)

    def test_sample_batch_matches_per_chain_sample(self):
        est = manual_estimator(context_dim=2, param_dim=1, embedding="mlp", hidden_sizes=(4,), seed=14)
        contexts = np.random.default_rng(1).standard_normal((5, 2))
        from gnpe.validation import spawn_rngs

        batch = est.sample_batch(contexts, spawn_rngs(99, 5))
        singles = np.vstack(
            [est.sample(contexts[i], 1, spawn_rngs(99, 5)[i]) for i in range(5)]
        )
        assert np.allclose(batch, singles, atol=1e-12)


class TestDatasets:
    def test_split_arithmetic(self):
        model = GaussianToyModel()
        ds = generate_npe_dataset(model, 100, seed=1, validation_fraction=0.02)
        assert ds.n_train == 98
        assert ds.n_val == 2

    def test_targets_within_prior_support(self):
        model = OscillatorModel()
        sims = simulate_dataset(model, 50, seed=2)
        ds = npe_dataset_from_sims(sims, model, seed=3)
        assert np.all(ds.targets >= model.prior_lows)
        assert np.all(ds.targets <= model.prior_highs)

    def test_same_seed_identical_hash(self):
        model = GaussianToyModel()
        a = generate_npe_dataset(model, 64, seed=4)
        b = generate_npe_dataset(model, 64, seed=4)
        assert a.content_hash() == b.content_hash()

    def test_no_example_in_both_splits(self):
        model = GaussianToyModel()
        ds = generate_npe_dataset(model, 50, seed=5)
        assert ds.n_train + ds.n_val == 50


class TestGnpeTransform:
    def test_oscillator_exact_mode_construction(self):
        model = OscillatorModel()
        theta = np.array([5.0, 0.3, -2.0])
        x = oscillator_solution(*theta)
        rng = np.random.default_rng(6)
        kernel = gaussian_kernel(0.1)
        eps = rng.normal(0.0, 0.1)  # replay the kernel draw
        target, context, feats = gnpe_transform_example(
            theta, x, kernel, ("exact",), np.random.default_rng(6), model
        )
        assert feats is None
        assert target[0] == theta[0] and target[1] == theta[1]
        assert target[2] == pytest.approx(-eps, abs=1e-12)
        aligned = oscillator_solution(theta[0], theta[1], -eps)
        assert np.max(np.abs(context - aligned)) < 5e-4

    def test_delta_kernel_perfect_alignment(self):
        model = OscillatorModel()
        theta = np.array([6.0, 0.4, -3.0])
        x = oscillator_solution(*theta)
        target, context, _ = gnpe_transform_example(
            theta, x, delta_kernel(), ("exact",), np.random.default_rng(0), model
        )
        assert target[2] == 0.0
        aligned = oscillator_solution(theta[0], theta[1], 0.0)
        assert np.max(np.abs(context - aligned)) < 5e-5

    def test_gaussian_toy_transform(self):
        model = GaussianToyModel()
        tau, x = -4.0, -3.5
        rng = np.random.default_rng(21)
        eps = rng.normal(0.0, 1.0)
        tau_hat = tau + eps
        target, context, _ = gnpe_transform_example(
            np.array([tau]), np.array([x]), gaussian_kernel(1.0), ("exact",),
            np.random.default_rng(21), model,
        )
        assert target[0] == pytest.approx(tau - tau_hat)
        assert context[0] == pytest.approx(x - 2 * tau_hat)

    def test_approximate_mode_keeps_target_and_exposes_proxy(self):
        model = OscillatorApproxModel()
        theta = np.array([5.0, 0.3, -2.0])
        x = oscillator_solution(*theta)
        target, context, feats = gnpe_transform_example(
            theta, x, gaussian_kernel(0.1), ("approximate",), np.random.default_rng(1), model
        )
        assert np.array_equal(target, theta)
        assert feats.shape == (1,)

    def test_mode_mismatch_rejected(self):
        model = OscillatorModel()
        with pytest.raises(StructuralError):
            gnpe_transform_example(
                np.zeros(3), np.zeros(GRID.n_bins), gaussian_kernel(0.1),
                ("exact", "exact"), np.random.default_rng(0), model,
            )

    def test_gnpe_dataset_modes_from_model(self):
        model = OscillatorApproxModel()
        sims = simulate_dataset(model, 12, seed=1)
        ds = gnpe_dataset_from_sims(sims, model, gaussian_kernel(0.1), seed=2)
        assert ds.proxies is not None
        assert ds.meta["modes"] == ["approximate"]


class TestCheckpoint:
    def test_roundtrip_identical_outputs_and_bytes(self, tmp_path):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((300, 4))
        y = rng.standard_normal((300, 2))
        est = ConditionalGaussianEstimator(embedding="mlp", hidden_sizes=(6, 5), max_epochs=8, seed=16)
        est.fit(X, y, meta={"kind": "npe", "model": "test"})
        p1 = tmp_path / "a.ckpt"
        save_checkpoint(est, p1)
        loaded = load_checkpoint(p1)
        q = rng.standard_normal((5, 4))
        m1, s1 = est.forward(q)
        m2, s2 = loaded.forward(q)
        assert np.array_equal(m1, m2) and np.array_equal(s1, s2)
        assert loaded.meta_["kind"] == "npe"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_unfitted_estimator_rejected(self, tmp_path):
        from sklearn.exceptions import NotFittedError

        est = ConditionalGaussianEstimator()
        with pytest.raises(NotFittedError):
            save_checkpoint(est, tmp_path / "x.ckpt")

    def test_get_params_round_trip(self):
        est = ConditionalGaussianEstimator(hidden_sizes=(9, 3), learning_rate=2e-3)
        params = est.get_params()
        clone = ConditionalGaussianEstimator(**params)
        assert clone.get_params() == params
