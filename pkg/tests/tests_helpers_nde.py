"""Shared helpers for building untrained estimators in sampler/acceptance tests."""

import numpy as np

from gnpe.nde import ConditionalGaussianEstimator


def random_weight_estimator(model, hidden=(16, 8), seed=0, proxy_dim=0):
    """Randomly initialized (untrained) estimator wired for a model's shapes.

    Useful where the algorithmic property under test must hold regardless of
    estimator quality (equivariance by construction).
    """
    est = ConditionalGaussianEstimator(embedding="mlp", hidden_sizes=hidden, seed=seed)
    est._build(model.context_shape, model.param_dim, proxy_dim, np.random.default_rng(seed))
    est.x_mean_ = np.zeros(est.context_dim_)
    est.x_scale_ = np.ones(est.context_dim_)
    est.y_mean_ = np.zeros(model.param_dim)
    est.y_scale_ = np.ones(model.param_dim)
    if proxy_dim:
        est.p_mean_ = np.zeros(proxy_dim)
        est.p_scale_ = np.ones(proxy_dim)
    est.meta_ = {}
    return est
