"""Trainable conditional density estimator with a diagonal Gaussian head.

``ConditionalGaussianEstimator`` follows the sklearn estimator idiom
(constructor hyperparameters, ``fit``, ``get_params``, trailing-underscore
fitted attributes) around a hand-rolled numpy network: an embedding (none,
MLP, or a 1-D circular conv stack) feeding an affine head that outputs a
mean and a log-std per parameter dimension, trained by maximum likelihood
with Adam and validation-based early stopping.

Targets and contexts are standardized by affine maps fit on the training
split only; the reported loss includes the log-determinant of the target
standardization so losses are comparable across runs. Proxy features (used
when conditioning on a pose proxy) are appended to the embedded feature
vector, not to the raw data.
"""

from __future__ import annotations

import copy
import csv
import json

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .. import _binio
from ..exceptions import StructuralError, TrainingError
from ..validation import as_float_array, require_finite
from .layers import AvgPool1d, Conv1dCircular, Dense, ReLU

LOG_2PI = float(np.log(2.0 * np.pi))
CHECKPOINT_MAGIC = b"GNPE-CK\x00"
_SCALE_FLOOR = 1e-12


def _safe_scale(std: np.ndarray) -> np.ndarray:
    # bins that never vary (e.g. pre-excitation zeros in aligned data) get scale 1
    out = std.copy()
    out[out < _SCALE_FLOOR] = 1.0
    return out


class ConditionalGaussianEstimator(BaseEstimator):
    """Diagonal-Gaussian conditional density estimator q(theta | context).

    Parameters
    ----------
    embedding : {"identity", "mlp", "conv"}
        Context embedding. "mlp" uses ``hidden_sizes`` with ReLU; "conv" is a
        circular conv stack (``conv_channels`` / ``conv_kernel_sizes``,
        stride 1) followed by one average pooling, then flattened.
    hidden_sizes : tuple of int
        MLP widths, default (128, 32, 16).
    logstd_min, logstd_max : float
        Hard clamp on the log-std head, guarding against early-training
        variance collapse on standardized targets.
    standardize_context : {"per-bin", "global"}
        Per-bin affine standardization (default) or a single global
        mean/scale pair shared by all bins.
    seed : int
        Controls weight init, the train/validation split (when not supplied)
        and batch shuffling; a fixed seed gives identical final weights.
    """

    def __init__(
        self,
        embedding: str = "mlp",
        hidden_sizes=(128, 32, 16),
        conv_channels=(6, 12, 12),
        conv_kernel_sizes=(5, 5, 5),
        pool_size: int = 7,
        pool_stride: int = 7,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        adam_eps: float = 1e-8,
        batch_size: int = 128,
        patience: int = 20,
        max_epochs: int = 300,
        validation_fraction: float = 0.02,
        logstd_min: float = -7.0,
        logstd_max: float = 5.0,
        standardize_context: str = "per-bin",
        seed: int = 0,
    ):
        self.embedding = embedding
        self.hidden_sizes = hidden_sizes
        self.conv_channels = conv_channels
        self.conv_kernel_sizes = conv_kernel_sizes
        self.pool_size = pool_size
        self.pool_stride = pool_stride
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.adam_eps = adam_eps
        self.batch_size = batch_size
        self.patience = patience
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.logstd_min = logstd_min
        self.logstd_max = logstd_max
        self.standardize_context = standardize_context
        self.seed = seed

    # ------------------------------------------------------------------ build

    def _build(self, context_shape, param_dim, proxy_dim, rng):
        self.context_shape_ = tuple(int(s) for s in context_shape)
        self.context_dim_ = int(np.prod(self.context_shape_))
        self.param_dim_ = int(param_dim)
        self.proxy_dim_ = int(proxy_dim)
        layers = []
        if self.embedding == "identity":
            embed_dim = self.context_dim_
        elif self.embedding == "mlp":
            n_in = self.context_dim_
            for i, width in enumerate(self.hidden_sizes):
                layers.append(Dense(f"dense{i}", n_in, int(width), rng))
                layers.append(ReLU())
                n_in = int(width)
            embed_dim = n_in
        elif self.embedding == "conv":
            if len(self.context_shape_) == 1:
                c_in, t = 1, self.context_shape_[0]
            elif len(self.context_shape_) == 2:
                c_in, t = self.context_shape_
            else:
                raise StructuralError(
                    f"conv embedding needs (T,) or (C, T) contexts, got {self.context_shape_}"
                )
            self._conv_in_shape_ = (c_in, t)
            for i, (c_out, k) in enumerate(zip(self.conv_channels, self.conv_kernel_sizes)):
                layers.append(Conv1dCircular(f"conv{i}", c_in, int(c_out), int(k), rng))
                layers.append(ReLU())
                c_in = int(c_out)
            layers.append(AvgPool1d(self.pool_size, self.pool_stride))
            embed_dim = c_in * (t // self.pool_size)
        else:
            raise StructuralError(f"unknown embedding {self.embedding!r}")
        self.layers_ = layers
        self.embed_dim_ = embed_dim
        self.head_ = Dense("head", embed_dim + self.proxy_dim_, 2 * self.param_dim_, rng)

    def _check_fitted(self):
        if not hasattr(self, "head_"):
            raise NotFittedError("estimator is not fitted; call fit() or load a checkpoint")

    # ------------------------------------------------------ weight bookkeeping

    def _owners(self):
        return [ly for ly in self.layers_ if ly.param_items()] + [self.head_]

    def get_weights(self) -> dict[str, np.ndarray]:
        self._check_fitted()
        return {k: v for owner in self._owners() for k, v in owner.param_items()}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        self._check_fitted()
        for owner in self._owners():
            for key, current in owner.param_items():
                new = np.asarray(weights[key], dtype=np.float64)
                if new.shape != current.shape:
                    raise StructuralError(f"weight {key} has shape {new.shape}, expected {current.shape}")
                owner.set_param(key, new.copy())

    # ------------------------------------------------------------- data prep

    def _flatten_context(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim > 2:
            X = X.reshape(X.shape[0], -1)
        if X.shape[1] != self.context_dim_:
            raise StructuralError(
                f"context has {X.shape[1]} features, estimator expects {self.context_dim_}"
            )
        require_finite(X, "context")
        return X

    def _std_context(self, X) -> np.ndarray:
        return (self._flatten_context(X) - self.x_mean_) / self.x_scale_

    def _std_proxy(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=np.float64)
        if P.ndim == 1:
            P = P.reshape(1, -1) if self.proxy_dim_ > 1 else P.reshape(-1, 1)
        if P.shape[1] != self.proxy_dim_:
            raise StructuralError(f"proxy has {P.shape[1]} features, expected {self.proxy_dim_}")
        return (P - self.p_mean_) / self.p_scale_

    # ------------------------------------------------------------ forward core

    def _forward_core(self, Xs, Ps):
        caches = []
        if self.embedding == "conv":
            h = Xs.reshape(Xs.shape[0], *self._conv_in_shape_)
        else:
            h = Xs
        for layer in self.layers_:
            h, cache = layer.forward(h)
            caches.append(cache)
        if self.embedding == "conv":
            self._pool_out_shape = h.shape
            h = h.reshape(h.shape[0], -1)
        if self.proxy_dim_ > 0:
            h = np.concatenate([h, Ps], axis=1)
        out, head_cache = self.head_.forward(h)
        caches.append(head_cache)
        d = self.param_dim_
        means = out[:, :d]
        raw_logstd = out[:, d:]
        logstd = np.clip(raw_logstd, self.logstd_min, self.logstd_max)
        clamp_mask = (raw_logstd > self.logstd_min) & (raw_logstd < self.logstd_max)
        return means, logstd, clamp_mask, caches

    def _backward_core(self, caches, dmeans, dlogstd, clamp_mask):
        dout = np.concatenate([dmeans, dlogstd * clamp_mask], axis=1)
        grads: dict[str, np.ndarray] = {}
        dh, head_grads = self.head_.backward(caches[-1], dout)
        grads.update(head_grads)
        if self.proxy_dim_ > 0:
            dh = dh[:, : dh.shape[1] - self.proxy_dim_]
        if self.embedding == "conv":
            dh = dh.reshape(self._pool_out_shape)
        for layer, cache in zip(reversed(self.layers_), reversed(caches[:-1])):
            dh, layer_grads = layer.backward(cache, dh)
            grads.update(layer_grads)
        return grads

    # ----------------------------------------------------------- public passes

    def forward(self, X, proxies=None):
        """Standardized-space (mean, log-std) for each context row."""
        self._check_fitted()
        Xs = self._std_context(X)
        Ps = self._std_proxy(proxies) if self.proxy_dim_ > 0 else None
        if self.proxy_dim_ > 0 and proxies is None:
            raise StructuralError("estimator was trained with proxy conditioning; pass proxies")
        means, logstd, _, _ = self._forward_core(Xs, Ps)
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(logstd))):
            raise TrainingError("forward pass produced non-finite outputs")
        return means, logstd

    def predict(self, X, proxies=None) -> np.ndarray:
        """Posterior means in raw parameter space."""
        means, _ = self.forward(X, proxies)
        return means * self.y_scale_ + self.y_mean_

    def predict_moments(self, X, proxies=None):
        means, logstd = self.forward(X, proxies)
        return means * self.y_scale_ + self.y_mean_, np.exp(logstd) * self.y_scale_

    def nll(self, X, y, proxies=None) -> float:
        """Mean negative log density (raw space: includes standardization log-det)."""
        means, logstd = self.forward(X, proxies)
        ys = (as_float_array(y, "y") .reshape(len(means), -1) - self.y_mean_) / self.y_scale_
        z = (ys - means) * np.exp(-logstd)
        per_example = np.sum(0.5 * LOG_2PI + logstd + 0.5 * z**2, axis=1)
        return float(np.mean(per_example) + np.sum(np.log(self.y_scale_)))

    def loss_and_gradients(self, X, y, proxies=None):
        """Mean NLL over the batch and its exact gradients for every weight."""
        self._check_fitted()
        Xs = self._std_context(X)
        ys = (np.asarray(y, dtype=np.float64).reshape(Xs.shape[0], -1) - self.y_mean_) / self.y_scale_
        Ps = self._std_proxy(proxies) if self.proxy_dim_ > 0 else None
        means, logstd, clamp_mask, caches = self._forward_core(Xs, Ps)
        inv_std = np.exp(-logstd)
        resid = (ys - means) * inv_std
        n = Xs.shape[0]
        loss = float(
            np.mean(np.sum(0.5 * LOG_2PI + logstd + 0.5 * resid**2, axis=1))
            + np.sum(np.log(self.y_scale_))
        )
        dmeans = -(resid * inv_std) / n
        dlogstd = (1.0 - resid**2) / n
        grads = self._backward_core(caches, dmeans, dlogstd, clamp_mask)
        return loss, grads

    # ------------------------------------------------------------------- fit

    def fit(self, X, y, proxies=None, val_mask=None, meta=None):
        """Train by maximum likelihood until the validation loss stops decreasing.

        Returns the estimator with the best-validation-epoch weights. The
        loss history per epoch is kept in ``history_``.
        """
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if len(X) != len(y):
            raise StructuralError(f"X and y disagree on length: {len(X)} vs {len(y)}")
        if len(X) < 2:
            raise StructuralError("need at least 2 examples to split train/validation")
        context_shape = X.shape[1:] if X.ndim > 1 else (1,)
        proxy_dim = 0
        if proxies is not None:
            proxies = np.asarray(proxies, dtype=np.float64)
            if proxies.ndim == 1:
                proxies = proxies.reshape(-1, 1)
            proxy_dim = proxies.shape[1]

        seq = np.random.SeedSequence(self.seed)
        init_ss, shuffle_ss, split_ss = seq.spawn(3)
        self._build(context_shape, y.shape[1], proxy_dim, np.random.default_rng(init_ss))

        X_flat = self._flatten_context(X)
        require_finite(y, "y")

        if val_mask is None:
            n_val = max(1, int(round(self.validation_fraction * len(X)))) if self.validation_fraction > 0 else 0
            order = np.random.default_rng(split_ss).permutation(len(X))
            val_mask = np.zeros(len(X), dtype=bool)
            val_mask[order[:n_val]] = True
        else:
            val_mask = np.asarray(val_mask, dtype=bool)
            if val_mask.shape != (len(X),):
                raise StructuralError("val_mask length must match the number of examples")
        if val_mask.all():
            raise StructuralError("validation mask selects every example; nothing to train on")

        train_idx = np.flatnonzero(~val_mask)
        val_idx = np.flatnonzero(val_mask)

        # standardization statistics from the training split only, then frozen
        if self.standardize_context == "global":
            self.x_mean_ = np.full(self.context_dim_, X_flat[train_idx].mean())
            self.x_scale_ = _safe_scale(np.full(self.context_dim_, X_flat[train_idx].std()))
        elif self.standardize_context == "per-bin":
            self.x_mean_ = X_flat[train_idx].mean(axis=0)
            self.x_scale_ = _safe_scale(X_flat[train_idx].std(axis=0))
        else:
            raise StructuralError(f"unknown standardization {self.standardize_context!r}")
        self.y_mean_ = y[train_idx].mean(axis=0)
        self.y_scale_ = _safe_scale(y[train_idx].std(axis=0))
        if proxy_dim > 0:
            self.p_mean_ = proxies[train_idx].mean(axis=0)
            self.p_scale_ = _safe_scale(proxies[train_idx].std(axis=0))

        Xs = (X_flat - self.x_mean_) / self.x_scale_
        ys = (y - self.y_mean_) / self.y_scale_
        Ps = (proxies - self.p_mean_) / self.p_scale_ if proxy_dim > 0 else None
        logdet = float(np.sum(np.log(self.y_scale_)))

        adam_m = {k: np.zeros_like(v) for k, v in self.get_weights().items()}
        adam_v = {k: np.zeros_like(v) for k, v in self.get_weights().items()}
        steps = 0
        shuffle_rng = np.random.default_rng(shuffle_ss)

        def _nll_std(idx) -> float:
            if len(idx) == 0:
                return float("nan")
            total, count = 0.0, 0
            for start in range(0, len(idx), 4096):
                rows = idx[start : start + 4096]
                m, ls, _, _ = self._forward_core(Xs[rows], None if Ps is None else Ps[rows])
                r = (ys[rows] - m) * np.exp(-ls)
                total += float(np.sum(np.sum(0.5 * LOG_2PI + ls + 0.5 * r**2, axis=1)))
                count += len(rows)
            return total / count + logdet

        history = {"epoch": [], "train_loss": [], "val_loss": []}
        best_val = np.inf
        best_epoch = 0
        best_weights = None

        for epoch in range(1, self.max_epochs + 1):
            order = shuffle_rng.permutation(train_idx)
            epoch_loss, seen = 0.0, 0
            for start in range(0, len(order), self.batch_size):
                rows = order[start : start + self.batch_size]
                Pb = None if Ps is None else Ps[rows]
                means, logstd, clamp_mask, caches = self._forward_core(Xs[rows], Pb)
                inv_std = np.exp(-logstd)
                resid = (ys[rows] - means) * inv_std
                batch_loss = float(np.mean(np.sum(0.5 * LOG_2PI + logstd + 0.5 * resid**2, axis=1)))
                if not np.isfinite(batch_loss):
                    raise TrainingError(f"training diverged (non-finite loss) at epoch {epoch}")
                n = len(rows)
                grads = self._backward_core(
                    caches, -(resid * inv_std) / n, (1.0 - resid**2) / n, clamp_mask
                )
                steps += 1
                lr_t = self.learning_rate * np.sqrt(1.0 - self.beta2**steps) / (1.0 - self.beta1**steps)
                for owner in self._owners():
                    for key, w in owner.param_items():
                        g = grads[key]
                        adam_m[key] = self.beta1 * adam_m[key] + (1 - self.beta1) * g
                        adam_v[key] = self.beta2 * adam_v[key] + (1 - self.beta2) * g**2
                        w -= lr_t * adam_m[key] / (np.sqrt(adam_v[key]) + self.adam_eps)
                epoch_loss += batch_loss * n
                seen += n
            val_loss = _nll_std(val_idx)
            if not np.isfinite(val_loss):
                raise TrainingError(f"training diverged (non-finite validation loss) at epoch {epoch}")
            history["epoch"].append(epoch)
            history["train_loss"].append(epoch_loss / seen + logdet)
            history["val_loss"].append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_epoch = epoch
                best_weights = {k: v.copy() for k, v in self.get_weights().items()}
            elif epoch - best_epoch >= self.patience:
                break

        self.set_weights(best_weights)
        self.history_ = history
        self.best_epoch_ = best_epoch
        self.n_epochs_ = history["epoch"][-1]
        self.val_mask_ = val_mask
        self.meta_ = dict(meta or {})
        return self

    # -------------------------------------------------------------- sampling

    def sample(self, context, n: int, rng: np.random.Generator, proxy=None) -> np.ndarray:
        """Draw ``n`` parameter samples for one context, in raw space."""
        means, logstd = self.forward(
            np.asarray(context)[None, ...] if np.asarray(context).ndim == len(self.context_shape_) else context,
            None if proxy is None else np.asarray(proxy).reshape(1, -1),
        )
        z = rng.standard_normal((n, self.param_dim_))
        std_space = means[0] + np.exp(logstd[0]) * z
        return std_space * self.y_scale_ + self.y_mean_

    def sample_batch(self, contexts, rngs, proxies=None) -> np.ndarray:
        """One draw per context row, row i consuming randomness only from rngs[i]."""
        means, logstd = self.forward(contexts, proxies)
        if len(rngs) != means.shape[0]:
            raise StructuralError(f"{len(rngs)} rng streams for {means.shape[0]} contexts")
        z = np.stack([rng.standard_normal(self.param_dim_) for rng in rngs])
        std_space = means + np.exp(logstd) * z
        return std_space * self.y_scale_ + self.y_mean_

    def sample_per_rng(self, context, rngs, proxies=None) -> np.ndarray:
        """Many draws for one shared context, draw i consuming only rngs[i]."""
        ctx = np.asarray(context)[None, ...]
        means, logstd = self.forward(
            ctx, None if proxies is None else np.asarray(proxies).reshape(1, -1)
        )
        z = np.stack([rng.standard_normal(self.param_dim_) for rng in rngs])
        std_space = means[0] + np.exp(logstd[0]) * z
        return std_space * self.y_scale_ + self.y_mean_


# ------------------------------------------------------------------ persistence


def save_checkpoint(est: ConditionalGaussianEstimator, path) -> None:
    """Write a deterministic binary checkpoint (container format).

    Header: constructor params, training meta, fitted dimensions and the loss
    history. Arrays: standardization statistics and every weight tensor.
    """
    est._check_fitted()
    arrays = {"x_mean": est.x_mean_, "x_scale": est.x_scale_, "y_mean": est.y_mean_, "y_scale": est.y_scale_}
    if est.proxy_dim_ > 0:
        arrays["p_mean"] = est.p_mean_
        arrays["p_scale"] = est.p_scale_
    for key, w in est.get_weights().items():
        arrays[f"w:{key}"] = w
    header = {
        "params": json.loads(json.dumps(est.get_params(), default=list)),
        "meta": est.meta_,
        "fitted": {
            "context_shape": list(est.context_shape_),
            "param_dim": est.param_dim_,
            "proxy_dim": est.proxy_dim_,
            "best_epoch": est.best_epoch_,
            "n_epochs": est.n_epochs_,
            "history": getattr(est, "history_", None),
        },
    }
    _binio.write_container(path, CHECKPOINT_MAGIC, header, arrays)


def load_checkpoint(path) -> ConditionalGaussianEstimator:
    header, arrays = _binio.read_container(path, CHECKPOINT_MAGIC)
    params = header["params"]
    for key in ("hidden_sizes", "conv_channels", "conv_kernel_sizes"):
        params[key] = tuple(params[key])
    est = ConditionalGaussianEstimator(**params)
    fitted = header["fitted"]
    est._build(
        tuple(fitted["context_shape"]),
        fitted["param_dim"],
        fitted["proxy_dim"],
        np.random.default_rng(0),
    )
    est.x_mean_ = arrays["x_mean"]
    est.x_scale_ = arrays["x_scale"]
    est.y_mean_ = arrays["y_mean"]
    est.y_scale_ = arrays["y_scale"]
    if est.proxy_dim_ > 0:
        est.p_mean_ = arrays["p_mean"]
        est.p_scale_ = arrays["p_scale"]
    est.set_weights({k[2:]: v for k, v in arrays.items() if k.startswith("w:")})
    est.meta_ = header["meta"]
    est.best_epoch_ = fitted["best_epoch"]
    est.n_epochs_ = fitted["n_epochs"]
    est.history_ = fitted["history"]
    return est


def save_loss_history(est: ConditionalGaussianEstimator, path) -> None:
    est._check_fitted()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for e, tr, va in zip(est.history_["epoch"], est.history_["train_loss"], est.history_["val_loss"]):
            writer.writerow([e, repr(tr), repr(va)])
