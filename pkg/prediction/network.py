"""
Prediction network on the augmented design [X, X_tilde].

filter (pairwise coupling)  z * x + z_tilde * x_tilde        p
dense                       W0 (p x k), bias                 k
batch norm (optional)       gamma, beta                      k
LSTM                        V (u x k), U (u x u), b          u
output                      y_t = V1 . h_t + b1              1

z and z_tilde start from the same constant, so original and knockoff
features compete from an identical footing.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import PredictionConfig
from data_io.panel import TimeSeriesPanel
from tensor_nn.layers import (
    BatchNormParams,
    DenseParams,
    batchnorm_backward,
    batchnorm_forward,
    dense_backward,
    dense_forward,
    glorot_uniform,
    mse_loss,
)
from tensor_nn.lstm import LstmParams, backprop_through_time, lstm_sequence_forward
from tensor_nn.optim import Adam
from utils.exceptions import DataError, NumericError, ShapeError

Subject = Tuple[np.ndarray, np.ndarray]


@dataclass
class FilterParams:
    z: np.ndarray
    z_tilde: np.ndarray

    @classmethod
    def init(cls, p: int, value: float) -> "FilterParams":
        return cls(z=np.full(p, float(value)), z_tilde=np.full(p, float(value)))

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.z": self.z, f"{prefix}.z_tilde": self.z_tilde}


class PredictionNetwork:
    """Filter, dense, optional batch norm, LSTM and linear readout"""

    def __init__(self, p: int, config: PredictionConfig, seed: int = 0):
        config.validate()
        if p < 1:
            raise ShapeError(f"p must be >= 1, got {p}")

        self.p = p
        self.config = config
        self.seed = seed
        self.logger = logging.getLogger(__name__)
        self.history: List[float] = []
        self.initial_loss: float = float("nan")
        self.response_center = 0.0
        self.response_scale = 1.0

        rng = np.random.default_rng(seed)
        k, u = config.dense_units, config.lstm_units
        self.filter = FilterParams.init(p, config.filter_init)
        self.dense = DenseParams.init(p, k, rng)
        self.batch_norm: Optional[BatchNormParams] = BatchNormParams.init(k) if config.batch_norm else None
        self.lstm = LstmParams.init(k, u, rng)
        self.V1 = glorot_uniform(rng, u, 1, (u,))
        self.output_bias = np.zeros(1)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        params.update(self.filter.named("filter"))
        params.update(self.dense.named("dense"))
        if self.batch_norm is not None:
            params.update(self.batch_norm.named("batch_norm"))
        params.update(self.lstm.named("lstm"))
        params["output.V1"] = self.V1
        params["output.bias"] = self.output_bias
        return params

    def swap_filter(self, swap: Iterable[int]) -> "PredictionNetwork":
        """Exchange z_j and z_tilde_j for j in swap (mirrored initialization)"""
        columns = np.asarray(sorted(set(swap)), dtype=int)
        if columns.size:
            self.filter.z[columns], self.filter.z_tilde[columns] = (
                self.filter.z_tilde[columns].copy(), self.filter.z[columns].copy())
        return self

    def _check_subject(self, X_i, X_tilde_i, y_i=None):
        X_i = np.asarray(X_i, dtype=np.float64)
        X_tilde_i = np.asarray(X_tilde_i, dtype=np.float64)
        if X_i.ndim != 2 or X_i.shape[1] != self.p:
            raise ShapeError(f"Prediction input: expected (n, {self.p}), got {X_i.shape}")
        if X_tilde_i.shape != X_i.shape:
            raise ShapeError(f"Knockoffs {X_tilde_i.shape} do not match features {X_i.shape}")
        if y_i is not None:
            y_i = np.asarray(y_i, dtype=np.float64)
            if y_i.shape != (X_i.shape[0],):
                raise ShapeError(f"Response: expected ({X_i.shape[0]},), got {y_i.shape}")
        return X_i, X_tilde_i, y_i

    def _forward(self, X_i, X_tilde_i):
        filtered = self.filter.z * X_i + self.filter.z_tilde * X_tilde_i
        dense_out, dense_cache = dense_forward(filtered, self.dense)
        bn_cache = None
        lstm_in = dense_out
        if self.batch_norm is not None:
            lstm_in, bn_cache = batchnorm_forward(dense_out, self.batch_norm)
        H, caches = lstm_sequence_forward(lstm_in, self.lstm)
        y_hat = H @ self.V1 + self.output_bias[0]
        return y_hat, (dense_cache, bn_cache, lstm_in, H, caches)

    def predict(self, X_i: np.ndarray, X_tilde_i: np.ndarray) -> np.ndarray:
        """Response prediction on the original scale"""
        X_i, X_tilde_i, _ = self._check_subject(X_i, X_tilde_i)
        if self.batch_norm is not None:
            self.batch_norm.training = False
        try:
            y_hat, _ = self._forward(X_i, X_tilde_i)
        finally:
            if self.batch_norm is not None:
                self.batch_norm.training = True
        return y_hat * self.response_scale + self.response_center

    def loss_and_grads(self, inputs: Sequence[Subject], target: Sequence[np.ndarray]) -> Tuple[float, Dict[str, np.ndarray]]:
        """Summed per-subject MSE; inputs are (X_i, X_tilde_i) pairs, target the responses"""
        if len(inputs) != len(target):
            raise ShapeError(f"{len(inputs)} input subjects but {len(target)} responses")

        total = 0.0
        grads = {name: np.zeros_like(value) for name, value in self.parameters().items()}
        for (X_i, X_tilde_i), y_i in zip(inputs, target):
            X_i, X_tilde_i, y_i = self._check_subject(X_i, X_tilde_i, y_i)
            y_hat, (dense_cache, bn_cache, lstm_in, H, caches) = self._forward(X_i, X_tilde_i)
            loss, d_y = mse_loss(y_hat, y_i)
            total += loss

            grads["output.V1"] += H.T @ d_y
            grads["output.bias"] += d_y.sum()
            d_H = np.outer(d_y, self.V1)

            lstm_grads, d_lstm_in = backprop_through_time(d_H, caches, self.lstm, lstm_in)
            for key, value in lstm_grads.items():
                grads[f"lstm.{key}"] += value

            d_dense_out = d_lstm_in
            if self.batch_norm is not None:
                d_dense_out, bn_grads = batchnorm_backward(d_lstm_in, bn_cache, self.batch_norm)
                for key, value in bn_grads.items():
                    grads[f"batch_norm.{key}"] += value

            d_filtered, dense_grads = dense_backward(d_dense_out, dense_cache, self.dense)
            for key, value in dense_grads.items():
                grads[f"dense.{key}"] += value

            grads["filter.z"] += (d_filtered * X_i).sum(axis=0)
            grads["filter.z_tilde"] += (d_filtered * X_tilde_i).sum(axis=0)
        return total, grads

    def fit(self, X: np.ndarray, X_tilde: np.ndarray, y: np.ndarray) -> "PredictionNetwork":
        """Train on (m, n, p) features/knockoffs and (m, n) responses, one subject per batch"""
        X, X_tilde, y = _as_panels(X, X_tilde, y, self.p)

        if self.config.standardize_response:
            self.response_center = float(y.mean())
            scale = float(y.std())
            self.response_scale = scale if scale > 0 else 1.0
        targets = (y - self.response_center) / self.response_scale

        optimizer = Adam(self.parameters(), learning_rate=self.config.learning_rate)
        subjects = list(zip(X, X_tilde))
        self.initial_loss = float(np.mean([self.loss_and_grads([subject], [t])[0]
                                           for subject, t in zip(subjects, targets)]))
        self.logger.info(
            f"Training prediction network p={self.p} k={self.config.dense_units} u={self.config.lstm_units} "
            f"on {len(subjects)} subject(s) for {self.config.epochs} epochs (initial loss {self.initial_loss:.4f})"
        )

        for epoch in range(1, self.config.epochs + 1):
            epoch_losses = []
            for subject, t in zip(subjects, targets):
                loss, grads = self.loss_and_grads([subject], [t])
                if not np.isfinite(loss):
                    raise NumericError(f"Prediction loss became non-finite at epoch {epoch}")
                optimizer.step(grads)
                epoch_losses.append(loss)
            self.history.append(float(np.mean(epoch_losses)))

            if epoch % self.config.log_every == 0 or epoch == self.config.epochs:
                self.logger.info(f"Prediction epoch {epoch}/{self.config.epochs}: loss {self.history[-1]:.6f}")
            else:
                self.logger.debug(f"Prediction epoch {epoch}: loss {self.history[-1]:.6f}")
        return self


def _as_panels(X, X_tilde, y, p: int):
    X = X.X if isinstance(X, TimeSeriesPanel) else np.asarray(X, dtype=np.float64)
    X_tilde = X_tilde.X if isinstance(X_tilde, TimeSeriesPanel) else np.asarray(X_tilde, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 2:
        X = X[np.newaxis]
        if X_tilde.ndim == 2:
            X_tilde = X_tilde[np.newaxis]
        if y.ndim == 1:
            y = y[np.newaxis]
    if X.ndim != 3 or X.shape[2] != p:
        raise ShapeError(f"Features must be (m, n, {p}), got {X.shape}")
    if X_tilde.shape != X.shape:
        raise ShapeError(f"Knockoffs {X_tilde.shape} do not match features {X.shape}")
    if y.shape != X.shape[:2]:
        raise ShapeError(f"Response must be {X.shape[:2]}, got {y.shape}")
    for name, array in (("features", X), ("knockoffs", X_tilde), ("response", y)):
        if not np.all(np.isfinite(array)):
            raise DataError(f"Prediction network {name} contain non-finite values")
    return X, X_tilde, y


def build_prediction_network(p: int, config: PredictionConfig, seed: int = 0) -> PredictionNetwork:
    return PredictionNetwork(p, config, seed=seed)


def train_prediction_network(X, X_tilde, y, config: PredictionConfig, seed: int = 0,
                             swap: Iterable[int] = ()) -> PredictionNetwork:
    """Build with the given seed (optionally mirrored on `swap`) and train"""
    X_arr = X.X if isinstance(X, TimeSeriesPanel) else np.asarray(X)
    network = build_prediction_network(X_arr.shape[-1], config, seed=seed).swap_filter(swap)
    return network.fit(X, X_tilde, y)
