import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from utils.exceptions import ShapeError

logger = logging.getLogger(__name__)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape: Tuple[int, ...]) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))"""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float64)


def _as_matrix(name: str, X: np.ndarray, cols: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cols:
        raise ShapeError(f"{name}: expected (rows, {cols}), got {X.shape}")
    return X


@dataclass
class DenseParams:
    """Affine layer: out = X @ W0 + bias, W0 of shape (p_in, k)"""

    W0: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator) -> "DenseParams":
        return cls(W0=glorot_uniform(rng, n_in, n_out, (n_in, n_out)), bias=np.zeros(n_out))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.W0.shape

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.W0": self.W0, f"{prefix}.bias": self.bias}


def dense_forward(X: np.ndarray, params: DenseParams) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (output, cache); cache is the input"""
    X = _as_matrix("dense input", X, params.W0.shape[0])
    if params.bias.shape != (params.W0.shape[1],):
        raise ShapeError(f"dense bias: expected ({params.W0.shape[1]},), got {params.bias.shape}")
    return X @ params.W0 + params.bias, X


def dense_backward(dY: np.ndarray, cache: np.ndarray, params: DenseParams) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Returns (dX, {"W0": ..., "bias": ...})"""
    dY = _as_matrix("dense upstream gradient", dY, params.W0.shape[1])
    if dY.shape[0] != cache.shape[0]:
        raise ShapeError(f"dense backward: {dY.shape[0]} gradient rows for {cache.shape[0]} inputs")
    grads = {"W0": cache.T @ dY, "bias": dY.sum(axis=0)}
    return dY @ params.W0.T, grads


@dataclass
class BatchNormParams:
    """Per-feature normalization over the time axis of one batch"""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-3
    momentum: float = 0.99
    training: bool = field(default=True)

    @classmethod
    def init(cls, width: int, epsilon: float = 1e-3) -> "BatchNormParams":
        return cls(
            gamma=np.ones(width),
            beta=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
            epsilon=epsilon,
        )

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        # running statistics are state, not trainable parameters
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


def batchnorm_forward(X: np.ndarray, params: BatchNormParams) -> Tuple[np.ndarray, tuple]:
    """Training mode uses batch statistics and updates the running ones"""
    width = params.gamma.shape[0]
    X = _as_matrix("batchnorm input", X, width)
    if params.epsilon <= 0:
        raise ValueError(f"batchnorm epsilon must be > 0, got {params.epsilon}")

    if params.training:
        mean = X.mean(axis=0)
        var = X.var(axis=0)
        params.running_mean *= params.momentum
        params.running_mean += (1.0 - params.momentum) * mean
        params.running_var *= params.momentum
        params.running_var += (1.0 - params.momentum) * var
    else:
        mean = params.running_mean
        var = params.running_var

    inv_std = 1.0 / np.sqrt(var + params.epsilon)
    X_hat = (X - mean) * inv_std
    out = params.gamma * X_hat + params.beta
    return out, (X_hat, inv_std, params.training)


def batchnorm_backward(dY: np.ndarray, cache: tuple, params: BatchNormParams) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """Returns (dX, {"gamma": ..., "beta": ...})"""
    X_hat, inv_std, training = cache
    dY = _as_matrix("batchnorm upstream gradient", dY, params.gamma.shape[0])
    grads = {"gamma": (dY * X_hat).sum(axis=0), "beta": dY.sum(axis=0)}

    dX_hat = dY * params.gamma
    if not training:
        return dX_hat * inv_std, grads

    rows = dY.shape[0]
    dX = (inv_std / rows) * (
        rows * dX_hat - dX_hat.sum(axis=0) - X_hat * (dX_hat * X_hat).sum(axis=0)
    )
    return dX, grads


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean of squared residuals and its gradient w.r.t. pred"""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeError("mse_loss: empty input")
    residual = pred - target
    loss = float(np.mean(residual ** 2))
    return loss, 2.0 * residual / residual.size
