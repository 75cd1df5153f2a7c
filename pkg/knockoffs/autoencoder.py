"""
LSTM autoencoder used to estimate the factor part of the design.

Encoder LSTM (p -> bottleneck), decoder LSTM (bottleneck -> p), then a
p-wide dense readout. Each subject is one batch and the recurrent state is
reset to zero at every subject boundary.
"""

import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from config.settings import AutoencoderConfig
from data_io.panel import TimeSeriesPanel
from tensor_nn.layers import DenseParams, dense_backward, dense_forward, mse_loss
from tensor_nn.lstm import LstmParams, backprop_through_time, lstm_sequence_forward
from tensor_nn.optim import Adam
from utils.exceptions import DataError, NumericError, ShapeError


class LstmAutoencoder:
    """Sequence autoencoder with explicitly named parameters"""

    def __init__(self, n_features: int, config: AutoencoderConfig, seed: int = 0):
        config.validate()
        if n_features < 1:
            raise ShapeError(f"n_features must be >= 1, got {n_features}")

        self.n_features = n_features
        self.config = config
        self.seed = seed
        self.logger = logging.getLogger(__name__)
        self.history: List[float] = []
        self.initial_loss: float = float("nan")

        rng = np.random.default_rng(seed)
        bottleneck = config.bottleneck
        widths = [n_features] + [bottleneck] * config.layers_per_side + [n_features] * config.layers_per_side

        self.layers: List[Tuple[str, LstmParams]] = []
        for index, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
            side = "encoder" if index < config.layers_per_side else "decoder"
            depth = index if side == "encoder" else index - config.layers_per_side
            self.layers.append((f"{side}{depth}", LstmParams.init(n_in, n_out, rng)))
        self.readout = DenseParams.init(n_features, n_features, rng)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for name, layer in self.layers:
            params.update(layer.named(name))
        params.update(self.readout.named("readout"))
        return params

    def _check_subject(self, X_i: np.ndarray) -> np.ndarray:
        X_i = np.asarray(X_i, dtype=np.float64)
        if X_i.ndim != 2 or X_i.shape[1] != self.n_features:
            raise ShapeError(f"Autoencoder input: expected (n, {self.n_features}), got {X_i.shape}")
        return X_i

    def _forward(self, X_i: np.ndarray):
        inputs = [X_i]
        caches = []
        current = X_i
        for _, layer in self.layers:
            current, step_caches = lstm_sequence_forward(current, layer)
            caches.append(step_caches)
            inputs.append(current)
        C_hat, readout_cache = dense_forward(current, self.readout)
        return C_hat, inputs, caches, readout_cache

    def reconstruct(self, X_i: np.ndarray) -> np.ndarray:
        """In-sample reconstruction C_hat of one subject (n x p)"""
        C_hat, _, _, _ = self._forward(self._check_subject(X_i))
        return C_hat

    def loss_and_grads(self, inputs: Sequence[np.ndarray], target=None) -> Tuple[float, Dict[str, np.ndarray]]:
        """Summed per-subject reconstruction MSE and its gradients; target defaults to inputs"""
        subjects = [inputs] if isinstance(inputs, np.ndarray) and inputs.ndim == 2 else list(inputs)
        targets = subjects if target is None else (
            [target] if isinstance(target, np.ndarray) and target.ndim == 2 else list(target)
        )
        if len(targets) != len(subjects):
            raise ShapeError(f"{len(subjects)} input subjects but {len(targets)} targets")

        total = 0.0
        grads = {name: np.zeros_like(value) for name, value in self.parameters().items()}
        for X_i, T_i in zip(subjects, targets):
            X_i = self._check_subject(X_i)
            C_hat, layer_inputs, caches, readout_cache = self._forward(X_i)
            loss, d_out = mse_loss(C_hat, T_i)
            total += loss

            d_hidden, readout_grads = dense_backward(d_out, readout_cache, self.readout)
            for key, value in readout_grads.items():
                grads[f"readout.{key}"] += value

            for index in reversed(range(len(self.layers))):
                name, layer = self.layers[index]
                layer_grads, d_hidden = backprop_through_time(d_hidden, caches[index], layer, layer_inputs[index])
                for key, value in layer_grads.items():
                    grads[f"{name}.{key}"] += value
        return total, grads

    def fit(self, panel: TimeSeriesPanel) -> "LstmAutoencoder":
        """Minimize reconstruction MSE, one Adam step per subject per epoch"""
        validate_training_panel(panel)
        if panel.p != self.n_features:
            raise ShapeError(f"Panel has {panel.p} features, autoencoder expects {self.n_features}")

        optimizer = Adam(self.parameters(), learning_rate=self.config.learning_rate)
        self.initial_loss = float(np.mean([self.loss_and_grads([X_i])[0] for X_i in panel.X]))
        self.logger.info(
            f"Training autoencoder p={self.n_features} bottleneck={self.config.bottleneck} "
            f"on {panel.m} subject(s) for {self.config.epochs} epochs (initial loss {self.initial_loss:.4f})"
        )

        for epoch in range(1, self.config.epochs + 1):
            epoch_losses = []
            for X_i in panel.X:
                loss, grads = self.loss_and_grads([X_i])
                if not np.isfinite(loss):
                    raise NumericError(f"Autoencoder loss became non-finite at epoch {epoch}")
                optimizer.step(grads)
                epoch_losses.append(loss)
            self.history.append(float(np.mean(epoch_losses)))

            if epoch % self.config.log_every == 0 or epoch == self.config.epochs:
                self.logger.info(f"Autoencoder epoch {epoch}/{self.config.epochs}: loss {self.history[-1]:.6f}")
            else:
                self.logger.debug(f"Autoencoder epoch {epoch}: loss {self.history[-1]:.6f}")
        return self


def validate_training_panel(panel: TimeSeriesPanel):
    if panel.m < 1 or panel.p < 1:
        raise DataError(f"Panel must have at least one subject and one feature, got {panel.shape}")
    if panel.n < 2:
        raise DataError(f"Panel must have at least two time points, got n={panel.n}")
    panel.require_finite("training panel")


def train_autoencoder(panel: TimeSeriesPanel, config: AutoencoderConfig, seed: int = 0) -> LstmAutoencoder:
    validate_training_panel(panel)
    return LstmAutoencoder(panel.p, config, seed=seed).fit(panel)
