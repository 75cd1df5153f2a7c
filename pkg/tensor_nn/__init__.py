"""
Minimal deterministic neural-network core.

Dense, batch-normalization and LSTM layers with exact analytic gradients
(backpropagation through time), mean squared error, Adam, and a
finite-difference gradient checker. Everything is float64 numpy.
"""

from tensor_nn.gradcheck import GradCheckReport, grad_check
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
from tensor_nn.lstm import (
    LstmParams,
    StepCache,
    backprop_through_time,
    lstm_cell_forward,
    lstm_sequence_forward,
    sigmoid,
)
from tensor_nn.optim import Adam, OptimizerState, adam_step

__all__ = [
    "Adam",
    "BatchNormParams",
    "DenseParams",
    "GradCheckReport",
    "LstmParams",
    "OptimizerState",
    "StepCache",
    "adam_step",
    "backprop_through_time",
    "batchnorm_backward",
    "batchnorm_forward",
    "dense_backward",
    "dense_forward",
    "glorot_uniform",
    "grad_check",
    "lstm_cell_forward",
    "lstm_sequence_forward",
    "mse_loss",
    "sigmoid",
]
