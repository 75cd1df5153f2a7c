import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from utils.exceptions import ShapeError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """Adam moment accumulators and hyperparameters"""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray],
              state: OptimizerState) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
    """One bias-corrected Adam update, applied to params in place"""
    missing = set(params) - set(grads)
    if missing:
        raise ShapeError(f"adam_step: no gradient for {sorted(missing)}")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step

    for name, param in params.items():
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != param.shape:
            raise ShapeError(f"adam_step: {name} gradient {grad.shape} vs parameter {param.shape}")

        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m = state.m[name]
        v = state.v[name]

        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad

        m_hat = m / correction1
        v_hat = v / correction2
        param -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)

    return params, state


class Adam:
    """Adam optimizer bound to a fixed set of named parameters"""

    def __init__(self, params: Dict[str, np.ndarray], learning_rate: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = params
        self.state = OptimizerState(learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def step(self, grads: Dict[str, np.ndarray]):
        adam_step(self.params, grads, self.state)
