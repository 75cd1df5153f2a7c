"""
Central finite-difference verification of analytic gradients.

Any object with `parameters()` (name -> array, updated in place) and
`loss_and_grads(inputs, target)` returning (loss, name -> gradient) can be
checked. The relative error of a tensor is

    ||g_analytic - g_numeric||_2 / (||g_analytic||_2 + ||g_numeric||_2)

and 0 when both gradients vanish.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Protocol, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class Differentiable(Protocol):
    def parameters(self) -> Dict[str, np.ndarray]:
        ...

    def loss_and_grads(self, inputs: Any, target: Any) -> Tuple[float, Dict[str, np.ndarray]]:
        ...


@dataclass
class GradCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-5

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def failing(self) -> List[str]:
        return sorted(name for name, error in self.errors.items() if error >= self.tolerance)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def numeric_gradient(network: Differentiable, inputs: Any, target: Any,
                     param: np.ndarray, step: float) -> np.ndarray:
    grad = np.zeros_like(param)
    for index in np.ndindex(param.shape):
        original = param[index]
        param[index] = original + step
        loss_plus, _ = network.loss_and_grads(inputs, target)
        param[index] = original - step
        loss_minus, _ = network.loss_and_grads(inputs, target)
        param[index] = original
        grad[index] = (loss_plus - loss_minus) / (2.0 * step)
    return grad


def grad_check(network: Differentiable, inputs: Any, target: Any,
               step: float = 1e-5, tolerance: float = 1e-5) -> GradCheckReport:
    """Compare analytic and central-difference gradients for every parameter tensor"""
    _, analytic = network.loss_and_grads(inputs, target)
    report = GradCheckReport(tolerance=tolerance)

    for name, param in network.parameters().items():
        numeric = numeric_gradient(network, inputs, target, param, step)
        report.errors[name] = relative_error(analytic[name], numeric)

    if report.passed:
        logger.info(f"Gradient check passed: max relative error {report.max_error:.3e}")
    else:
        logger.warning(f"Gradient check failed for {report.failing()} (max {report.max_error:.3e})")
    return report
