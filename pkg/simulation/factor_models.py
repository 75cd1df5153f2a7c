"""
Latent factor panels for feature-selection experiments.

Raw factors are i.i.d. N(0, Sigma) with Sigma_ij = rho^|i-j|; observed
factors mix consecutive raw draws, f_1 = f_1^raw and
f_t = w0 f_{t-1}^raw + w1 f_t^raw. Features follow a linear
(x_t = Lambda f_t + e_t) or logistic (x_tk = c_k / (1 + exp([1, f_t] . lambda_k)) + e_tk)
factor model; the response is linear or sin(.)exp(.) in x_t beta, optionally
with the latent confounder (f_t1 + f_t2 + f_t3) / 3 added.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from data_io.panel import TimeSeriesPanel
from tensor_nn.lstm import sigmoid
from utils.exceptions import ConfigError, NumericError, ShapeError

logger = logging.getLogger(__name__)

FACTOR_MODELS = ("linear", "logistic")
LINKS = ("linear", "nonlinear")


@dataclass
class SimConfig:
    m: int = 1
    n: int = 1000
    p: int = 500
    r: int = 3
    s: int = 10
    amplitude: float = 10.0
    w0: float = 0.3
    w1: float = 0.7
    rho: float = 0.9
    factor_model: str = "linear"
    link: str = "linear"
    confounders: bool = False
    noise_sd: float = 1.0
    feature_noise_sd: float = 1.0
    redraw_loadings: bool = False
    seed: int = 0

    def validate(self) -> "SimConfig":
        if self.m < 1 or self.n < 1 or self.p < 1:
            raise ConfigError(f"m, n, p must be >= 1, got {self.m}, {self.n}, {self.p}")
        if self.r < 1:
            raise ConfigError(f"r must be >= 1, got {self.r}")
        if not 0 <= self.s <= self.p:
            raise ConfigError(f"s must lie in [0, p={self.p}], got {self.s}")
        if self.amplitude <= 0:
            raise ConfigError(f"amplitude must be > 0, got {self.amplitude}")
        if not np.isclose(self.w0 + self.w1, 1.0):
            raise ConfigError(f"w0 + w1 must equal 1, got {self.w0} + {self.w1}")
        if self.factor_model not in FACTOR_MODELS:
            raise ConfigError(f"factor_model must be one of {FACTOR_MODELS}, got '{self.factor_model}'")
        if self.link not in LINKS:
            raise ConfigError(f"link must be one of {LINKS}, got '{self.link}'")
        if self.confounders and self.r < 3:
            raise ConfigError("confounded response needs r >= 3 factors")
        if self.noise_sd < 0 or self.feature_noise_sd < 0:
            raise ConfigError("noise standard deviations must be >= 0")
        return self

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class GroundTruth:
    beta: np.ndarray
    S0: Tuple[int, ...]
    factors: np.ndarray  # (m, n, r)
    loadings: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def s(self) -> int:
        return len(self.S0)


def ar1_covariance(r: int, rho: float = 0.9) -> np.ndarray:
    index = np.arange(r)
    return rho ** np.abs(index[:, None] - index[None, :])


def gen_factors(n: int, r: int, w0: float, w1: float, rng: np.random.Generator,
                rho: float = 0.9, raw: Optional[np.ndarray] = None) -> np.ndarray:
    """Time-weighted factors (n x r); `raw` overrides the N(0, Sigma) draws"""
    if not np.isclose(w0 + w1, 1.0):
        raise ConfigError(f"w0 + w1 must equal 1, got {w0} + {w1}")
    if raw is None:
        raw = rng.multivariate_normal(np.zeros(r), ar1_covariance(r, rho), size=n, method="cholesky")
    elif raw.shape != (n, r):
        raise ShapeError(f"raw factors: expected ({n}, {r}), got {raw.shape}")

    F = np.empty_like(raw)
    F[0] = raw[0]
    F[1:] = w0 * raw[:-1] + w1 * raw[1:]
    return F


def gen_loadings_linear(p: int, r: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((p, r))


def gen_loadings_logistic(p: int, r: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(lambdas of shape (p, r + 1) with intercept first, scales c of shape (p,))"""
    return rng.standard_normal((p, r + 1)), rng.standard_normal(p)


def _idiosyncratic(shape, noise_rng: Optional[np.random.Generator], noise_sd: float) -> np.ndarray:
    if noise_rng is None or noise_sd == 0:
        return np.zeros(shape)
    return noise_sd * noise_rng.standard_normal(shape)


def gen_design_linear(F: np.ndarray, Lambda: np.ndarray, noise_rng: Optional[np.random.Generator],
                      noise_sd: float = 1.0) -> np.ndarray:
    """X = F Lambda^T + E"""
    if F.shape[1] != Lambda.shape[1]:
        raise ShapeError(f"factors {F.shape} do not match loadings {Lambda.shape}")
    signal = F @ Lambda.T
    return signal + _idiosyncratic(signal.shape, noise_rng, noise_sd)


def gen_design_logistic(F: np.ndarray, lambdas: np.ndarray, c: np.ndarray,
                        noise_rng: Optional[np.random.Generator], noise_sd: float = 1.0) -> np.ndarray:
    """x_tk = c_k / (1 + exp([1, f_t] . lambda_k)) + e_tk"""
    if lambdas.shape[1] != F.shape[1] + 1:
        raise ShapeError(f"lambdas {lambdas.shape} need r + 1 = {F.shape[1] + 1} columns")
    if c.shape != (lambdas.shape[0],):
        raise ShapeError(f"scales c {c.shape} do not match {lambdas.shape[0]} features")
    design = np.hstack([np.ones((F.shape[0], 1)), F])
    # c / (1 + e^a) == c * sigmoid(-a)
    signal = c * sigmoid(-(design @ lambdas.T))
    return signal + _idiosyncratic(signal.shape, noise_rng, noise_sd)


def gen_coefficients(p: int, s: int, A: float, rng: np.random.Generator) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """s random coordinates set to +A or -A with equal probability"""
    if not 0 <= s <= p:
        raise ConfigError(f"s must lie in [0, {p}], got {s}")
    beta = np.zeros(p)
    support = np.sort(rng.choice(p, size=s, replace=False)) if s else np.array([], dtype=int)
    beta[support] = np.where(rng.random(s) < 0.5, A, -A)
    return beta, tuple(int(j) for j in support)


def gen_response(X: np.ndarray, beta: np.ndarray, link: str = "linear", F: Optional[np.ndarray] = None,
                 confounders: bool = False, noise_rng: Optional[np.random.Generator] = None,
                 noise_sd: float = 1.0) -> np.ndarray:
    """Response for one subject (length n)"""
    if X.shape[1] != beta.shape[0]:
        raise ShapeError(f"design {X.shape} does not match beta {beta.shape}")
    index = X @ beta
    if link == "linear":
        y = index.copy()
    elif link == "nonlinear":
        with np.errstate(over="ignore", invalid="ignore"):
            y = np.sin(index) * np.exp(index)
    else:
        raise ConfigError(f"link must be one of {LINKS}, got '{link}'")

    if confounders:
        if F is None or F.shape[1] < 3:
            raise ConfigError("confounded response needs the factor matrix with r >= 3")
        y += F[:, :3].mean(axis=1)

    y += _idiosyncratic(y.shape, noise_rng, noise_sd)
    if not np.all(np.isfinite(y)):
        raise NumericError(f"response overflowed for link '{link}' (max |x beta| = {np.abs(index).max():.1f})")
    return y


def simulate_panel(config: SimConfig) -> Tuple[TimeSeriesPanel, GroundTruth]:
    """Full panel and ground truth; a pure function of the config (seed included)"""
    config.validate()
    streams = np.random.SeedSequence(config.seed).spawn(2 + 3 * config.m)
    loading_rng = np.random.default_rng(streams[0])
    coefficient_rng = np.random.default_rng(streams[1])

    def draw_loadings(rng):
        if config.factor_model == "linear":
            return {"Lambda": gen_loadings_linear(config.p, config.r, rng)}
        lambdas, c = gen_loadings_logistic(config.p, config.r, rng)
        return {"lambdas": lambdas, "c": c}

    shared = draw_loadings(loading_rng)
    beta, S0 = gen_coefficients(config.p, config.s, config.amplitude, coefficient_rng)

    X = np.empty((config.m, config.n, config.p))
    y = np.empty((config.m, config.n))
    factors = np.empty((config.m, config.n, config.r))
    per_subject = []

    for i in range(config.m):
        factor_rng, noise_rng, response_rng = (np.random.default_rng(s) for s in streams[2 + 3 * i: 5 + 3 * i])
        loadings = draw_loadings(factor_rng) if config.redraw_loadings and i > 0 else shared
        F = gen_factors(config.n, config.r, config.w0, config.w1, factor_rng, rho=config.rho)
        if config.factor_model == "linear":
            X[i] = gen_design_linear(F, loadings["Lambda"], noise_rng, config.feature_noise_sd)
        else:
            X[i] = gen_design_logistic(F, loadings["lambdas"], loadings["c"], noise_rng, config.feature_noise_sd)
        y[i] = gen_response(X[i], beta, config.link, F, config.confounders, response_rng, config.noise_sd)
        factors[i] = F
        per_subject.append(loadings)

    truth_loadings = dict(shared)
    if config.redraw_loadings:
        for i, loadings in enumerate(per_subject[1:], start=2):
            truth_loadings.update({f"{key}_S{i}": value for key, value in loadings.items()})

    panel = TimeSeriesPanel(X=X, y=y)
    logger.info(
        f"Simulated {config.factor_model}/{config.link} panel {panel.shape} with s={config.s}, "
        f"A={config.amplitude}, confounders={config.confounders}"
    )
    return panel, GroundTruth(beta=beta, S0=S0, factors=factors, loadings=truth_loadings)


if __name__ == "__main__":
    print("🧪 Simulating a small panel...")
    demo_panel, demo_truth = simulate_panel(SimConfig(n=50, p=20, s=3, seed=1))
    print(f"✅ Panel shape {demo_panel.shape}, signals at {demo_truth.S0}")
