"""
LSTM layer with exact backpropagation through time.

Gate equations for one step, with x_t of width k and u units:

    f_t  = sigmoid(Vf x_t + Uf h_{t-1} + bf)
    i_t  = sigmoid(Vi x_t + Ui h_{t-1} + bi)
    c~_t = tanh(Vc x_t + Uc h_{t-1} + bc)
    c_t  = f_t * c_{t-1} + i_t * c~_t
    o_t  = sigmoid(Vo x_t + Uo h_{t-1} + bo)
    h_t  = o_t * tanh(c_t)

The layer is stateless: callers pass the initial (h0, c0), normally zeros,
at every subject boundary.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from tensor_nn.layers import glorot_uniform
from utils.exceptions import ShapeError

logger = logging.getLogger(__name__)

GATES = ("f", "i", "c", "o")
FIELDS = tuple(f"V{g}" for g in GATES) + tuple(f"U{g}" for g in GATES) + tuple(f"b{g}" for g in GATES)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function in float64, stable for large |x|"""
    return expit(np.asarray(x, dtype=np.float64))


@dataclass
class LstmParams:
    """Gate weights V (u x k), recurrent weights U (u x u), biases b (u)"""

    Vf: np.ndarray
    Vi: np.ndarray
    Vc: np.ndarray
    Vo: np.ndarray
    Uf: np.ndarray
    Ui: np.ndarray
    Uc: np.ndarray
    Uo: np.ndarray
    bf: np.ndarray
    bi: np.ndarray
    bc: np.ndarray
    bo: np.ndarray

    @classmethod
    def init(cls, input_width: int, units: int, rng: np.random.Generator) -> "LstmParams":
        values = {}
        for gate in GATES:
            values[f"V{gate}"] = glorot_uniform(rng, input_width, units, (units, input_width))
            values[f"U{gate}"] = glorot_uniform(rng, units, units, (units, units))
        for gate in GATES:
            values[f"b{gate}"] = np.zeros(units)
        return cls(**values)

    @classmethod
    def zeros(cls, input_width: int, units: int) -> "LstmParams":
        values = {f"V{g}": np.zeros((units, input_width)) for g in GATES}
        values.update({f"U{g}": np.zeros((units, units)) for g in GATES})
        values.update({f"b{g}": np.zeros(units) for g in GATES})
        return cls(**values)

    @property
    def units(self) -> int:
        return self.Vf.shape[0]

    @property
    def input_width(self) -> int:
        return self.Vf.shape[1]

    def validate(self):
        u, k = self.units, self.input_width
        for gate in GATES:
            for name, expected in ((f"V{gate}", (u, k)), (f"U{gate}", (u, u)), (f"b{gate}", (u,))):
                value = getattr(self, name)
                if value.shape != expected:
                    raise ShapeError(f"LSTM {name}: expected {expected}, got {value.shape}")

    def named(self, prefix: str) -> Dict[str, np.ndarray]:
        return {f"{prefix}.{name}": getattr(self, name) for name in FIELDS}

    def stacked(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(V, U, b) with gate blocks stacked in f, i, c, o order"""
        V = np.vstack([self.Vf, self.Vi, self.Vc, self.Vo])
        U = np.vstack([self.Uf, self.Ui, self.Uc, self.Uo])
        b = np.concatenate([self.bf, self.bi, self.bc, self.bo])
        return V, U, b


@dataclass
class StepCache:
    """Activations of one forward step, kept for BPTT"""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    f: np.ndarray
    i: np.ndarray
    c_tilde: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


def _step(pre: np.ndarray, x_t, h_prev, c_prev, U: np.ndarray, units: int):
    a = pre + U @ h_prev
    f = sigmoid(a[:units])
    i = sigmoid(a[units:2 * units])
    c_tilde = np.tanh(a[2 * units:3 * units])
    o = sigmoid(a[3 * units:])
    c = f * c_prev + i * c_tilde
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = StepCache(x=x_t, h_prev=h_prev, c_prev=c_prev, f=f, i=i, c_tilde=c_tilde,
                      o=o, c=c, tanh_c=tanh_c, h=h)
    return h, c, cache


def _check_state(name: str, state: np.ndarray, units: int) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (units,):
        raise ShapeError(f"{name}: expected ({units},), got {state.shape}")
    return state


def lstm_cell_forward(x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray,
                      params: LstmParams) -> Tuple[np.ndarray, np.ndarray, StepCache]:
    """One LSTM step"""
    params.validate()
    u, k = params.units, params.input_width
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (k,):
        raise ShapeError(f"LSTM input: expected ({k},), got {x_t.shape}")
    h_prev = _check_state("h_prev", h_prev, u)
    c_prev = _check_state("c_prev", c_prev, u)

    V, U, b = params.stacked()
    return _step(V @ x_t + b, x_t, h_prev, c_prev, U, u)


def lstm_sequence_forward(X_seq: np.ndarray, params: LstmParams,
                          h0: Optional[np.ndarray] = None,
                          c0: Optional[np.ndarray] = None) -> Tuple[np.ndarray, List[StepCache]]:
    """Chain the cell over rows of X_seq (n x k); returns H (n x u) and caches"""
    params.validate()
    u, k = params.units, params.input_width
    X_seq = np.asarray(X_seq, dtype=np.float64)
    if X_seq.ndim != 2 or X_seq.shape[1] != k:
        raise ShapeError(f"LSTM sequence: expected (n, {k}), got {X_seq.shape}")

    h = _check_state("h0", np.zeros(u) if h0 is None else h0, u)
    c = _check_state("c0", np.zeros(u) if c0 is None else c0, u)

    V, U, b = params.stacked()
    pre = X_seq @ V.T + b

    H = np.empty((X_seq.shape[0], u))
    caches = []
    for t in range(X_seq.shape[0]):
        h, c, cache = _step(pre[t], X_seq[t], h, c, U, u)
        H[t] = h
        caches.append(cache)
    return H, caches


def backprop_through_time(upstream_grads: np.ndarray, caches: List[StepCache], params: LstmParams,
                          X_seq: np.ndarray) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Exact gradients of a loss whose per-step dL/dh_t are the rows of upstream_grads.

    Returns ({"Vf": ..., ..., "bo": ...}, dX_seq).
    """
    u, k = params.units, params.input_width
    dH = np.asarray(upstream_grads, dtype=np.float64)
    X_seq = np.asarray(X_seq, dtype=np.float64)
    n = len(caches)
    if dH.shape != (n, u):
        raise ShapeError(f"BPTT upstream gradients: expected ({n}, {u}), got {dH.shape}")
    if X_seq.shape != (n, k):
        raise ShapeError(f"BPTT sequence: expected ({n}, {k}), got {X_seq.shape}")

    V, U, _ = params.stacked()
    dA = np.empty((n, 4 * u))
    H_prev = np.empty((n, u))
    dh_next = np.zeros(u)
    dc_next = np.zeros(u)

    for t in reversed(range(n)):
        cache = caches[t]
        dh = dH[t] + dh_next
        do = dh * cache.tanh_c
        dc = dc_next + dh * cache.o * (1.0 - cache.tanh_c ** 2)

        da = dA[t]
        da[:u] = dc * cache.c_prev * cache.f * (1.0 - cache.f)
        da[u:2 * u] = dc * cache.c_tilde * cache.i * (1.0 - cache.i)
        da[2 * u:3 * u] = dc * cache.i * (1.0 - cache.c_tilde ** 2)
        da[3 * u:] = do * cache.o * (1.0 - cache.o)

        dc_next = dc * cache.f
        dh_next = U.T @ da
        H_prev[t] = cache.h_prev

    dV = dA.T @ X_seq
    dU = dA.T @ H_prev
    db = dA.sum(axis=0)

    grads = {}
    for index, gate in enumerate(GATES):
        block = slice(index * u, (index + 1) * u)
        grads[f"V{gate}"] = dV[block]
        grads[f"U{gate}"] = dU[block]
        grads[f"b{gate}"] = db[block]
    return grads, dA @ V
