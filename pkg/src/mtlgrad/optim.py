"""Parameter steppers that consume a combined update vector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


def sgd_step(theta, d, alpha):
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    return np.asarray(theta) - alpha * np.asarray(d)


@dataclass
class AdamState:
    """Moment estimates for one run. The update ``d`` stands in for a gradient."""

    dim: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: np.ndarray = field(init=False)
    second_moment: np.ndarray = field(init=False)
    step_count: int = field(init=False, default=0)

    def __post_init__(self):
        self.first_moment = np.zeros(self.dim)
        self.second_moment = np.zeros(self.dim)


_SCALAR_DIM = 8


def adam_step(state: AdamState, theta, d, alpha):
    if not alpha > 0:
        raise InvalidInputError("alpha must be positive")
    d = np.asarray(d, dtype=np.float64)
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    b1, b2, eps = state.beta1, state.beta2, state.eps
    # bias corrections applied as scalars: m_hat = m / bc1, v_hat = v / bc2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    if m.size <= _SCALAR_DIM:
        # the array expressions below, elementwise on Python floats in the
        # same order (bit-identical, far less per-call overhead)
        ms = [mi * b1 + (1.0 - b1) * di for mi, di in zip(m.tolist(), d.tolist())]
        vs = [vi * b2 + ((1.0 - b2) * di) * di for vi, di in zip(v.tolist(), d.tolist())]
        m[:] = ms
        v[:] = vs
        a = alpha / bc1
        return np.array([x - a * mi / (math.sqrt(vi / bc2) + eps)
                         for x, mi, vi in zip(np.asarray(theta, dtype=np.float64).tolist(), ms, vs)])
    m *= b1
    m += (1.0 - b1) * d
    v *= b2
    v += ((1.0 - b2) * d) * d
    return np.asarray(theta) - (alpha / bc1) * m / (np.sqrt(v / bc2) + eps)


def decaying_step_size(c, H, g0_norm, gw_norm):
    """Step ``|g_w*| / (H (c - 1) |g0|)`` for runs with ``c > 1``."""
    if not c > 1:
        raise InvalidInputError(f"decaying step needs c > 1, got {c}")
    if not H > 0:
        raise InvalidInputError("H must be positive")
    if not g0_norm > 0:
        raise InvalidInputError("g0_norm must be positive")
    return gw_norm / (H * (c - 1.0) * g0_norm)
