"""Per-task gradient containers and the quantities shared by every combiner."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError


def _as_finite_array(values, ndim, name):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} must be nonempty")
    # a finite total implies finite entries; the elementwise test only runs
    # when the total is not finite (bad entry or harmless overflow)
    if not math.isfinite(np.add.reduce(arr, axis=None)) and not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def param_vector(values) -> np.ndarray:
    """Validate and freeze a parameter vector (finite, length >= 1)."""
    return _as_finite_array(values, 1, "parameter vector")


class TaskGradients:
    """K task gradients over m shared parameters, with the average cached.

    The rows and the average are read-only arrays; instances never change
    after construction.
    """

    __slots__ = ("rows", "g0")

    def __init__(self, rows):
        rows = _as_finite_array(rows, 2, "gradient rows")
        g0 = np.add.reduce(rows, axis=0) / rows.shape[0]
        g0.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "g0", g0)

    @classmethod
    def _trusted(cls, rows: np.ndarray) -> "TaskGradients":
        """Wrap a fresh (K, m) float array the caller has already checked."""
        obj = object.__new__(cls)
        rows.setflags(write=False)
        g0 = np.add.reduce(rows, axis=0) / rows.shape[0]
        g0.setflags(write=False)
        object.__setattr__(obj, "rows", rows)
        object.__setattr__(obj, "g0", g0)
        return obj

    def __setattr__(self, name, value):
        raise AttributeError("TaskGradients is immutable")

    @property
    def K(self) -> int:
        return self.rows.shape[0]

    @property
    def m(self) -> int:
        return self.rows.shape[1]

    def __repr__(self):
        return f"TaskGradients(K={self.K}, m={self.m})"


@dataclass(frozen=True)
class SimplexWeights:
    w: np.ndarray

    def __post_init__(self):
        w = np.array(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise InvalidInputError("simplex weights must be a nonempty vector")
        if w.min() < 0 or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"weights {w} are not on the probability simplex")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def _trusted(cls, w: np.ndarray) -> "SimplexWeights":
        """Wrap weights that are on the simplex by construction (no checks)."""
        obj = object.__new__(cls)
        w.setflags(write=False)
        object.__setattr__(obj, "w", w)
        return obj


@dataclass(frozen=True)
class CombineResult:
    """An update vector plus the diagnostics the harness logs.

    ``min_dot`` and ``constraint_norm`` are computed from ``grads`` on first
    access (most optimizer steps never read them). ``lambda_star`` is
    ``math.inf`` when the weighted gradient vanished and the update fell
    back to the average gradient.
    """

    d: np.ndarray
    grads: TaskGradients = field(repr=False)
    weights: SimplexWeights | None = None
    lambda_star: float = 0.0
    phi: float = 0.0
    dual_value: float = math.nan
    gw_norm: float = math.nan
    extras: dict = field(default_factory=dict)

    @cached_property
    def min_dot(self) -> float:
        """``min_i <g_i, d>``; positive means every task improves to first order."""
        return float((self.grads.rows @ self.d).min())

    @cached_property
    def constraint_norm(self) -> float:
        """``|d - g0|``, the distance from the average gradient."""
        r = self.d - self.grads.g0
        return math.sqrt(float(r @ r))


def average_gradient(g: TaskGradients) -> np.ndarray:
    return g.g0


def conflict_measure(g: TaskGradients, d) -> float:
    """First-order conflict of update ``d``: ``-min_i <g_i, d>``.

    Negative values mean every task loss decreases along ``theta - alpha*d``
    for small ``alpha``.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (g.m,):
        raise InvalidInputError(f"direction has shape {d.shape}, expected ({g.m},)")
    return -float(np.min(g.rows @ d))


def gram_and_bias(g: TaskGradients, g0=None):
    """Return ``M = G G^T`` and ``b = G g0``.

    ``g0`` defaults to the cached average; pass another anchor when the rows
    are pseudo-gradients that do not average to it.
    """
    g0 = g.g0 if g0 is None else np.asarray(g0, dtype=np.float64)
    M = g.rows @ g.rows.T
    b = g.rows @ g0
    return M, b


def dual_objective(M, b, sqrt_phi, w) -> float:
    """``F(w) = w.b + sqrt(phi) * sqrt(w^T M w)`` evaluated from Gram data."""
    q = float(w @ M @ w)
    return float(w @ b) + sqrt_phi * math.sqrt(max(q, 0.0))
