"""Update-vector constructors: mean (GD), MGDA, PCGrad, CAGrad, CAGrad-Fast."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .gradcore import CombineResult, TaskGradients, gram_and_bias
from .solvers import DEFAULT_SETTINGS, SolverSettings, solve_cagrad_weights, solve_minnorm_weights

METHODS = ("mean", "mgda", "pcgrad", "cagrad", "cagrad_fast")


@dataclass(frozen=True)
class CombinerSpec:
    method: str = "mean"
    c: float = 0.0
    subsample: int | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.c >= 0:
            raise InvalidInputError(f"c must be >= 0, got {self.c}")
        if self.method == "cagrad_fast" and self.subsample is None:
            raise InvalidInputError("cagrad_fast needs a subsample size")
        if self.subsample is not None and self.subsample < 1:
            raise InvalidInputError("subsample must be >= 1")

    @property
    def pareto_mode(self) -> bool:
        """True when c >= 1: only Pareto-stationarity of fixed points is guaranteed."""
        return self.method in ("cagrad", "cagrad_fast") and self.c >= 1.0

    def __call__(self, g: TaskGradients, rng=None) -> CombineResult:
        return combine(self, g, rng)


def combine(spec: CombinerSpec, g: TaskGradients, rng=None) -> CombineResult:
    if spec.method == "mean":
        return combine_mean(g)
    if spec.method == "mgda":
        return combine_mgda(g, spec.solver)
    if spec.method == "pcgrad":
        return combine_pcgrad(g, _need_rng(rng))
    if spec.method == "cagrad":
        return combine_cagrad(g, spec.c, spec.solver)
    return combine_cagrad_fast(g, spec.c, spec.subsample, _need_rng(rng), spec.solver)


def _need_rng(rng):
    if rng is None:
        raise InvalidInputError("this method needs a seeded random stream")
    return rng


def _norm(v):
    return math.sqrt(float(v @ v))


def _result(g, d, **kw):
    return CombineResult(d=d, grads=g, **kw)


def combine_mean(g: TaskGradients) -> CombineResult:
    return _result(g, g.g0.copy())


def combine_mgda(g: TaskGradients, s: SolverSettings = DEFAULT_SETTINGS) -> CombineResult:
    M, _ = gram_and_bias(g)
    weights = solve_minnorm_weights(M, s)
    d = weights.w @ g.rows
    norm = _norm(d)
    return _result(g, d, weights=weights, gw_norm=norm, extras={"pareto_stationarity": norm})


def combine_pcgrad(g: TaskGradients, rng: np.random.Generator) -> CombineResult:
    """Project each task gradient off every conflicting gradient, then average.

    Every task gets its own random visiting order over the other tasks,
    drawn from ``rng``; zero-norm gradients are skipped.
    """
    K = g.K
    rows = g.rows
    sq = np.einsum("ij,ij->i", rows, rows)
    projected = rows.copy()
    for i in range(K):
        gi = projected[i]
        others = [j for j in range(K) if j != i]
        # one other task: the only permutation is the identity, nothing to draw
        order = others if len(others) == 1 else rng.permutation(others)
        for j in order:
            if sq[j] == 0.0:
                continue
            dot = float(gi @ rows[j])
            if dot < 0.0:
                gi -= (dot / sq[j]) * rows[j]
    d = np.add.reduce(projected, axis=0) / K
    return _result(g, d, extras={"projected": projected})


def _cagrad_core(rows, g0, c, s, g):
    """Solve the dual on ``rows`` anchored at ``g0``; diagnostics against ``g``."""
    g0_norm = _norm(g0)
    M = rows @ rows.T
    b = rows @ g0
    weights, lam, f_star = solve_cagrad_weights(M, b, g0_norm, c, s)
    sqrt_phi = c * g0_norm
    gw = weights.w @ rows
    gw_norm = _norm(gw)
    if sqrt_phi == 0.0 or gw_norm <= s.zero_eps:
        d = g0.copy()
        lam = math.inf
    else:
        d = g0 + (sqrt_phi / gw_norm) * gw
    return _result(
        g, d, weights=weights, lambda_star=lam, phi=sqrt_phi * sqrt_phi,
        dual_value=f_star, gw_norm=gw_norm,
    )


def combine_cagrad(g: TaskGradients, c: float, s: SolverSettings = DEFAULT_SETTINGS) -> CombineResult:
    """Best worst-case improvement within the ball ``|d - g0| <= c|g0|``.

    ``c = 0`` returns the average gradient untouched.
    """
    if not c >= 0:
        raise InvalidInputError(f"c must be >= 0, got {c}")
    return _cagrad_core(g.rows, g.g0, c, s, g)


def subsample_pseudo_rows(g: TaskGradients, subset) -> np.ndarray:
    """Sampled rows plus one row standing in for the unsampled tasks."""
    subset = sorted(int(i) for i in subset)
    rows = g.rows[subset]
    rest = g.K - len(subset)
    if rest == 0:
        return g.rows
    complement = (g.K * g.g0 - rows.sum(axis=0)) / rest
    return np.vstack([rows, complement])


def combine_cagrad_fast(g: TaskGradients, c: float, subsample: int, rng: np.random.Generator,
                        s: SolverSettings = DEFAULT_SETTINGS) -> CombineResult:
    """CAGrad on a uniformly drawn task subset of size ``subsample``.

    The ball stays centered on the true average gradient. With
    ``subsample == K`` this is exactly :func:`combine_cagrad` and draws
    nothing from ``rng``.
    """
    if not 1 <= subsample <= g.K:
        raise InvalidInputError(f"subsample must be in [1, {g.K}], got {subsample}")
    if subsample == g.K:
        return combine_cagrad(g, c, s)
    subset = rng.choice(g.K, size=subsample, replace=False)
    res = _cagrad_core(subsample_pseudo_rows(g, subset), g.g0, c, s, g)
    res.extras["subset"] = sorted(int(i) for i in subset)
    return res
