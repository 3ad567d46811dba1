"""Randomized property suites checked against independent oracles.

Each suite draws its instances from one seeded stream and returns a
:class:`Check`; ``run_all`` is what ``mtlgrad verify`` prints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .combiners import combine_cagrad, combine_cagrad_fast, combine_mean, combine_mgda, combine_pcgrad
from .exprdsl import evaluate, grad as dsl_grad, parse
from .gradcore import TaskGradients
from .problems import TOY_EXPRESSIONS, quadratic, toy_two_task
from .solvers import pareto_stationarity, primal_oracle, project_to_simplex


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _rows(rng, K, m):
    return TaskGradients(rng.standard_normal((K, m)))


def check_duality(rng, trials, tol_scale=1.0):
    """Dual value agrees with a brute-force primal search; d stays in the ball."""
    worst = 0.0
    ball = 0.0
    for _ in range(trials):
        g = _rows(rng, 2, 2)
        g0n = float(np.linalg.norm(g.g0))
        for c in (0.2, 0.5, 0.8):
            res = combine_cagrad(g, c)
            _, val = primal_oracle(g, c, 361)
            worst = max(worst, abs(val - res.dual_value) / (1.0 + g0n * g0n))
            ball = max(ball, res.constraint_norm / (c * g0n) - 1.0 if g0n > 0 else 0.0)
    ok = worst <= 1e-3 * tol_scale and ball <= 1e-9 * tol_scale
    return Check("strong-duality", ok, f"max gap {worst:.3e}, max ball excess {ball:.3e}")


def check_descent(rng, trials, tol_scale=1.0):
    """Per-step decrease L0(t+1) - L0(t) <= -(a/2)(1-c^2)|g0|^2 with a = 1/H."""
    worst = -math.inf
    for _ in range(trials):
        K, m = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        p = quadratic(rng.standard_normal((K, m)))
        c = float(rng.uniform(0.0, 0.99))
        theta = rng.normal(scale=3.0, size=m)
        for _ in range(20):
            losses, g, _ = p.evaluate(theta)
            nxt = theta - combine_cagrad(g, c).d
            drop = float(np.mean(p.losses(nxt)) - np.mean(losses))
            bound = -0.5 * (1 - c * c) * float(g.g0 @ g.g0)
            worst = max(worst, drop - bound)
            theta = nxt
    return Check("descent-inequality", worst <= 1e-10 * tol_scale, f"max violation {worst:.3e}")


def check_limits(rng, trials, tol_scale=1.0):
    """c = 0 is GD bit for bit; large c points along the MGDA direction."""
    p = toy_two_task()
    same = True
    worst_cos = 1.0
    hits = 0
    while hits < trials:
        g = p.gradients(rng.uniform(-10, 10, 2))
        same &= combine_cagrad(g, 0.0).d.tobytes() == combine_mean(g).d.tobytes()
        if pareto_stationarity(g) <= 0.05:
            continue
        a, b = combine_cagrad(g, 100.0).d, combine_mgda(g).d
        worst_cos = min(worst_cos, float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
        hits += 1
    ok = same and worst_cos >= 1.0 - 0.01 * tol_scale
    return Check("gd-and-mgda-limits", ok, f"c=0 identical {same}, min cosine {worst_cos:.6f}")


def check_fast(rng, trials, tol_scale=1.0):
    """Full subsets reproduce CAGrad exactly; subsets keep the ball constraint."""
    same = True
    excess = 0.0
    for _ in range(trials):
        K = int(rng.integers(2, 6))
        g = _rows(rng, K, 3)
        c = float(rng.uniform(0.1, 2.0))
        same &= combine_cagrad_fast(g, c, K, rng).d.tobytes() == combine_cagrad(g, c).d.tobytes()
        res = combine_cagrad_fast(g, c, int(rng.integers(1, K + 1)), rng)
        excess = max(excess, res.constraint_norm / (c * float(np.linalg.norm(g.g0))) - 1.0)
    ok = same and excess <= 1e-9 * tol_scale
    return Check("cagrad-fast", ok, f"full subset identical {same}, max ball excess {excess:.3e}")


def check_pcgrad(rng, trials, tol_scale=1.0):
    """Two-task PCGrad: order-free, and projections remove the conflict."""
    worst = 0.0
    invariant = True
    for _ in range(trials):
        g = _rows(rng, 2, 3)
        a = combine_pcgrad(g, rng)
        invariant &= a.d.tobytes() == combine_pcgrad(g, rng).d.tobytes()
        pr = a.extras["projected"]
        worst = min(worst, float(pr[0] @ g.rows[1]), float(pr[1] @ g.rows[0]))
    ok = invariant and worst >= -1e-12 * tol_scale
    return Check("pcgrad-projection", ok, f"order invariant {invariant}, min inner product {worst:.3e}")


def check_simplex(rng, trials, tol_scale=1.0):
    """Projection lands on the simplex and beats random simplex points."""
    worst = 0.0
    for _ in range(trials):
        v = rng.normal(scale=3.0, size=int(rng.integers(1, 8)))
        w = project_to_simplex(v).w
        dist = float(np.sum((w - v) ** 2))
        for _ in range(20):
            u = rng.dirichlet(np.ones(v.size))
            worst = max(worst, dist - float(np.sum((u - v) ** 2)))
    return Check("simplex-projection", worst <= 1e-12 * tol_scale, f"max excess distance {worst:.3e}")


def check_derivatives(rng, trials, tol_scale=1.0):
    """Forward-mode toy gradients against central differences."""
    trees = [parse(t) for t in TOY_EXPRESSIONS]
    worst = 0.0
    h = 1e-6
    for _ in range(trials):
        x = rng.uniform(-10, 10, 2)
        for tree in trees:
            an = dsl_grad(tree, x)
            fd = np.empty(2)
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fd[i] = (evaluate(tree, x + e) - evaluate(tree, x - e)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(an - fd) / np.maximum(np.abs(fd), 1.0))))
    return Check("forward-mode-vs-fd", worst <= 1e-5 * tol_scale, f"max relative error {worst:.3e}")


SUITES = (check_duality, check_descent, check_limits, check_fast, check_pcgrad, check_simplex, check_derivatives)


def run_all(seed=0, trials=100, tol_scale=1.0) -> list[Check]:
    """Every suite gets its own stream derived from ``seed``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seqs = np.random.SeedSequence(seed).spawn(len(SUITES))
    return [suite(np.random.default_rng(sq), trials, tol_scale) for suite, sq in zip(SUITES, seqs)]
