"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (visible with ``pytest -s``)
before asserting.
"""

import io
import math
import time

import numpy as np
import pytest

from mtlgrad.cli import main as cli_main
from mtlgrad.combiners import combine_cagrad, combine_cagrad_fast, combine_mgda, combine_pcgrad
from mtlgrad.config import ExperimentConfig, default_toy_config
from mtlgrad.exprdsl import evaluate, grad, parse
from mtlgrad.gradcore import TaskGradients
from mtlgrad.harness import relative_drop, run_experiment, run_single, summarize
from mtlgrad.problems import TOY_EXPRESSIONS, mlp_synth, toy_two_task
from mtlgrad.solvers import pareto_stationarity, primal_oracle


def report(number, title, passed, detail):
    print(f"\n{'PASS' if passed else 'FAIL'} criterion {number} ({title}): {detail}")
    assert passed, detail


def with_method(cfg, method, c=0.0):
    return cfg.model_copy(update={"method": cfg.method.model_copy(update={"method": method, "c": c})})


def test_criterion_01_toy_study():
    base = default_toy_config()
    start = time.perf_counter()
    finals = {}
    for name, method, c in (("gd", "mean", 0.0), ("mgda", "mgda", 0.0), ("pcgrad", "pcgrad", 0.0),
                            ("cagrad", "cagrad", 0.5)):
        cfg = with_method(base, method, c)
        finals[name] = [summarize(t, cfg).final_pareto for t in run_experiment(cfg)]
    elapsed = time.perf_counter() - start
    stalled = sum(p > 0.1 for p in finals["gd"])
    others_ok = all(p <= 1e-2 for k in ("mgda", "pcgrad", "cagrad") for p in finals[k])
    detail = (f"GD stalled {stalled}/5 {[f'{p:.3g}' for p in finals['gd']]}; "
              f"others max pareto {max(max(finals[k]) for k in ('mgda', 'pcgrad', 'cagrad')):.3g}; "
              f"{elapsed:.1f}s")
    report(1, "toy study", stalled == 2 and others_ok and elapsed <= 60.0, detail)


def test_criterion_02_gd_recovery():
    base = default_toy_config()
    gd = run_experiment(with_method(base, "mean"))
    ca = run_experiment(with_method(base, "cagrad", 0.0))
    same = all(a.to_csv() == b.to_csv() and a.theta == b.theta and a.final_losses == b.final_losses
               for a, b in zip(gd, ca))
    report(2, "c=0 is GD", same and len(gd) == 5, f"5 inits x {base.steps} steps bit-identical: {same}")


def test_criterion_03_mgda_limit():
    p = toy_two_task()
    rng = np.random.default_rng(3)
    cosines = []
    while len(cosines) < 100:
        g = p.gradients(rng.uniform(-10, 10, 2))
        if pareto_stationarity(g) <= 0.05:
            continue
        a, b = combine_cagrad(g, 100.0).d, combine_mgda(g).d
        cosines.append(float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
    report(3, "MGDA limit", min(cosines) >= 0.99, f"min cosine over 100 points {min(cosines):.6f}")


def test_criterion_04_strong_duality():
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    worst_gap, worst_ball = 0.0, 0.0
    for _ in range(200):
        g = TaskGradients(rng.standard_normal((2, 2)))
        n0 = float(np.linalg.norm(g.g0))
        for c in (0.2, 0.5, 0.8):
            res = combine_cagrad(g, c)
            _, val = primal_oracle(g, c, 361)
            worst_gap = max(worst_gap, abs(val - res.dual_value) / (1 + n0 * n0))
            worst_ball = max(worst_ball, res.constraint_norm - c * n0 * (1 + 1e-9))
    elapsed = time.perf_counter() - start
    ok = worst_gap <= 1e-3 and worst_ball <= 0.0 and elapsed <= 30.0
    report(4, "strong duality", ok, f"max scaled gap {worst_gap:.2e}, ball excess {worst_ball:.1e}, {elapsed:.1f}s")


QUAD = {"problem": {"builtin": "quadratic", "anchors": [[1, 0], [-1, 0]]}, "inits": [[3.0, 4.0]]}


def test_criterion_05_descent_theorem():
    cfg = ExperimentConfig.model_validate({**QUAD, "method": {"method": "cagrad", "c": 0.5},
                                           "stepper": {"kind": "fixed", "lr": 1.0}, "steps": 200})
    tr = run_single(cfg, 0)
    total = sum(n * n for n in tr.g0_norm)
    per_step = max(tr.avg_loss[t + 1] - tr.avg_loss[t] + 0.5 * 0.75 * tr.g0_norm[t] ** 2
                   for t in range(len(tr.steps) - 1))
    dist = float(np.linalg.norm(tr.theta[-1]))
    ok = total <= 33.34 and per_step <= 1e-10 and dist <= 1e-6
    report(5, "descent theorem", ok, f"sum |g0|^2 = {total:.6f}, max step slack {per_step:.1e}, |theta_T| = {dist:.1e}")


def test_criterion_06_decaying_step_theorem():
    # Expected to fail: the stated bound does not hold for the equality step
    # size (analysis in the decisions ledger). Kept at its stated tolerance.
    c = 2.0
    cfg = ExperimentConfig.model_validate({**QUAD, "method": {"method": "cagrad", "c": c},
                                           "stepper": {"kind": "decaying"}, "steps": 1})
    with np.errstate(over="ignore", invalid="ignore"):
        tr = run_single(cfg, 0)
    lhs = sum(a * g * w for a, g, w in zip(tr.alpha[:-1], tr.g0_norm[:-1], tr.gw_norm[:-1]))
    rhs = 2 * min(np.subtract(tr.losses[0], tr.losses[-1])) / (c - 1)
    report(6, "decaying-step theorem", lhs <= rhs + 1e-8, f"T=1: lhs {lhs:.6g} vs bound {rhs:.6g}")


def test_criterion_07_unit_goldens():
    w = combine_mgda(TaskGradients([(2, 0), (0, 1)])).weights.w
    d_pc = combine_pcgrad(TaskGradients([(1, 0), (-1, 1)]), np.random.default_rng(0)).d
    g = TaskGradients([(1, 0), (0, 1)])
    d_ca = combine_cagrad(g, 0.5).d
    errs = (float(np.max(np.abs(w - (0.2, 0.8)))), float(np.max(np.abs(d_pc - (0.25, 0.75)))),
            float(np.max(np.abs(d_ca - 1.5 * g.g0))))
    ok = errs[0] <= 1e-9 and errs[1] <= 1e-12 and errs[2] <= 1e-9
    report(7, "unit goldens", ok, f"errors mgda {errs[0]:.1e}, pcgrad {errs[1]:.1e}, cagrad {errs[2]:.1e}")


def test_criterion_08_fast_consistency():
    rng = np.random.default_rng(8)
    identical, excess = True, -math.inf
    for _ in range(200):
        K = int(rng.integers(2, 7))
        g = TaskGradients(rng.standard_normal((K, int(rng.integers(1, 6)))))
        c = float(rng.uniform(0.05, 3.0))
        full = combine_cagrad_fast(g, c, K, rng)
        identical &= full.d.tobytes() == combine_cagrad(g, c).d.tobytes()
        for s in range(1, K):
            res = combine_cagrad_fast(g, c, s, rng)
            excess = max(excess, res.constraint_norm - c * float(np.linalg.norm(g.g0)) * (1 + 1e-9))
    report(8, "CAGrad-Fast consistency", identical and excess <= 0.0,
           f"|S|=K bit-identical {identical}, max ball excess {excess:.1e}")


def test_criterion_09_differentiation():
    trees = [parse(t) for t in TOY_EXPRESSIONS]
    rng = np.random.default_rng(9)
    h = 1e-6
    worst, used = 0.0, 0
    while used < 100:
        x = rng.uniform(-10, 10, 2)
        # smooth points only: keep the max/abs switches away from the stencil
        if abs(x[1]) < 1e-3:
            continue
        used += 1
        for tree in trees:
            an = grad(tree, x)
            for i in range(2):
                e = np.zeros(2)
                e[i] = h
                fd = (evaluate(tree, x + e) - evaluate(tree, x - e)) / (2 * h)
                worst = max(worst, abs(an[i] - fd) / max(abs(fd), 1.0))
    p = mlp_synth(seed=0)
    theta = p.default_inits()[0] + np.random.default_rng(1).normal(scale=0.1, size=p.dim)
    _, g, head = p.evaluate(theta)
    an = np.concatenate([g.rows.ravel(), head])
    fd = []
    for k in range(p.tasks):
        for i in range(p.shared_dim):
            e = np.zeros(p.dim)
            e[i] = h
            fd.append((p.losses(theta + e)[k] - p.losses(theta - e)[k]) / (2 * h))
    for k in range(p.tasks):
        lo = p.shared_dim + k * (p.width + 1)
        for i in range(lo, lo + p.width + 1):
            e = np.zeros(p.dim)
            e[i] = h
            fd.append((p.losses(theta + e)[k] - p.losses(theta - e)[k]) / (2 * h))
    fd = np.array(fd)
    mlp_err = float(np.max(np.abs(an - fd) / np.maximum(np.abs(fd), 1.0)))
    report(9, "differentiation", worst <= 1e-5 and mlp_err <= 1e-5,
           f"DSL max rel err {worst:.1e} at 100 points, MLP max rel err {mlp_err:.1e}")


def test_criterion_10_relative_drop():
    independent = [38.30, 63.76, 0.6754, 0.2780, 25.01, 19.21, 30.14, 57.20, 69.15]
    cagrad = [39.79, 65.49, 0.5486, 0.2250, 26.31, 21.58, 25.61, 52.36, 65.58]
    mgda = [30.47, 59.90, 0.6070, 0.2555, 24.88, 19.45, 29.18, 56.88, 69.36]
    higher = [True, True, False, False, False, False, True, True, True]
    a = relative_drop(cagrad, independent, higher)
    b = relative_drop(mgda, independent, higher)
    report(10, "delta-m arithmetic", abs(a - 0.20) <= 0.02 and abs(b - 1.38) <= 0.02,
           f"CAGrad {a:.4f} (0.20), MGDA {b:.4f} (1.38)")


def _cli(argv):
    out = io.StringIO()
    code = cli_main(argv, out)
    return code, out.getvalue()


def test_criterion_11_determinism(tmp_path):
    runs = [_cli(["verify", "--seed", "0", "--trials", "50"]) for _ in range(2)]
    verify_same = runs[0] == runs[1] and runs[0][0] == 0
    outs = []
    for name, jobs in (("a", "1"), ("b", "2")):
        code, _ = _cli(["toy", "--method", "pcgrad", "--seed", "7", "--jobs", jobs, "--out", str(tmp_path / name)])
        outs.append((code, {p.name: p.read_bytes() for p in sorted((tmp_path / name).iterdir())}))
    toy_same = outs[0] == outs[1] and outs[0][0] == 0 and len(outs[0][1]) == 6
    report(11, "determinism", verify_same and toy_same,
           f"verify repeated identical {verify_same}; toy jobs=1 vs jobs=2 byte-identical {toy_same}")
