"""Run (problem, combiner, stepper) experiments and record trajectories."""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import DomainError, InvalidInputError
from .optim import AdamState, adam_step, decaying_step_size, sgd_step
from .solvers import pareto_stationarity


@dataclass
class Trajectory:
    """Logged rows of one run from one initial point."""

    init_index: int
    init: list
    tasks: int
    steps: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    avg_loss: list = field(default_factory=list)
    g0_norm: list = field(default_factory=list)
    pareto: list = field(default_factory=list)
    min_dot: list = field(default_factory=list)
    constraint_norm: list = field(default_factory=list)
    # not written to CSV; used by the step-size theorem checks
    alpha: list = field(default_factory=list)
    gw_norm: list = field(default_factory=list)
    final_step: int = 0
    final_losses: list = field(default_factory=list)
    final_pareto: float | None = None
    diverged: bool = False
    diverged_step: int | None = None
    error: str | None = None
    wall_time: float = 0.0

    def header(self):
        m = len(self.init)
        return (["step"] + [f"theta_{i}" for i in range(1, m + 1)]
                + [f"L_{k}" for k in range(1, self.tasks + 1)]
                + ["L0", "g0_norm", "pareto_stat", "min_dot", "constraint_norm"])

    def rows(self):
        for i, step in enumerate(self.steps):
            yield ([step] + list(self.theta[i]) + list(self.losses[i])
                   + [self.avg_loss[i], self.g0_norm[i], self.pareto[i],
                      self.min_dot[i], self.constraint_norm[i]])

    def to_csv(self) -> str:
        lines = [",".join(self.header())]
        for row in self.rows():
            lines.append(",".join(str(row[0]) if i == 0 else repr(float(x)) for i, x in enumerate(row)))
        return "\n".join(lines) + "\n"


@dataclass
class SummaryStats:
    init_index: int
    init: list
    final_losses: list
    final_pareto: float
    converged: bool
    stalled: bool
    steps_to_converge: int | None
    diverged: bool
    wall_time: float
    c: float | None = None

    def to_dict(self, timing=False):
        out = {
            "init_index": self.init_index,
            "init": self.init,
            "final_losses": self.final_losses,
            "final_pareto": self.final_pareto,
            "converged": self.converged,
            "stalled": self.stalled,
            "steps_to_converge": self.steps_to_converge,
            "diverged": self.diverged,
        }
        if self.c is not None:
            out = {"c": self.c, **out}
        if timing:
            out["wall_time"] = self.wall_time
        return out


def run_rng(seed: int, init_index: int) -> np.random.Generator:
    """Independent stream per (seed, init) pair."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(init_index,)))


def resolve_inits(cfg: ExperimentConfig, problem):
    inits = cfg.inits if cfg.inits is not None else [list(map(float, p)) for p in problem.default_inits()]
    if not inits:
        raise InvalidInputError(f"problem {problem.name} has no default initial points; give 'inits'")
    for p in inits:
        if len(p) != problem.dim:
            raise InvalidInputError(f"initial point has {len(p)} entries, problem needs {problem.dim}")
    return inits


def run_single(cfg: ExperimentConfig, init_index: int, problem=None, init=None) -> Trajectory:
    """Run one trajectory. Deterministic in (cfg, init_index)."""
    problem = problem if problem is not None else cfg.problem.build()
    if init is None:
        init = resolve_inits(cfg, problem)[init_index]
    combiner = cfg.method.build()
    stepper = cfg.stepper
    rng = run_rng(cfg.seed, init_index)
    adam = AdamState(problem.dim, stepper.beta1, stepper.beta2, stepper.eps) if stepper.kind == "adam" else None
    H = stepper.H if stepper.H is not None else problem.lipschitz
    if stepper.kind == "decaying" and H is None:
        raise InvalidInputError("decaying stepper needs H (config or problem metadata)")
    solver = combiner.solver
    shared = problem.shared_dim

    traj = Trajectory(init_index=init_index, init=[float(x) for x in init], tasks=problem.tasks)
    theta = np.array(init, dtype=np.float64)
    steps, log_every = cfg.steps, cfg.log_every
    decaying = stepper.kind == "decaying"
    use_adam = stepper.kind == "adam"
    split_heads = shared != problem.dim
    start = time.perf_counter()
    for t in range(steps + 1):
        try:
            # evaluate() rejects non-finite parameters
            losses, g, head = problem.evaluate(theta)
            loss_list = losses.tolist()
            if not all(map(math.isfinite, loss_list)):
                raise InvalidInputError("non-finite loss")
            res = combiner(g, rng)
        except (DomainError, InvalidInputError, FloatingPointError) as exc:
            traj.diverged, traj.diverged_step, traj.error = True, t, str(exc)
            break
        logged = t % log_every == 0
        g0_norm = math.sqrt(float(g.g0 @ g.g0)) if (logged or decaying) else math.nan

        if not decaying:
            alpha = stepper.lr
        elif g0_norm == 0.0:
            alpha = 0.0
        else:
            alpha = decaying_step_size(combiner.c, H, g0_norm, res.gw_norm)

        if logged:
            traj.steps.append(t)
            traj.theta.append(theta.tolist())
            traj.losses.append(loss_list)
            traj.avg_loss.append(float(np.mean(losses)))
            traj.g0_norm.append(g0_norm)
            traj.pareto.append(pareto_stationarity(g, solver))
            traj.min_dot.append(res.min_dot)
            traj.constraint_norm.append(res.constraint_norm)
            traj.alpha.append(alpha)
            traj.gw_norm.append(res.gw_norm)
        traj.final_step = t
        traj.final_losses = loss_list
        traj.final_pareto = traj.pareto[-1] if logged else None
        if t == steps:
            if traj.final_pareto is None:
                traj.final_pareto = pareto_stationarity(g, solver)
            break

        d = np.concatenate([res.d, head]) if split_heads else res.d
        if use_adam:
            theta = adam_step(adam, theta, d, alpha)
        elif alpha > 0.0:
            theta = sgd_step(theta, d, alpha)
    traj.wall_time = time.perf_counter() - start
    return traj


def _run_from_dict(args):
    cfg_dict, index = args
    return run_single(ExperimentConfig.model_validate(cfg_dict), index)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[Trajectory]:
    """One trajectory per initial point, in init order.

    Results do not depend on ``jobs``: every run owns its random stream and
    stepper state.
    """
    problem = cfg.problem.build()
    inits = resolve_inits(cfg, problem)
    if jobs <= 1 or len(inits) == 1:
        return [run_single(cfg, i, problem, p) for i, p in enumerate(inits)]
    payload = cfg.model_dump()
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_from_dict, [(payload, i) for i in range(len(inits))]))


def summarize(traj: Trajectory, cfg: ExperimentConfig, c=None) -> SummaryStats:
    if traj.diverged:
        final_pareto = traj.pareto[-1] if traj.pareto else math.nan
    else:
        final_pareto = traj.final_pareto
    converged = (not traj.diverged) and final_pareto <= cfg.converge_threshold
    steps_to = None
    if converged:
        # first logged step after which the run stays within the threshold
        steps_to = traj.steps[-1]
        for step, p in zip(reversed(traj.steps), reversed(traj.pareto)):
            if p > cfg.converge_threshold:
                break
            steps_to = step
    return SummaryStats(
        init_index=traj.init_index,
        init=traj.init,
        final_losses=traj.final_losses,
        final_pareto=final_pareto,
        converged=converged,
        stalled=(not traj.diverged) and final_pareto > cfg.stall_threshold,
        steps_to_converge=steps_to,
        diverged=traj.diverged,
        wall_time=traj.wall_time,
        c=c,
    )


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectories(trajs, out_dir):
    out_dir = Path(out_dir)
    paths = []
    for traj in trajs:
        path = out_dir / f"run_{traj.init_index}.csv"
        _atomic_write(path, traj.to_csv())
        paths.append(path)
    return paths


def summary_document(cfg: ExperimentConfig, rows, timing=False, **extra) -> dict:
    return {
        "problem": cfg.problem.model_dump(exclude_none=True),
        "method": cfg.method.model_dump(exclude_none=True),
        "stepper": cfg.stepper.model_dump(exclude_none=True),
        "steps": cfg.steps,
        "seed": cfg.seed,
        "converge_threshold": cfg.converge_threshold,
        "stall_threshold": cfg.stall_threshold,
        **extra,
        "runs": [r.to_dict(timing) for r in rows],
    }


def write_summary(doc: dict, path):
    _atomic_write(Path(path), json.dumps(doc, indent=2) + "\n")


def sweep_c(cfg: ExperimentConfig, c_values, jobs: int = 1):
    """Re-run a CAGrad config for each ``c``; one summary row per (c, init).

    Returns ``(rows, trajectories_by_c)``.
    """
    if cfg.method.method not in ("cagrad", "cagrad_fast"):
        raise InvalidInputError("sweep_c needs a cagrad method")
    rows, by_c = [], {}
    for c in c_values:
        sub = cfg.model_copy(update={"method": cfg.method.model_copy(update={"c": float(c)})})
        trajs = run_experiment(sub, jobs)
        by_c[float(c)] = trajs
        rows.extend(summarize(t, sub, c=float(c)) for t in trajs)
    return rows, by_c


def relative_drop(method_metrics, baseline_metrics, higher_better) -> float:
    """Average sign-adjusted relative change against a baseline, in percent.

    Positive means the method is worse than the baseline on average.
    """
    m = np.asarray(method_metrics, dtype=np.float64)
    b = np.asarray(baseline_metrics, dtype=np.float64)
    hb = np.asarray(higher_better, dtype=bool)
    if m.shape != b.shape or m.shape != hb.shape or m.ndim != 1 or m.size == 0:
        raise InvalidInputError("metric vectors must be nonempty and equally long")
    if np.any(b == 0):
        raise InvalidInputError("baseline metrics must be nonzero")
    sign = np.where(hb, -1.0, 1.0)
    return float(100.0 * np.mean(sign * (m - b) / b))
