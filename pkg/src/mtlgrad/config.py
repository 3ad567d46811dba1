"""Experiment configuration documents (JSON) and their validation."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .combiners import CombinerSpec
from .errors import InvalidInputError
from .problems import ExpressionProblem, Problem, mlp_synth, quadratic, toy_two_task
from .solvers import SolverSettings


class ConfigError(InvalidInputError):
    """A config document failed to parse or validate."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemConfig(_Strict):
    builtin: Optional[Literal["toy", "quadratic", "mlp-synth"]] = None
    expressions: Optional[list[str]] = None
    dim: Optional[int] = Field(default=None, ge=1)
    anchors: Optional[list[list[float]]] = None
    seed: int = 0
    width: int = Field(default=8, ge=1)
    n: int = Field(default=64, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _from_name(cls, data):
        if isinstance(data, str):
            return {"builtin": data}
        return data

    @model_validator(mode="after")
    def _one_source(self):
        if (self.builtin is None) == (self.expressions is None):
            raise ValueError("give exactly one of 'builtin' or 'expressions'")
        if self.expressions is not None and self.dim is None:
            raise ValueError("'expressions' needs 'dim'")
        if self.builtin == "quadratic" and not self.anchors:
            raise ValueError("quadratic problem needs 'anchors'")
        return self

    def build(self) -> Problem:
        if self.expressions is not None:
            return ExpressionProblem(self.expressions, self.dim)
        if self.builtin == "toy":
            return toy_two_task()
        if self.builtin == "quadratic":
            return quadratic(self.anchors)
        return mlp_synth(seed=self.seed, width=self.width, n=self.n)


class SolverConfig(_Strict):
    max_iters: int = Field(default=200, ge=1)
    tol: float = Field(default=1e-10, gt=0)
    zero_eps: float = Field(default=1e-12, gt=0)


class MethodConfig(_Strict):
    method: Literal["mean", "mgda", "pcgrad", "cagrad", "cagrad_fast"] = "mean"
    c: float = Field(default=0.0, ge=0)
    subsample: Optional[int] = Field(default=None, ge=1)
    solver: SolverConfig = SolverConfig()

    def build(self) -> CombinerSpec:
        return CombinerSpec(self.method, self.c, self.subsample, SolverSettings(**self.solver.model_dump()))


class StepperConfig(_Strict):
    kind: Literal["fixed", "adam", "decaying"] = "adam"
    lr: Optional[float] = Field(default=None, gt=0)
    H: Optional[float] = Field(default=None, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)

    @model_validator(mode="after")
    def _needs_lr(self):
        if self.kind in ("fixed", "adam") and self.lr is None:
            raise ValueError(f"stepper '{self.kind}' needs 'lr'")
        return self


class ExperimentConfig(_Strict):
    problem: ProblemConfig
    method: MethodConfig = MethodConfig()
    stepper: StepperConfig
    steps: int = Field(ge=1)
    inits: Optional[list[list[float]]] = None
    seed: int = 0
    log_every: int = Field(default=1, ge=1)
    output_path: Optional[str] = None
    converge_threshold: float = Field(default=1e-2, gt=0)
    stall_threshold: float = Field(default=0.1, gt=0)

    @field_validator("inits")
    @classmethod
    def _nonempty(cls, v):
        if v is not None and len(v) == 0:
            raise ValueError("inits must be nonempty")
        return v

    @model_validator(mode="after")
    def _decaying_needs_c(self):
        if self.stepper.kind == "decaying":
            if self.method.method not in ("cagrad", "cagrad_fast") or not self.method.c > 1:
                raise ValueError("decaying stepper needs a cagrad method with c > 1")
        return self


def _line_of(text, loc):
    """Best-effort line number of the first key named in a pydantic error location."""
    for key in reversed([p for p in loc if isinstance(p, str)]):
        needle = f'"{key}"'
        idx = text.find(needle)
        if idx >= 0:
            return text.count("\n", 0, idx) + 1
    return None


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            field = ".".join(str(p) for p in err["loc"]) or "<root>"
            line = _line_of(text, err["loc"])
            where = f"line {line}, " if line else ""
            lines.append(f"{where}field '{field}': {err['msg']}")
        raise ConfigError("; ".join(lines)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def default_toy_config() -> ExperimentConfig:
    """The committed toy-study configuration (calibrated stepper settings)."""
    text = resources.files("mtlgrad").joinpath("configs/toy.json").read_text()
    return parse_config(text)
