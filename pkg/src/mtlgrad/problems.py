"""Multi-task problems exposing per-task losses and exact gradients.

A problem's parameter vector may end with task-private "head" parameters.
Combiners only ever see gradients of the first ``shared_dim`` entries; the
head part is updated with each task's own gradient.
"""

from __future__ import annotations

import math

import numpy as np

from . import exprdsl
from .errors import DomainError, InvalidInputError
from .gradcore import TaskGradients, param_vector

TOY_EXPRESSIONS = (
    "max(tanh(0.5*x2), 0) * (log(max(abs(0.5*(-x1-7) - tanh(-x2)), 0.000005)) + 6)"
    " + max(tanh(-0.5*x2), 0) * (((-x1+7)^2 + 0.1*(-x2-8)^2)/10 - 20)",
    "max(tanh(0.5*x2), 0) * (log(max(abs(0.5*(-x1+3) - tanh(-x2) + 2), 0.000005)) + 6)"
    " + max(tanh(-0.5*x2), 0) * (((-x1-7)^2 + 0.1*(-x2-8)^2)/10 - 20)",
)

TOY_INITS = ((-8.5, 7.5), (-8.5, 5.0), (0.0, 0.0), (9.0, 9.0), (10.0, -8.0))


class Problem:
    """Base class; subclasses implement :meth:`evaluate`."""

    name = "problem"
    dim: int
    tasks: int
    lipschitz: float | None = None
    optimum_value: float | None = None  # inf of the average loss, when known

    @property
    def shared_dim(self) -> int:
        return self.dim

    def evaluate(self, theta):
        """Return ``(losses, TaskGradients, head_gradient)`` at ``theta``."""
        raise NotImplementedError

    def losses(self, theta) -> np.ndarray:
        return self.evaluate(theta)[0]

    def gradients(self, theta) -> TaskGradients:
        return self.evaluate(theta)[1]

    def head_gradient(self, theta) -> np.ndarray:
        return self.evaluate(theta)[2]

    def default_inits(self):
        return []

    def _check(self, theta):
        theta = param_vector(theta)
        if theta.shape != (self.dim,):
            raise InvalidInputError(f"{self.name} expects {self.dim} parameters, got {theta.shape[0]}")
        return theta


_NO_HEADS = np.zeros(0)
_NO_HEADS.setflags(write=False)


class ExpressionProblem(Problem):
    """Task losses given as expression strings over ``x1..x{dim}``."""

    name = "expressions"

    def __init__(self, exprs, dim):
        if not exprs:
            raise InvalidInputError("need at least one task expression")
        self.expressions = tuple(exprs)
        self.dim = int(dim)
        self.tasks = len(exprs)
        trees = []
        for k, text in enumerate(self.expressions, start=1):
            try:
                tree = exprdsl.parse(text)
            except InvalidInputError as exc:
                raise type(exc)(f"task {k}: {exc}") from None
            if exprdsl.max_var_index(tree) > self.dim:
                raise InvalidInputError(
                    f"task {k}: uses x{exprdsl.max_var_index(tree)} but dim is {self.dim}")
            trees.append(tree)
        self.trees = tuple(trees)
        self._duals = [exprdsl.compile_dual(t, self.dim) for t in self.trees]

    def evaluate(self, theta):
        if type(theta) is np.ndarray and theta.dtype == np.float64 and theta.shape == (self.dim,):
            point = theta.tolist()  # fast path for the harness loop
            if not all(map(math.isfinite, point)):
                raise InvalidInputError("parameter vector contains non-finite entries")
        else:
            point = self._check(theta).tolist()
        values = []
        rows = []
        for k, fn in enumerate(self._duals, start=1):
            try:
                v, t = fn(point)
            except DomainError as exc:
                exc.task = k
                raise
            values.append(v)
            rows.append(t)
        if not all(map(math.isfinite, [x for t in rows for x in t])):
            raise InvalidInputError("gradient rows contain non-finite entries")
        return np.array(values), TaskGradients._trusted(np.array(rows, dtype=np.float64)), _NO_HEADS


class ToyProblem(ExpressionProblem):
    """The two-task landscape with a steep valley and a flat Pareto set."""

    name = "toy"

    def __init__(self):
        super().__init__(TOY_EXPRESSIONS, 2)

    def default_inits(self):
        return [np.array(p) for p in TOY_INITS]


class QuadraticProblem(Problem):
    """``L_i(theta) = |theta - a_i|^2 / 2``: 1-Lipschitz gradients, known optimum."""

    name = "quadratic"
    lipschitz = 1.0

    def __init__(self, anchors):
        anchors = np.array(anchors, dtype=np.float64)
        if anchors.ndim != 2 or anchors.shape[0] < 1:
            raise InvalidInputError("anchors must be a nonempty K x m array")
        self.anchors = anchors
        self.tasks, self.dim = anchors.shape
        mean = anchors.mean(axis=0)
        self.minimizer = mean
        self.optimum_value = 0.5 * float(np.mean(np.sum(anchors**2, axis=1))) - 0.5 * float(mean @ mean)

    def evaluate(self, theta):
        theta = self._check(theta)
        diff = theta - self.anchors
        return 0.5 * np.sum(diff * diff, axis=1), TaskGradients(diff), _NO_HEADS

    def default_inits(self):
        return [np.zeros(self.dim)]


class MlpProblem(Problem):
    """Shared tanh layer with one linear head per task, squared-error losses.

    Parameter layout: trunk weights ``W`` (width x inputs, row-major), trunk
    bias (width), then for each task its head weights (width) and bias (1).
    Task loss is ``0.5 * mean((head_k(z) - y_k)^2)``.
    """

    name = "mlp-synth"

    def __init__(self, X, Y, width, init=None):
        self.X = np.array(X, dtype=np.float64)
        Y = np.array(Y, dtype=np.float64)
        self.Y = Y.reshape(len(Y), -1)
        if self.X.ndim != 2 or self.X.shape[0] != self.Y.shape[0]:
            raise InvalidInputError("X and Y must have the same number of rows")
        if width < 1:
            raise InvalidInputError("width must be >= 1")
        self.width = int(width)
        self.n, self.inputs = self.X.shape
        self.tasks = self.Y.shape[1]
        self._shared = self.width * self.inputs + self.width
        self.dim = self._shared + self.tasks * (self.width + 1)
        self._init = None if init is None else param_vector(init)

    @property
    def shared_dim(self):
        return self._shared

    def unpack(self, theta):
        h, p = self.width, self.inputs
        W = theta[: h * p].reshape(h, p)
        b1 = theta[h * p: self._shared]
        heads = theta[self._shared:].reshape(self.tasks, h + 1)
        return W, b1, heads[:, :h], heads[:, h]

    def evaluate(self, theta):
        theta = self._check(theta)
        W, b1, V, c = self.unpack(theta)
        Z = np.tanh(self.X @ W.T + b1)
        R = Z @ V.T + c - self.Y  # n x K residuals
        losses = 0.5 * np.mean(R * R, axis=0)
        G = R / self.n
        rows = []
        for k in range(self.tasks):
            dA = np.outer(G[:, k], V[k]) * (1.0 - Z * Z)
            rows.append(np.concatenate([(dA.T @ self.X).ravel(), dA.sum(axis=0)]))
        head = np.concatenate([np.append(Z.T @ G[:, k], G[:, k].sum()) for k in range(self.tasks)])
        return losses, TaskGradients(rows), head

    def default_inits(self):
        return [] if self._init is None else [self._init.copy()]


def toy_two_task() -> ToyProblem:
    return ToyProblem()


def quadratic(anchors) -> QuadraticProblem:
    return QuadraticProblem(anchors)


def from_expressions(exprs, dim) -> ExpressionProblem:
    return ExpressionProblem(exprs, dim)


def mlp_synth(seed=0, width=8, n=64, inputs=3) -> MlpProblem:
    """Two regression tasks, sine and cosine of one random projection.

    Data and the initial parameters are drawn from ``seed``.
    """
    if width < 1 or n < 1:
        raise InvalidInputError("width and n must be >= 1")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, inputs))
    u = rng.standard_normal(inputs) / np.sqrt(inputs)
    proj = X @ u
    Y = np.column_stack([np.sin(proj), np.cos(proj)])
    W = rng.standard_normal((width, inputs)) / np.sqrt(inputs)
    V = rng.standard_normal((2, width)) / np.sqrt(width)
    init = np.concatenate([W.ravel(), np.zeros(width), np.column_stack([V, np.zeros(2)]).ravel()])
    return MlpProblem(X, Y, width, init=init)


BUILTINS = {"toy": toy_two_task, "quadratic": quadratic, "mlp-synth": mlp_synth}
