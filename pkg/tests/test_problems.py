import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mtlgrad.errors import DomainError, InvalidInputError
from mtlgrad.problems import (
    BUILTINS, TOY_INITS, MlpProblem, from_expressions, mlp_synth, quadratic, toy_two_task,
)


def fd_jacobian(fn, theta, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    cols = []
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        cols.append((fn(theta + e) - fn(theta - e)) / (2 * h))
    return np.array(cols).T  # tasks x params


def test_toy_metadata():
    p = toy_two_task()
    assert (p.dim, p.tasks) == (2, 2)
    assert [tuple(x) for x in p.default_inits()] == list(TOY_INITS)
    assert set(BUILTINS) == {"toy", "quadratic", "mlp-synth"}


def test_toy_golden_values():
    # reference values from a direct transcription of the formulas with math.*
    np.testing.assert_allclose(toy_two_task().losses([0.0, 10.0]), [6.9156627638058215, 7.503396057619505], rtol=1e-12)


def test_toy_golden_gradients():
    g = toy_two_task().gradients([-8.5, 7.5])
    np.testing.assert_allclose(g.rows[0], [-0.2853985119811778, 0.007248720264552797], rtol=1e-6)
    np.testing.assert_allclose(g.rows[1], [-0.05707968638097627, 0.00902650398870719], rtol=1e-6)


def test_toy_gradients_match_fd_at_random_points():
    p = toy_two_task()
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.uniform(-10, 10, 2)
        fd = fd_jacobian(p.losses, x)
        an = p.gradients(x).rows
        np.testing.assert_allclose(an, fd, rtol=1e-4, atol=1e-6)


def test_wrong_dimension():
    with pytest.raises(InvalidInputError):
        toy_two_task().losses([1.0, 2.0, 3.0])
    with pytest.raises(InvalidInputError):
        toy_two_task().losses([1.0, np.nan])


def test_expression_problem_tags_task():
    p = from_expressions(["x1^2", "log(x1)"], 1)
    with pytest.raises(DomainError) as info:
        p.evaluate([-1.0])
    assert info.value.task == 2
    assert "task 2" in str(info.value)


def test_expression_problem_rejects_unknown_variable():
    with pytest.raises(InvalidInputError, match="task 1"):
        from_expressions(["x3"], 2)
    with pytest.raises(InvalidInputError):
        from_expressions([], 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_quadratic_fd(theta):
    p = quadratic([[1, 0, 0], [0, 2, 0], [-1, 1, 3]])
    np.testing.assert_allclose(p.gradients(theta).rows, fd_jacobian(p.losses, theta), atol=1e-6)


def test_quadratic_optimum():
    anchors = np.array([[1.0, 0.0], [0.0, 2.0], [-1.0, 1.0]])
    p = quadratic(anchors)
    assert p.lipschitz == 1.0
    np.testing.assert_allclose(p.minimizer, anchors.mean(0))
    assert np.mean(p.losses(p.minimizer)) == pytest.approx(p.optimum_value, abs=1e-15)
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert np.mean(p.losses(rng.normal(size=2))) >= p.optimum_value


def test_mlp_layout_and_fd():
    p = mlp_synth(seed=3, width=4, n=16)
    assert p.shared_dim == 4 * 3 + 4
    assert p.dim == p.shared_dim + 2 * 5
    theta = p.default_inits()[0] + np.random.default_rng(2).normal(scale=0.1, size=p.dim)
    losses, g, head = p.evaluate(theta)
    full = fd_jacobian(p.losses, theta)
    np.testing.assert_allclose(g.rows, full[:, : p.shared_dim], rtol=1e-5, atol=1e-9)
    # each task's head gradient is that task's slice of its own loss gradient
    h = p.width + 1
    expect = np.concatenate([full[k, p.shared_dim + k * h: p.shared_dim + (k + 1) * h] for k in range(2)])
    np.testing.assert_allclose(head, expect, rtol=1e-5, atol=1e-9)
    # task k's loss does not depend on the other head
    assert np.all(full[0, p.shared_dim + h:] == 0)


def test_mlp_seeded():
    a, b = mlp_synth(seed=5), mlp_synth(seed=5)
    np.testing.assert_array_equal(a.default_inits()[0], b.default_inits()[0])
    np.testing.assert_array_equal(a.X, b.X)
    assert not np.array_equal(a.X, mlp_synth(seed=6).X)


def test_mlp_validation():
    with pytest.raises(InvalidInputError):
        MlpProblem(np.ones((3, 2)), np.ones((4, 1)), 2)
    with pytest.raises(InvalidInputError):
        mlp_synth(width=0)
