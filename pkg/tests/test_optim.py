import math

import numpy as np
import pytest

from mtlgrad.errors import InvalidInputError
from mtlgrad.optim import AdamState, adam_step, decaying_step_size, sgd_step


def test_sgd():
    np.testing.assert_array_equal(sgd_step([1.0, 2.0], [0.5, -1.0], 0.1), [0.95, 2.1])
    with pytest.raises(InvalidInputError):
        sgd_step([1.0], [1.0], 0.0)


def test_adam_hand_unrolled():
    st = AdamState(1)
    theta = np.array([0.0])
    ds = [1.0, -2.0, 0.5]
    m = v = 0.0
    x = 0.0
    for t, d in enumerate(ds, start=1):
        m = 0.9 * m + 0.1 * d
        v = 0.999 * v + 0.001 * d * d
        x -= 0.01 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
        theta = adam_step(st, theta, [d], 0.01)
        assert theta[0] == pytest.approx(x, rel=1e-14)
    assert st.step_count == 3


def test_adam_first_step_is_sign():
    st = AdamState(3)
    out = adam_step(st, np.zeros(3), [2.0, -0.5, 1e3], 0.1)
    np.testing.assert_allclose(out, [-0.1, 0.1, -0.1], rtol=1e-7)


def test_adam_states_independent():
    a, b = AdamState(2), AdamState(2)
    adam_step(a, np.zeros(2), [1.0, 1.0], 0.1)
    assert b.step_count == 0 and not b.first_moment.any()


@pytest.mark.parametrize("c, H, g0, gw, expect", [
    (2.0, 1.0, 1.0, 0.5, 0.5),
    (3.0, 2.0, 2.0, 4.0, 0.5),
    (1.5, 1.0, 4.0, 0.0, 0.0),
])
def test_decaying_step(c, H, g0, gw, expect):
    assert decaying_step_size(c, H, g0, gw) == pytest.approx(expect)


@pytest.mark.parametrize("args", [(1.0, 1.0, 1.0, 1.0), (0.5, 1.0, 1.0, 1.0), (2.0, 0.0, 1.0, 1.0), (2.0, 1.0, 0.0, 1.0)])
def test_decaying_step_invalid(args):
    with pytest.raises(InvalidInputError):
        decaying_step_size(*args)


@pytest.mark.parametrize("dim", [1, 2, 5])
def test_adam_scalar_path_matches_array_path(dim, monkeypatch):
    import mtlgrad.optim as optim

    rng = np.random.default_rng(dim)
    small, big = AdamState(dim), AdamState(dim)
    a = b = rng.standard_normal(dim)
    for _ in range(500):
        d = rng.standard_normal(dim) * 10.0 ** rng.uniform(-8, 3)
        monkeypatch.setattr(optim, "_SCALAR_DIM", 8)
        a = adam_step(small, a, d, 0.003)
        monkeypatch.setattr(optim, "_SCALAR_DIM", 0)
        b = adam_step(big, b, d, 0.003)
    assert a.tobytes() == b.tobytes()
    assert small.second_moment.tobytes() == big.second_moment.tobytes()
