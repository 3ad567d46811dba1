"""Solvers over the probability simplex.

Everything here works on the K x K Gram matrix ``M`` and the bias vector
``b`` so the cost after one pass over the gradients does not depend on the
parameter count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalDegeneracyError
from .gradcore import SimplexWeights, TaskGradients, gram_and_bias

@dataclass(frozen=True)
class SolverSettings:
    max_iters: int = 200
    tol: float = 1e-10
    step: float | None = None  # None: 1/trace(M)
    zero_eps: float = 1e-12
    segment_tol: float = 1e-15

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not self.tol > 0 or not self.zero_eps > 0:
            raise InvalidInputError("tol and zero_eps must be positive")
        if self.step is not None and not self.step > 0:
            raise InvalidInputError("step must be positive")


DEFAULT_SETTINGS = SolverSettings()


def project_to_simplex(v) -> SimplexWeights:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise InvalidInputError("cannot project an empty vector")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("vector has non-finite entries")
    return SimplexWeights(_project(v))


def _project(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    w = np.maximum(v - tau, 0.0)
    # clean residual rounding so the simplex invariant holds to 1e-12
    return w / w.sum()


def _check_gram(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise InvalidInputError(f"Gram matrix must be square and nonempty, got {M.shape}")
    K = M.shape[0]
    if K <= 2:
        # scalar checks: this path runs once per optimizer step
        vals = M.ravel().tolist()
        scale = max(1.0, max(abs(x) for x in vals))
        atol = 1e-10 * scale
        if K == 1:
            if vals[0] < -atol:
                raise NumericalDegeneracyError("Gram matrix is not PSD")
            return M
        m00, m01, m10, m11 = vals
        if abs(m01 - m10) > atol:
            raise NumericalDegeneracyError("Gram matrix is not symmetric")
        if m00 < -atol or m11 < -atol or m00 * m11 - m01 * m10 < -atol * scale:
            raise NumericalDegeneracyError("Gram matrix is not PSD")
        return M
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > 1e-10 * scale:
        raise NumericalDegeneracyError("Gram matrix is not symmetric")
    eig_min = float(np.linalg.eigvalsh((M + M.T) / 2)[0])
    if eig_min < -1e-10 * scale:
        raise NumericalDegeneracyError(f"Gram matrix is not PSD (min eigenvalue {eig_min:g})")
    return M


def solve_cagrad_weights(M, b, g0_norm, c, s: SolverSettings = DEFAULT_SETTINGS):
    """Minimize ``F(w) = w.b + c*|g0|*|g_w|`` over the simplex.

    Returns ``(weights, lambda_star, F_star)``. ``lambda_star`` is ``inf``
    when ``phi = 0`` or ``|g_w*|`` falls below ``s.zero_eps``.
    """
    if c < 0:
        raise InvalidInputError(f"c must be nonnegative, got {c}")
    if g0_norm < 0:
        raise InvalidInputError("g0_norm must be nonnegative")
    M = _check_gram(M)
    b = np.asarray(b, dtype=np.float64)
    K = b.size
    if M.shape[0] != K:
        raise InvalidInputError("M and b disagree on the task count")
    sqrt_phi = c * g0_norm

    if sqrt_phi == 0.0:
        i = int(np.argmin(b))  # first minimum on ties
        w = np.zeros(K)
        w[i] = 1.0
        return SimplexWeights(w), math.inf, float(b[i])

    if K == 2:
        # scalar bookkeeping: this path runs once per optimizer step
        t, u = _segment_cagrad(M, b, sqrt_phi, s.segment_tol)
        m00, m01, _, m11 = M.ravel().tolist()
        b0, b1 = b.tolist()
        q = t * t * m00 + 2.0 * t * u * m01 + u * u * m11
        gw_norm = math.sqrt(q if q > 0.0 else 0.0)
        f_star = t * b0 + u * b1 + sqrt_phi * gw_norm
        lam = math.inf if gw_norm <= s.zero_eps else gw_norm / sqrt_phi
        return SimplexWeights._trusted(np.array([t, u])), lam, f_star

    if K == 1:
        w = np.ones(1)
    else:
        w = _pgd_cagrad(M, b, sqrt_phi, s)

    q = float(w @ (M @ w))
    gw_norm = math.sqrt(q if q > 0.0 else 0.0)
    f_star = float(w @ b) + sqrt_phi * gw_norm
    lam = math.inf if gw_norm <= s.zero_eps else gw_norm / sqrt_phi
    return SimplexWeights(w), lam, f_star


def _segment_cagrad(M, b, sqrt_phi, tol):
    """K = 2 minimizer of F along ``w = (t, 1 - t)``.

    F is convex in t, so bisect on the sign of F'(t). Comparing F values
    instead cannot resolve t below ~sqrt(machine eps). The stationarity
    condition also has a closed-form root; when a tight bracket around it
    checks out, bisection starts from that bracket instead of [0, 1].
    """
    m00, m01, _, m11 = M.ravel().tolist()
    b0, b1 = b.tolist()
    # F(t) = b1 + t (b0 - b1) + sqrt_phi * sqrt(A t^2 + 2 B t + C)
    A = m00 - 2.0 * m01 + m11
    B = m01 - m11
    C = m11
    db = b0 - b1

    def slope(t):
        q = (A * t + 2.0 * B) * t + C
        if q <= 0.0:
            return db  # |g_w| = 0: drop the norm term's subgradient
        return db + sqrt_phi * (A * t + B) / math.sqrt(q)

    if slope(0.0) >= 0.0:
        return 0.0, 1.0
    if slope(1.0) <= 0.0:
        return 1.0, 0.0
    lo, hi = _closed_form_bracket(A, B, C, db, sqrt_phi, slope)
    sqrt = math.sqrt
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        q = (A * mid + 2.0 * B) * mid + C
        s = db if q <= 0.0 else db + sqrt_phi * (A * mid + B) / sqrt(q)
        if s > 0.0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    return t, 1.0 - t


def _closed_form_bracket(A, B, C, db, sqrt_phi, slope, width=1e-12):
    """Bracket the root of F'(t) = db + sqrt_phi (A t + B) / sqrt(q(t)).

    Squaring ``(A t + B) / sqrt(q) = r`` with ``r = -db / sqrt_phi`` gives
    ``A (t + B/A)^2 = r^2 (A C - B^2) / (A (A - r^2))``; the root takes the
    sign of ``r``. Falls back to [0, 1] when rounding spoils the bracket.
    """
    r = -db / sqrt_phi
    denom = A - r * r
    det = A * C - B * B
    if A > 0.0 and denom > 0.0 and det >= 0.0:
        t0 = (-B + r * math.sqrt(det / denom)) / A
        lo, hi = max(0.0, t0 - width), min(1.0, t0 + width)
        if lo < hi and slope(lo) <= 0.0 < slope(hi):
            return lo, hi
    return 0.0, 1.0


def _pgd_cagrad(M, b, sqrt_phi, s):
    """Projected gradient descent on F with step halving on non-decrease.

    Works on ``M / trace(M)`` so the iterates (and the stopping rule) do not
    depend on the overall gradient scale.
    """
    K = b.size
    scale = float(np.trace(M))
    if not scale > 0.0:
        i = int(np.argmin(b))
        w = np.zeros(K)
        w[i] = 1.0
        return w
    M = M / scale
    b = b / scale
    sqrt_phi = sqrt_phi / math.sqrt(scale)

    def F(w):
        q = float(w @ M @ w)
        return float(w @ b) + sqrt_phi * math.sqrt(q if q > 0.0 else 0.0)

    def grad(w):
        Mw = M @ w
        q = float(w @ Mw)
        if q <= s.zero_eps**2:
            return b.copy()
        return b + sqrt_phi * Mw / math.sqrt(q)

    step = s.step * scale if s.step is not None else 1.0
    w = np.full(K, 1.0 / K)
    fw = F(w)
    for _ in range(s.max_iters):
        while True:
            cand = _project(w - step * grad(w))
            fc = F(cand)
            if fc < fw:
                break
            step *= 0.5
            if step < 1e-30:
                return w
        decrease = fw - fc
        w, fw = cand, fc
        if decrease < s.tol:
            break
        step *= 2.0
    return w


def solve_minnorm_weights(M, s: SolverSettings = DEFAULT_SETTINGS) -> SimplexWeights:
    """Minimize ``w^T M w`` over the simplex (min-norm point of the hull)."""
    M = _check_gram(M)
    K = M.shape[0]
    if K == 1:
        return SimplexWeights(np.ones(1))
    if K == 2:
        m00, m01, m11 = float(M[0, 0]), float(M[0, 1]), float(M[1, 1])
        denom = m00 - 2.0 * m01 + m11
        if denom <= 0.0:
            t = 1.0 if m00 <= m11 else 0.0
        else:
            t = min(1.0, max(0.0, (m11 - m01) / denom))
        return SimplexWeights._trusted(np.array([t, 1.0 - t]))

    lmax = float(np.linalg.eigvalsh(M)[-1])
    if lmax <= 0.0:
        return SimplexWeights(np.full(K, 1.0 / K))
    M = M / lmax  # scale-free iterates and stopping rule
    step = 1.0
    w = np.full(K, 1.0 / K)
    fw = float(w @ M @ w)
    for _ in range(s.max_iters):
        cand = _project(w - step * (M @ w))
        fc = float(cand @ M @ cand)
        if fc >= fw:
            break
        decrease = fw - fc
        w, fw = cand, fc
        if decrease < s.tol:
            break
    return SimplexWeights(w)


def pareto_stationarity(g: TaskGradients, s: SolverSettings = DEFAULT_SETTINGS) -> float:
    """``min_w |g_w|`` over the simplex; zero iff 0 lies in the gradient hull."""
    M, _ = gram_and_bias(g)
    w = solve_minnorm_weights(M, s).w
    return float(np.linalg.norm(w @ g.rows))


def primal_oracle(g: TaskGradients, c, budget, mode="grid", seed=0):
    """Brute-force search of ``max min_i <g_i, d>`` s.t. ``|d - g0| <= c|g0|``.

    ``mode="grid"``: a uniform grid with ``budget`` points per axis over the
    ball's bounding box, plus ``(budget - 1)**2`` evenly spread points on
    the sphere (m <= 3; nested when refining ``n -> 2n - 1``). The objective is concave and piecewise linear, so with
    K <= m its maximum lies on the sphere and the ring dominates accuracy. ``mode="random"``: ``budget`` uniform
    samples from the ball drawn from ``seed``; a larger budget extends the
    same sample stream, so the value never decreases with the budget.
    Returns ``(d_best, value)``.
    """
    if budget < 1:
        raise InvalidInputError("budget must be >= 1")
    if c < 0:
        raise InvalidInputError("c must be nonnegative")
    g0 = g.g0
    r = c * float(np.linalg.norm(g0))
    if r == 0.0:
        return g0.copy(), float(np.min(g.rows @ g0))
    if mode == "grid":
        units = unit_ball_grid(g.m, budget)
        if budget > 1:
            units = np.vstack([units, unit_sphere_points(g.m, (budget - 1) ** 2)])
    elif mode == "random":
        units = unit_ball_samples(g.m, budget, seed)
    else:
        raise InvalidInputError(f"unknown oracle mode {mode!r}")
    return _best_in_ball(g, r, units)


def _best_in_ball(g, r, units):
    base = g.rows @ g.g0
    best_val, best_u = -math.inf, None
    # chunked to bound memory for fine grids
    for start in range(0, len(units), 1 << 20):
        chunk = units[start:start + (1 << 20)]
        vals = np.min(base + r * (chunk @ g.rows.T), axis=1)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_u = float(vals[j]), chunk[j]
    # the center is always feasible
    center = float(np.min(base))
    if center > best_val:
        return g.g0.copy(), center
    return g.g0 + r * best_u, best_val


def unit_ball_grid(m, n):
    """Points of the ``n``-per-axis grid on [-1, 1]^m that lie in the unit ball."""
    if m > 3:
        raise InvalidInputError("grid mode supports m <= 3; use random mode")
    if n == 1:
        return np.zeros((1, m))
    axis = np.linspace(-1.0, 1.0, n)
    pts = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    return pts[np.einsum("ij,ij->i", pts, pts) <= 1.0]


def unit_sphere_points(m, n):
    """``n`` deterministic, evenly spread points on the unit sphere (m <= 3)."""
    if m == 1:
        return np.array([[-1.0], [1.0]])
    i = np.arange(n, dtype=np.float64)
    if m == 2:
        t = 2.0 * math.pi * i / n
        return np.column_stack([np.cos(t), np.sin(t)])
    if m == 3:
        # golden-angle spiral
        z = 1.0 - (2.0 * i + 1.0) / n
        rho = np.sqrt(1.0 - z * z)
        t = math.pi * (3.0 - math.sqrt(5.0)) * i
        return np.column_stack([rho * np.cos(t), rho * np.sin(t), z])
    raise InvalidInputError("sphere points support m <= 3")


def unit_ball_samples(m, n, seed=0):
    """Uniform samples from the unit m-ball.

    Drops two coordinates of a uniform point on the (m+1)-sphere, which is
    uniform in the m-ball; row-major draws keep every prefix stable.
    """
    z = np.random.default_rng(seed).standard_normal((n, m + 2))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z[:, :m]
