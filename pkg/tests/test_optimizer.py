import numpy as np
import pytest

from cwinverse.optimizer import (
    AdamParams,
    AdamState,
    CGParams,
    adam_step,
    cg_minimize,
    minimize,
)


class QuadraticCtx:
    """J(x) = (x - c)' D (x - c) with diagonal D; tiny stand-in for the objective."""

    def __init__(self, c, d):
        self.c = np.asarray(c, dtype=float)
        self.d = np.asarray(d, dtype=float)

    def eval_J(self, x):
        return float(self.d @ (x - self.c) ** 2)

    def grad_J(self, x):
        return 2.0 * self.d * (x - self.c)


def test_params_validation():
    with pytest.raises(ValueError):
        AdamParams(beta1=1.0)
    with pytest.raises(ValueError):
        AdamParams(alpha=0.0)
    with pytest.raises(ValueError):
        AdamParams(n_steps=-1)


def test_first_step_is_signlike():
    params = AdamParams(alpha=0.01)
    x = np.array([3.0, -1.5, 0.25])
    g = np.array([4.0, -2.0, 0.5])
    x1, state = adam_step(x, AdamState.zeros_like(x), g, params)
    # bias correction cancels at t = 1: update = -alpha * g / (|g| + eps)
    expected = x - params.alpha * g / (np.abs(g) + params.eps)
    assert x1 == pytest.approx(expected, rel=1e-12)
    assert state.t == 1


def test_zero_gradient_never_moves():
    params = AdamParams()
    x = np.array([1.0, -2.0])
    state = AdamState.zeros_like(x)
    for _ in range(10):
        x, state = adam_step(x, state, np.zeros_like(x), params)
    assert np.array_equal(x, np.array([1.0, -2.0]))
    assert np.all(state.m == 0.0) and np.all(state.v == 0.0)


def test_non_finite_gradient_rejected():
    params = AdamParams()
    x = np.zeros(2)
    with pytest.raises(FloatingPointError):
        adam_step(x, AdamState.zeros_like(x), np.array([np.inf, 0.0]), params)


def test_scalar_quadratic_matches_recursion_oracle():
    # independent scalar recursion for J(x) = x^2, frozen as a regression value
    alpha, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    x_ref, m_ref, v_ref = 1.0, 0.0, 0.0
    history = [x_ref]
    for t in range(1, 101):
        g = 2.0 * x_ref
        m_ref = b1 * m_ref + (1 - b1) * g
        v_ref = b2 * v_ref + (1 - b2) * g * g
        x_ref = x_ref - alpha * (m_ref / (1 - b1**t)) / ((v_ref / (1 - b2**t)) ** 0.5 + eps)
        history.append(x_ref)

    params = AdamParams(alpha=alpha, beta1=b1, beta2=b2, eps=eps)
    x = np.array([1.0])
    state = AdamState.zeros_like(x)
    for t in range(1, 101):
        x, state = adam_step(x, state, 2.0 * x, params)
        assert x[0] == pytest.approx(history[t], rel=1e-14)

    assert all(abs(history[i + 1]) < abs(history[i]) for i in range(100))
    assert abs(x[0]) < 0.5
    assert x[0] == pytest.approx(0.22444604523187908, abs=1e-12)


def test_minimize_zero_steps_returns_start():
    ctx = QuadraticCtx([1.0, 2.0], [1.0, 1.0])
    x0 = np.array([5.0, -3.0])
    out = minimize(ctx, x0, AdamParams(n_steps=0))
    assert np.array_equal(out.x, x0)
    assert out.steps == [0]
    assert out.n_grad_evals == 0


def test_minimize_converges_on_diagonal_quadratic():
    ctx = QuadraticCtx([1.0, -2.0, 0.5], [1.0, 10.0, 0.1])
    out = minimize(ctx, np.zeros(3), AdamParams(n_steps=4000), trace_every=500)
    assert np.max(np.abs(out.x - ctx.c)) < 1e-3
    assert out.values[-1] < out.values[0]
    # running minimum of the trace is non-increasing by construction
    running = np.minimum.accumulate(out.values)
    assert np.all(np.diff(running) <= 0)


def test_minimize_deterministic():
    ctx = QuadraticCtx([0.3, -0.7], [2.0, 0.5])
    a = minimize(ctx, np.array([1.0, 1.0]), AdamParams(n_steps=250))
    b = minimize(ctx, np.array([1.0, 1.0]), AdamParams(n_steps=250))
    assert np.array_equal(a.x, b.x)
    assert a.values == b.values


def test_scale_equivariance_with_tiny_eps():
    # multiplying the gradient stream by c > 0 leaves the update signs unchanged
    params = AdamParams(alpha=0.01, eps=1e-300)
    rng = np.random.default_rng(4)
    gs = rng.standard_normal((30, 5))
    for c in (10.0, 0.1):
        x1 = np.zeros(5)
        x2 = np.zeros(5)
        s1 = AdamState.zeros_like(x1)
        s2 = AdamState.zeros_like(x2)
        for g in gs:
            x1_new, s1 = adam_step(x1, s1, g, params)
            x2_new, s2 = adam_step(x2, s2, c * g, params)
            assert np.array_equal(np.sign(x1_new - x1), np.sign(x2_new - x2))
            x1, x2 = x1_new, x2_new


def test_cg_zero_gradient_start_returns_immediately():
    ctx = QuadraticCtx([0.0, 0.0], [1.0, 2.0])
    out = cg_minimize(ctx, np.zeros(2), CGParams(n_grad_evals=100))
    assert np.array_equal(out.x, np.zeros(2))
    assert out.n_grad_evals == 1


def test_cg_exact_line_search_converges_on_quadratic():
    rng = np.random.default_rng(6)
    c = rng.standard_normal(8)
    d = rng.uniform(0.5, 4.0, 8)
    ctx = QuadraticCtx(c, d)
    out = cg_minimize(ctx, np.zeros(8), CGParams(n_grad_evals=40))
    # CG with exact line search terminates in at most n iterations
    assert np.max(np.abs(out.x - c)) < 1e-8
    assert out.values[-1] < 1e-14


def test_cg_respects_gradient_budget():
    ctx = QuadraticCtx(np.ones(4), np.ones(4))
    out = cg_minimize(ctx, np.zeros(4), CGParams(n_grad_evals=9))
    assert out.n_grad_evals <= 9
