"""Adam update loop for the weighted objective, plus a conjugate-gradient baseline.

The inner minimization runs a fixed number of vanilla Adam steps (constant
learning rate, no weight decay, no schedule) on the free tensor; bias
correction uses the post-increment step counter, so the first step moves by
roughly -alpha * sign(g). Identical inputs produce bitwise-identical
trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AdamParams",
    "AdamState",
    "adam_step",
    "MinimizeResult",
    "minimize",
    "CGParams",
    "cg_minimize",
]


@dataclass(frozen=True)
class AdamParams:
    alpha: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    n_steps: int = 12000

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("moment decay rates must lie in [0, 1)")
        if self.alpha <= 0 or self.eps <= 0:
            raise ValueError("alpha and eps must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, x: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(x), np.zeros_like(x), 0)


def adam_step(x: np.ndarray, state: AdamState, g: np.ndarray, params: AdamParams):
    """One Adam update; returns the new iterate and state without mutating the inputs."""
    if not np.isfinite(g).all():
        raise FloatingPointError("non-finite gradient passed to adam_step")
    t = state.t + 1
    m = params.beta1 * state.m + (1.0 - params.beta1) * g
    v = params.beta2 * state.v + (1.0 - params.beta2) * (g * g)
    m_hat = m / (1.0 - params.beta1**t)
    v_hat = v / (1.0 - params.beta2**t)
    x_new = x - params.alpha * m_hat / (np.sqrt(v_hat) + params.eps)
    return x_new, AdamState(m, v, t)


@dataclass
class MinimizeResult:
    x: np.ndarray
    steps: list = field(default_factory=list)       # subsampled step indices
    values: list = field(default_factory=list)      # J at those steps
    grad_norms: list = field(default_factory=list)  # |g|_inf at those steps
    n_grad_evals: int = 0


def minimize(ctx, x0: np.ndarray, params: AdamParams, *, trace_every: int = 50, callback=None) -> MinimizeResult:
    """Run exactly ``params.n_steps`` Adam steps from ``x0`` using ctx.grad_J.

    ``ctx`` needs ``grad_J(x)`` and ``eval_J(x)``. The loss trace is
    subsampled every ``trace_every`` steps (plus the first and last step);
    ``callback(step, x, g)`` fires at the same points.
    """
    x = np.array(x0, dtype=np.float64)
    state = AdamState.zeros_like(x)
    result = MinimizeResult(x)

    def record(step, g):
        result.steps.append(step)
        result.values.append(ctx.eval_J(x))
        result.grad_norms.append(float(np.max(np.abs(g))) if g is not None else float("nan"))
        if callback is not None:
            callback(step, x, g)

    for step in range(1, params.n_steps + 1):
        try:
            g = ctx.grad_J(x)
            x, state = adam_step(x, state, g, params)
        except Exception as exc:
            raise RuntimeError(f"minimization failed at step {step}: {exc}") from exc
        result.n_grad_evals += 1
        if step == 1 or step == params.n_steps or step % trace_every == 0:
            result.x = x
            record(step, g)
    result.x = x
    if params.n_steps == 0:
        record(0, None)
    return result


@dataclass(frozen=True)
class CGParams:
    n_grad_evals: int = 12000   # total gradient-evaluation budget
    probe: float = 1e-3         # relative displacement for the curvature probe
    fallback_step: float = 1e-3 # used when the probed curvature is not positive


def cg_minimize(ctx, x0: np.ndarray, params: CGParams, *, trace_every: int = 50, callback=None) -> MinimizeResult:
    """Fletcher-Reeves CG baseline at a fixed gradient-evaluation budget.

    The step length along each direction comes from a single curvature probe
    (one extra gradient evaluation), which is an exact line search for a
    quadratic objective; each iteration therefore spends two evaluations of
    the budget. Used only for optimizer comparisons.
    """
    x = np.array(x0, dtype=np.float64)
    result = MinimizeResult(x)

    def record():
        result.x = x
        if result.steps and result.steps[-1] == result.n_grad_evals:
            return
        result.steps.append(result.n_grad_evals)
        result.values.append(ctx.eval_J(x))
        result.grad_norms.append(float(np.max(np.abs(g))))
        if callback is not None:
            callback(result.n_grad_evals, x, g)

    g = ctx.grad_J(x)
    result.n_grad_evals = 1
    if not np.any(g):
        record()
        return result
    d = -g
    gg = float(g.ravel() @ g.ravel())
    iteration = 0
    while result.n_grad_evals + 2 <= params.n_grad_evals:
        iteration += 1
        d_norm = float(np.max(np.abs(d)))
        if d_norm == 0.0:
            break
        sigma = params.probe * max(1.0, float(np.max(np.abs(x)))) / d_norm
        g_probe = ctx.grad_J(x + sigma * d)
        result.n_grad_evals += 1
        curvature = float((g_probe - g).ravel() @ d.ravel()) / sigma
        gd = float(g.ravel() @ d.ravel())
        step = -gd / curvature if curvature > 0 else params.fallback_step / d_norm
        x = x + step * d
        g_new = ctx.grad_J(x)
        result.n_grad_evals += 1
        gg_new = float(g_new.ravel() @ g_new.ravel())
        beta = gg_new / gg if gg > 0 else 0.0
        d = -g_new + beta * d
        g, gg = g_new, gg_new
        if iteration == 1 or iteration % max(1, trace_every // 2) == 0:
            record()
    record()
    return result
