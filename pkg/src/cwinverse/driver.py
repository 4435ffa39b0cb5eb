"""End-to-end inverse runs: per-path fixed-point iterations, cross-path
averaging, and the reported metrics.

For each sample path the previous iterate's nonlinearity is frozen, the
resulting quadratic functional is minimized with Adam, and the loop repeats
for a fixed number of outer iterations; the reconstruction is the t = 0
slice of the path average. Paths are independent work units: with
``workers > 1`` they run in separate processes, and results are gathered in
path order so the average is bitwise identical to a serial run.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .experiments import ExperimentSpec, true_source_grid
from .forward import CauchyData, generate_dataset
from .mesh import Field, Mesh
from .objective import DofLayout, ObjectiveContext, build_shared_assembly
from .optimizer import AdamParams, minimize
from .stochastic import sample_path, split_seed

__all__ = [
    "RunPlan",
    "PathResult",
    "RunResult",
    "plan_from_spec",
    "run_inverse",
    "l2_relative_error",
    "consecutive_difference",
]


@dataclass(frozen=True)
class RunPlan:
    """Everything a reproducible inverse run needs besides the dataset itself."""

    spec: ExperimentSpec
    dataset: tuple          # CauchyData records with attached Brownian paths
    master_seed: int
    n_paths: int
    n_outer: int
    adam: AdamParams
    workers: int = 1
    trace_every: int = 50

    def __post_init__(self):
        if self.n_paths < 1 or self.n_outer < 1:
            raise ValueError("need n_paths >= 1 and n_outer >= 1")
        if len(self.dataset) < 1:
            raise ValueError("dataset must contain at least one record")


def plan_from_spec(spec: ExperimentSpec, master_seed: int, *, workers: int = 1, trace_every: int = 50,
                   dataset=None) -> RunPlan:
    """Build a plan with defaults from the experiment spec, generating data if needed."""
    if dataset is None:
        dataset = generate_dataset(spec, spec.n_forward_paths, master_seed)
    return RunPlan(
        spec=spec,
        dataset=tuple(dataset),
        master_seed=master_seed,
        n_paths=spec.n_paths,
        n_outer=spec.n_outer,
        adam=spec.adam,
        workers=workers,
        trace_every=trace_every,
    )


@dataclass
class PathResult:
    index: int
    final_field: np.ndarray | None = None
    initial_slices: list = field(default_factory=list)   # u^n(0) for n = 0..n_outer
    trace_steps: list = field(default_factory=list)
    trace_values: list = field(default_factory=list)     # (outer, step, J, |g|_inf)
    error_series: list = field(default_factory=list)     # (outer, step, l2 error) when truth known
    wall_seconds: float = 0.0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class RunResult:
    mesh: Mesh
    u_c: Field                        # cross-path average of the final iterates
    u0_reconstructed: np.ndarray      # u_c at t = 0
    path_results: list
    consecutive: np.ndarray           # per-outer mean of max |u^{n}(0) - u^{n-1}(0)|
    consecutive_per_path: np.ndarray  # (paths, n_outer)
    l2_error: float | None            # against the true source, when known
    l2_error_per_path: list
    u0_true: np.ndarray | None
    wall_clock: dict

    @property
    def n_failed(self) -> int:
        return sum(1 for p in self.path_results if p.failed)


def l2_relative_error(u0: np.ndarray, u0_star: np.ndarray, mesh: Mesh) -> float:
    """Discrete L2 relative error over the spatial grid (cell area hx*hy)."""
    if u0.shape != u0_star.shape:
        raise ValueError("shapes differ")
    denom = np.sqrt(mesh.hx * mesh.hy * np.sum(u0_star**2))
    if denom == 0.0:
        raise ZeroDivisionError("reference source is identically zero")
    return float(np.sqrt(mesh.hx * mesh.hy * np.sum((u0 - u0_star) ** 2)) / denom)


def consecutive_difference(slices_per_path) -> np.ndarray:
    """Mean over paths of max-norm gaps between consecutive t = 0 iterates.

    ``slices_per_path`` holds, per path, the list [u^0(0), ..., u^{N}(0)];
    entry n-1 of the result is the path average of max |u^n(0) - u^{n-1}(0)|.
    """
    per_path = []
    for slices in slices_per_path:
        if len(slices) < 2:
            raise ValueError("need at least two iterates per path")
        per_path.append([float(np.max(np.abs(b - a))) for a, b in zip(slices[:-1], slices[1:])])
    return np.asarray(per_path).mean(axis=0)


def _functional_path(plan: RunPlan, record: CauchyData, path_index: int):
    spec = plan.spec
    mesh = spec.inverse_mesh
    if spec.functional_noise == "reuse_forward_path":
        if record.brownian is None:
            raise ValueError("dataset record carries no Brownian path to reuse")
        return record.brownian
    return sample_path(split_seed(plan.master_seed, "functional", path_index), mesh.M, mesh.tau)


def _run_single_path(plan: RunPlan, path_index: int, u0_true: np.ndarray | None, shared=None) -> PathResult:
    spec = plan.spec
    mesh = spec.inverse_mesh
    result = PathResult(index=path_index)
    started = time.perf_counter()
    try:
        record = plan.dataset[path_index % len(plan.dataset)]
        brownian = _functional_path(plan, record, path_index)
        if shared is None:
            shared = build_shared_assembly(mesh, spec.carleman, spec.kappa,
                                           DofLayout(mesh, spec.bottom_ring_mode))
        ctx = ObjectiveContext(
            mesh, spec.carleman, spec.kappa, record, brownian,
            spec.a_inverse, spec.nonlinearity,
            paper_literal_volume=spec.paper_literal_volume,
            shared=shared,
        )
        x = ctx.layout.zeros()
        u_prev = ctx.embed(x)
        result.initial_slices.append(u_prev[0].copy())

        for outer in range(1, plan.n_outer + 1):
            ctx.set_previous_iterate(u_prev)

            def on_trace(step, x_now, g, outer=outer):
                if u0_true is not None:
                    u0_now = ctx.embed(x_now)[0]
                    result.error_series.append(
                        (outer, step, l2_relative_error(u0_now, u0_true, mesh))
                    )

            out = minimize(ctx, x, plan.adam, trace_every=plan.trace_every, callback=on_trace)
            x = out.x
            for s, v, gn in zip(out.steps, out.values, out.grad_norms):
                result.trace_values.append((outer, s, v, gn))
            u_prev = ctx.embed(x)
            result.initial_slices.append(u_prev[0].copy())
        result.final_field = u_prev
    except Exception as exc:  # per-path failures are recorded, not fatal
        result.error = f"{type(exc).__name__}: {exc}"
    result.wall_seconds = time.perf_counter() - started
    return result


def _worker(args):
    plan, path_index, u0_true = args
    return _run_single_path(plan, path_index, u0_true, shared=None)


def run_inverse(plan: RunPlan, *, u0_true: np.ndarray | None = None, progress=None) -> RunResult:
    """Execute the full averaged reconstruction described by ``plan``.

    ``u0_true`` (defaults to the registry's exact source on the inverse mesh)
    enables the error time series; pass ``progress`` a callable taking the
    finished path index for coarse reporting. The run fails only if every
    path fails.
    """
    spec = plan.spec
    mesh = spec.inverse_mesh
    if u0_true is None:
        u0_true = true_source_grid(spec)
    t_start = time.perf_counter()

    indices = list(range(plan.n_paths))
    if plan.workers > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_worker, [(plan, i, u0_true) for i in indices]))
    else:
        shared = build_shared_assembly(mesh, spec.carleman, spec.kappa,
                                       DofLayout(mesh, spec.bottom_ring_mode))
        results = []
        for i in indices:
            results.append(_run_single_path(plan, i, u0_true, shared=shared))
            if progress is not None:
                progress(i)
    solve_seconds = time.perf_counter() - t_start

    good = [r for r in results if not r.failed]
    if not good:
        details = "; ".join(f"path {r.index}: {r.error}" for r in results)
        raise RuntimeError(f"all {len(results)} paths failed: {details}")

    mean_field = np.zeros(mesh.shape)
    for r in good:  # fixed path order: bitwise-reproducible average
        mean_field += r.final_field
    mean_field /= len(good)
    u_c = Field(mesh, mean_field)
    u0_rec = u_c.values[0].copy()

    consec_pp = np.asarray(
        [[float(np.max(np.abs(b - a))) for a, b in zip(r.initial_slices[:-1], r.initial_slices[1:])]
         for r in good]
    )
    consec = consec_pp.mean(axis=0)

    l2 = None
    l2_per_path = []
    if u0_true is not None:
        l2 = l2_relative_error(u0_rec, u0_true, mesh)
        l2_per_path = [l2_relative_error(r.final_field[0], u0_true, mesh) for r in good]

    return RunResult(
        mesh=mesh,
        u_c=u_c,
        u0_reconstructed=u0_rec,
        path_results=results,
        consecutive=consec,
        consecutive_per_path=consec_pp,
        l2_error=l2,
        l2_error_per_path=l2_per_path,
        u0_true=u0_true,
        wall_clock={"solve_seconds": solve_seconds,
                    "per_path_seconds": [r.wall_seconds for r in results]},
    )
