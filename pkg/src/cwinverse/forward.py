"""Explicit finite-difference / Euler-Maruyama solver for the semilinear
stochastic wave equation, and extraction of lateral Cauchy data.

The three-level update advances

    u_{k+1} = 2 u_k - u_{k-1} + tau^2 (u_xx + u_yy)
              + tau^2 F(t_k, x, y, u_k, u_t, grad u_k) + tau a_k u_k dW_k

on interior nodes, with Dirichlet values imposed on the boundary ring at
every time level and the two initial layers equal (discrete u_t(0) = 0).
The u_t argument of F is the forward difference (u_{k+1} - u_k)/tau, which
makes the update implicit whenever F actually depends on u_t; a short
fixed-point sweep resolves it (the contraction factor is tau * Lip(F), and
the paper-style nonlinearities ignore u_t, so the sweep exits after one
confirmation pass). This keeps the solved trajectory exactly consistent with
the objective's residual operator at every interior node.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .mesh import Field, Mesh, build_mesh, cfl_number
from .stochastic import BrownianPath, apply_noise, sample_path, split_seed

__all__ = [
    "Nonlinearity",
    "NONLINEARITIES",
    "make_nonlinearity",
    "CauchyData",
    "NeumannTraces",
    "ConfigurationError",
    "DivergenceError",
    "boundary_mask",
    "dirichlet_from_source",
    "solve_forward",
    "extract_dirichlet",
    "extract_neumann",
    "resample_window",
    "restrict_to_subdomain",
    "generate_dataset",
]


class ConfigurationError(ValueError):
    """Invalid solver configuration (e.g. CFL violation)."""


class DivergenceError(RuntimeError):
    """Non-finite value produced while time stepping; carries the first bad node."""

    def __init__(self, k, i, j):
        super().__init__(f"forward solve diverged at node (k={k}, i={i}, j={j})")
        self.node = (k, i, j)


@dataclass(frozen=True)
class Nonlinearity:
    """Semilinear term F(t, x, y, u, u_t, gx, gy); must be vectorized over arrays."""

    tag: str
    fn: Callable
    cap: float | None = None

    def __call__(self, t, x, y, u, ut, gx, gy):
        return self.fn(t, x, y, u, ut, gx, gy)


def _f_sqrt_grad(t, x, y, u, ut, gx, gy):
    return np.sqrt(1.0 + u * u) + np.sqrt(gx * gx + gy * gy)


def _f_exp_capped(t, x, y, u, ut, gx, gy):
    return np.minimum(np.exp(np.minimum(u, 40.0)) + np.sqrt(gx * gx + gy * gy), 10.0)


def _f_zero(t, x, y, u, ut, gx, gy):
    return np.zeros_like(u)


NONLINEARITIES = {
    "sqrt_grad": Nonlinearity("sqrt_grad", _f_sqrt_grad),
    "exp_capped": Nonlinearity("exp_capped", _f_exp_capped, cap=10.0),
    "zero": Nonlinearity("zero", _f_zero),
}


def make_nonlinearity(tag: str, fn: Callable | None = None, cap: float | None = None) -> Nonlinearity:
    if tag in NONLINEARITIES and fn is None:
        return NONLINEARITIES[tag]
    if fn is None:
        raise ValueError(f"unknown nonlinearity tag {tag!r} and no custom function given")
    return Nonlinearity("custom" if tag is None else tag, fn, cap)


class NeumannTraces(NamedTuple):
    """One-sided normal derivatives on the observed edges; no bottom edge."""

    left: np.ndarray   # (M+1, Ny+1)
    right: np.ndarray  # (M+1, Ny+1)
    top: np.ndarray    # (M+1, Nx+1)


@dataclass(frozen=True)
class CauchyData:
    """Lateral Cauchy data for one sample path.

    ``f`` is a full field-shaped array whose boundary ring holds the
    Dirichlet trace (interior entries are zero and unused); the g arrays hold
    the Neumann trace on the observed edges. The Brownian path that produced
    the trace travels along for configurations that reuse it in the
    objective.
    """

    mesh: Mesh
    f: np.ndarray
    g_left: np.ndarray
    g_right: np.ndarray
    g_top: np.ndarray
    path_id: int = -1
    brownian: BrownianPath | None = None


def boundary_mask(mesh: Mesh) -> np.ndarray:
    mask = np.zeros((mesh.Nx + 1, mesh.Ny + 1), dtype=bool)
    mask[0, :] = mask[-1, :] = True
    mask[:, 0] = mask[:, -1] = True
    return mask


def dirichlet_from_source(mesh: Mesh, u0_grid: np.ndarray) -> np.ndarray:
    """Time-independent Dirichlet data f(t, .) = u0 restricted to the boundary."""
    f = np.zeros(mesh.shape)
    mask = boundary_mask(mesh)
    f[:, mask] = u0_grid[mask][None, :]
    return f


def extract_dirichlet(u: np.ndarray) -> np.ndarray:
    f = np.zeros_like(u)
    f[:, 0, :] = u[:, 0, :]
    f[:, -1, :] = u[:, -1, :]
    f[:, :, 0] = u[:, :, 0]
    f[:, :, -1] = u[:, :, -1]
    return f


def extract_neumann(field: Field) -> NeumannTraces:
    """One-sided differences toward the boundary on the left, right, and top edges."""
    u = field.values
    hx, hy = field.mesh.hx, field.mesh.hy
    right = (u[:, -1, :] - u[:, -2, :]) / hx
    left = (u[:, 0, :] - u[:, 1, :]) / hx
    top = (u[:, :, -1] - u[:, :, -2]) / hy
    return NeumannTraces(left=left, right=right, top=top)


def _apply_dirichlet_slice(layer: np.ndarray, f_slice: np.ndarray) -> None:
    layer[0, :] = f_slice[0, :]
    layer[-1, :] = f_slice[-1, :]
    layer[:, 0] = f_slice[:, 0]
    layer[:, -1] = f_slice[:, -1]


def solve_forward(
    mesh: Mesh,
    u0,
    f: np.ndarray,
    a_fn: Callable,
    nonlinearity: Nonlinearity,
    path: BrownianPath,
    *,
    max_fixed_point: int = 64,
    fixed_point_tol: float = 1e-14,
) -> Field:
    """Advance the explicit scheme from the source ``u0`` under Dirichlet data ``f``.

    ``u0`` may be a Field slice or a (Nx+1, Ny+1) array; ``f`` is field
    shaped with meaningful boundary ring. Requires CFL < 1 and a Brownian
    path with at least M-1 increments.
    """
    cfl = cfl_number(mesh)
    if cfl >= 1.0:
        raise ConfigurationError(f"CFL number {cfl:.3f} >= 1; refine the time step")
    u0_grid = u0.values[0] if isinstance(u0, Field) else np.asarray(u0, dtype=np.float64)
    if u0_grid.shape != (mesh.Nx + 1, mesh.Ny + 1):
        raise ValueError(f"u0 has shape {u0_grid.shape}, expected {(mesh.Nx + 1, mesh.Ny + 1)}")
    if path.M < mesh.M:
        raise ValueError(f"Brownian path has {path.M} increments, need at least {mesh.M}")

    tau, hx, hy = mesh.tau, mesh.hx, mesh.hy
    X, Y = mesh.xy_grids()
    Xi, Yi = X[1:-1, 1:-1], Y[1:-1, 1:-1]

    u = np.zeros(mesh.shape)
    u[0] = u0_grid
    _apply_dirichlet_slice(u[0], f[0])
    u[1] = u[0]
    _apply_dirichlet_slice(u[1], f[1])

    for k in range(1, mesh.M):
        tk = k * tau
        uk = u[k, 1:-1, 1:-1]
        lap = (
            (u[k, 2:, 1:-1] - 2.0 * uk + u[k, :-2, 1:-1]) / hx**2
            + (u[k, 1:-1, 2:] - 2.0 * uk + u[k, 1:-1, :-2]) / hy**2
        )
        gx = (u[k, 2:, 1:-1] - uk) / hx
        gy = (u[k, 1:-1, 2:] - uk) / hy
        base = 2.0 * uk - u[k - 1, 1:-1, 1:-1] + tau**2 * lap
        base += tau * a_fn(tk, Xi, Yi) * uk * path.increments[k]

        # Fixed-point sweep over the u_t argument of F.
        ut = (uk - u[k - 1, 1:-1, 1:-1]) / tau
        v = base + tau**2 * nonlinearity(tk, Xi, Yi, uk, ut, gx, gy)
        for _ in range(max_fixed_point):
            ut = (v - uk) / tau
            v_new = base + tau**2 * nonlinearity(tk, Xi, Yi, uk, ut, gx, gy)
            if not np.isfinite(v_new).all():
                v = v_new
                break
            delta = np.max(np.abs(v_new - v))
            v = v_new
            if delta <= fixed_point_tol * max(1.0, float(np.max(np.abs(v)))):
                break

        if not np.isfinite(v).all():
            bad = np.argwhere(~np.isfinite(v))[0]
            raise DivergenceError(k + 1, int(bad[0]) + 1, int(bad[1]) + 1)
        u[k + 1, 1:-1, 1:-1] = v
        _apply_dirichlet_slice(u[k + 1], f[k + 1])

    return Field(mesh, u)


# ---------------------------------------------------------------------------
# Enlarged-domain workflow: solve on a big domain, then restrict the
# trajectory onto an inverse-problem window.


def resample_slices(values, big: Mesh, window_xy, mesh_small: Mesh) -> np.ndarray:
    """Bilinear resampling of spatial slices (leading axes untouched).

    ``values`` has trailing shape (big.Nx+1, big.Ny+1); ``window_xy`` is
    ((x0, x1), (y0, y1)) in big-domain coordinates. Exact on fields linear
    in x and y.
    """
    (x0, x1), (y0, y1) = window_xy
    eps = 1e-9
    if x0 < big.ox - eps or x1 > big.ox + big.Lx + eps or y0 < big.oy - eps or y1 > big.oy + big.Ly + eps:
        raise ValueError("spatial window exceeds the big domain")
    if abs((x1 - x0) - mesh_small.Lx) > 1e-9 or abs((y1 - y0) - mesh_small.Ly) > 1e-9:
        raise ValueError("spatial window extents do not match the small mesh")

    xs = x0 + np.arange(mesh_small.Nx + 1) * mesh_small.hx
    ys = y0 + np.arange(mesh_small.Ny + 1) * mesh_small.hy
    px = np.clip((xs - big.ox) / big.hx, 0.0, big.Nx)
    py = np.clip((ys - big.oy) / big.hy, 0.0, big.Ny)
    ix = np.minimum(px.astype(int), big.Nx - 1)
    iy = np.minimum(py.astype(int), big.Ny - 1)
    wx = (px - ix)[:, None]
    wy = (py - iy)[None, :]

    v = np.asarray(values, dtype=np.float64)
    v00 = v[..., ix, :][..., iy]
    v10 = v[..., ix + 1, :][..., iy]
    v01 = v[..., ix, :][..., iy + 1]
    v11 = v[..., ix + 1, :][..., iy + 1]
    return (
        (1 - wx) * (1 - wy) * v00
        + wx * (1 - wy) * v10
        + (1 - wx) * wy * v01
        + wx * wy * v11
    )


def resample_window(u_big: Field, window, mesh_small: Mesh) -> Field:
    """Bilinear spatial resampling of a big-domain trajectory onto a window mesh.

    ``window`` is ((t0, t1), (x0, x1), (y0, y1)) in big-domain coordinates;
    the result lives on ``mesh_small`` with the window origin shifted to
    (mesh_small.ox, mesh_small.oy). Time levels are copied (the time steps
    must agree), space is interpolated bilinearly.
    """
    (t0, t1), wx, wy = window
    big = u_big.mesh
    if abs(big.tau - mesh_small.tau) > 1e-12 * big.tau:
        raise ValueError(f"time step mismatch: big tau={big.tau}, small tau={mesh_small.tau}")
    k0 = int(round(t0 / big.tau))
    if abs(k0 * big.tau - t0) > 1e-9 or k0 < 0 or k0 + mesh_small.M > big.M:
        raise ValueError("time window is not aligned with the big-domain grid")
    if abs((t1 - t0) - mesh_small.T) > 1e-9:
        raise ValueError("time window length does not match the small mesh horizon")
    sub = u_big.values[k0 : k0 + mesh_small.M + 1]
    return Field(mesh_small, resample_slices(sub, big, (wx, wy), mesh_small))


def restrict_to_subdomain(u_big: Field, window, mesh_small: Mesh):
    """Restrict a big-domain trajectory to the inverse mesh.

    Returns (u0, f, g): the resampled source slice, the Dirichlet trace of
    the resampled field, and its one-sided Neumann traces.
    """
    small = resample_window(u_big, window, mesh_small)
    u0 = small.values[0].copy()
    f = extract_dirichlet(small.values)
    g = extract_neumann(small)
    return u0, f, g


# ---------------------------------------------------------------------------
# Dataset generation.


def generate_dataset(
    experiment,
    n_paths: int,
    master_seed: int,
    *,
    delta: float | None = None,
    return_fields: bool = False,
):
    """Simulate ``n_paths`` forward trajectories and return their noisy Cauchy data.

    ``experiment`` provides the forward/inverse meshes, source, coefficient,
    nonlinearity, optional restriction window, and default noise level (see
    experiments.ExperimentSpec). With ``return_fields`` the clean
    inverse-mesh trajectories are returned alongside the records (the
    restricted ones for windowed experiments).
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if delta is None:
        delta = experiment.delta
    fmesh = experiment.forward_mesh
    imesh = experiment.inverse_mesh

    X, Y = fmesh.xy_grids()
    u0_big = experiment.source(X, Y)
    f_big = dirichlet_from_source(fmesh, u0_big)
    mask = boundary_mask(imesh)

    records, fields = [], []
    for p in range(n_paths):
        path = sample_path(split_seed(master_seed, "forward", p), fmesh.M, fmesh.tau)
        traj = solve_forward(fmesh, u0_big, f_big, experiment.a_forward, experiment.nonlinearity, path)
        if experiment.window is not None:
            traj = resample_window(traj, experiment.window, imesh)
        f_clean = extract_dirichlet(traj.values)
        g_clean = extract_neumann(traj)
        f_noisy, gl, gr, gt, _ = apply_noise(
            f_clean, g_clean.left, g_clean.right, g_clean.top, mask,
            delta, split_seed(master_seed, "noise", p),
        )
        records.append(CauchyData(imesh, f_noisy, gl, gr, gt, path_id=p, brownian=path))
        if return_fields:
            fields.append(traj)
    return (records, fields) if return_fields else records
