"""Carleman weights, observed-boundary classification, and admissibility checks.

The spatial weight is the shifted paraboloid

    psi(x, y) = (x - x0)^2 + (y - y0)^2 + offset,

with default center (0.5, -0.5) and offset -4.175, chosen so that psi has no
critical point in the closed domain and the observed boundary consists of the
left, right, and top edges. The space-time weight is
theta(t, x, y) = exp(lam * (psi - c0 * t^2)); theta0 drops the time decay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh

__all__ = [
    "CarlemanParams",
    "BoundaryClassification",
    "psi",
    "psi_grad",
    "theta",
    "theta0",
    "classify_boundary",
    "check_condition_psi2",
]


@dataclass(frozen=True)
class CarlemanParams:
    lam: float = 0.2
    c0: float = 0.25
    psi_center: tuple[float, float] = (0.5, -0.5)
    psi_offset: float = -4.175

    def __post_init__(self):
        if self.lam <= 0 or self.c0 <= 0:
            raise ValueError("lam and c0 must be positive")


DEFAULT_PARAMS = CarlemanParams()


def psi(x, y, params: CarlemanParams = DEFAULT_PARAMS):
    x0, y0 = params.psi_center
    return (np.asarray(x) - x0) ** 2 + (np.asarray(y) - y0) ** 2 + params.psi_offset


def psi_grad(x, y, params: CarlemanParams = DEFAULT_PARAMS):
    x0, y0 = params.psi_center
    return 2.0 * (np.asarray(x) - x0), 2.0 * (np.asarray(y) - y0)


def theta(t, x, y, params: CarlemanParams = DEFAULT_PARAMS):
    return np.exp(params.lam * (psi(x, y, params) - params.c0 * np.asarray(t) ** 2))


def theta0(x, y, params: CarlemanParams = DEFAULT_PARAMS):
    return np.exp(params.lam * psi(x, y, params))


@dataclass(frozen=True)
class BoundaryClassification:
    """Observed/unobserved status of each edge plus the node-level membership mask.

    A boundary node belongs to the observed part iff grad(psi) . nu > 0 for
    the outward normal nu of an edge containing it; corner nodes inherit
    membership from either adjoining observed edge.
    """

    left: bool
    right: bool
    bottom: bool
    top: bool
    node_mask: np.ndarray  # bool, shape (Nx+1, Ny+1), True on observed boundary nodes

    @property
    def observed_edges(self) -> tuple[str, ...]:
        return tuple(
            name for name, flag in
            (("left", self.left), ("right", self.right), ("bottom", self.bottom), ("top", self.top))
            if flag
        )


def classify_boundary(mesh: Mesh, params: CarlemanParams = DEFAULT_PARAMS) -> BoundaryClassification:
    """Classify each edge of the rectangle by the sign of grad(psi) . nu.

    For a paraboloid psi the normal component is constant along each edge
    (it depends only on the frozen coordinate), so edge-level classification
    is well defined and independent of the grid resolution.
    """
    x_lo, x_hi = mesh.ox, mesh.ox + mesh.Lx
    y_lo, y_hi = mesh.oy, mesh.oy + mesh.Ly
    y_mid, x_mid = 0.5 * (y_lo + y_hi), 0.5 * (x_lo + x_hi)

    def outward(xp, yp, nu):
        gx, gy = psi_grad(xp, yp, params)
        return gx * nu[0] + gy * nu[1]

    left = outward(x_lo, y_mid, (-1.0, 0.0)) > 0
    right = outward(x_hi, y_mid, (1.0, 0.0)) > 0
    bottom = outward(x_mid, y_lo, (0.0, -1.0)) > 0
    top = outward(x_mid, y_hi, (0.0, 1.0)) > 0

    mask = np.zeros((mesh.Nx + 1, mesh.Ny + 1), dtype=bool)
    if left:
        mask[0, :] = True
    if right:
        mask[mesh.Nx, :] = True
    if bottom:
        mask[:, 0] = True
    if top:
        mask[:, mesh.Ny] = True
    return BoundaryClassification(bool(left), bool(right), bool(bottom), bool(top), mask)


def check_condition_psi2(mesh: Mesh, params: CarlemanParams = DEFAULT_PARAMS, T: float | None = None) -> dict:
    """Numerically check the weight admissibility inequalities on the grid.

    Reports max psi (= R1^2), min (1/4)|grad psi|^2, min |grad psi|, and the
    verdicts (1/4)|grad psi|^2 >= R1^2, c0 < R1 / (sqrt(2) T), and
    min |grad psi| > 0. Evaluation on grid nodes is exact here because the
    extrema of a paraboloid over a rectangle sit on corners or axis points
    that are grid nodes for the meshes in use. The report is informational
    only and never blocks a run.
    """
    if T is None:
        T = mesh.T
    X, Y = mesh.xy_grids()
    psi_vals = psi(X, Y, params)
    gx, gy = psi_grad(X, Y, params)
    grad_sq = gx * gx + gy * gy

    r1_squared = float(psi_vals.max())
    r1 = float(np.sqrt(r1_squared)) if r1_squared >= 0 else float("nan")
    min_quarter_grad_sq = float(0.25 * grad_sq.min())
    min_grad_norm = float(np.sqrt(grad_sq.min()))
    temporal_bound = r1 / (np.sqrt(2.0) * T) if np.isfinite(r1) else float("nan")

    gradient_ok = min_quarter_grad_sq >= r1_squared
    temporal_ok = bool(np.isfinite(temporal_bound) and params.c0 < temporal_bound)
    no_critical_point = min_grad_norm > 0

    return {
        "lam": params.lam,
        "c0": params.c0,
        "T": float(T),
        "R1_squared": r1_squared,
        "R1": r1,
        "min_quarter_grad_psi_squared": min_quarter_grad_sq,
        "min_grad_psi_norm": min_grad_norm,
        "temporal_bound": float(temporal_bound),
        "gradient_condition_ok": bool(gradient_ok),
        "temporal_condition_ok": temporal_ok,
        "no_critical_point": bool(no_critical_point),
        "all_ok": bool(gradient_ok and temporal_ok and no_critical_point),
    }


def theta_sq_grid(mesh: Mesh, params: CarlemanParams = DEFAULT_PARAMS) -> np.ndarray:
    """theta^2 on the interior block k in [1, M-1], i in [1, Nx-1], j in [1, Ny-1]."""
    ts = np.arange(1, mesh.M) * mesh.tau
    X, Y = mesh.xy_grids()
    p = psi(X[1:-1, 1:-1], Y[1:-1, 1:-1], params)
    expo = 2.0 * params.lam * (p[None, :, :] - params.c0 * (ts**2)[:, None, None])
    return np.exp(expo)


def theta0_sq_grid(mesh: Mesh, params: CarlemanParams = DEFAULT_PARAMS) -> np.ndarray:
    """theta0^2 on the interior spatial block i in [1, Nx-1], j in [1, Ny-1]."""
    X, Y = mesh.xy_grids()
    return np.exp(2.0 * params.lam * psi(X[1:-1, 1:-1], Y[1:-1, 1:-1], params))
