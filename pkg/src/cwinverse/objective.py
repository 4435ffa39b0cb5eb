"""Carleman-weighted Tikhonov objective over the data-constrained tensor.

The optimization variable is the set of free entries of a space-time field
whose remaining entries are pinned by the measured Cauchy data:

  * boundary nodes carry the Dirichlet trace f at every time level,
  * the rings one node inside the observed edges are tied through the
    one-sided Neumann data (u_{k,Nx-1,j} = u_{k,Nx,j} - hx*g_right, and the
    analogous relations on the left and top edges),
  * the k = 0 layer mirrors k = 1 (discrete u_t(0) = 0),
  * the ring above the unobserved bottom edge has no Neumann relation; it is
    free by default (`bottom_ring_mode="free"`) or pinned to its initial
    value (`"frozen"`).

For a fixed sample path and previous iterate the objective is an exact
quadratic in the free entries, so the whole pipeline
(residual-or-stencil) o (embedding) is assembled once per context as sparse
matrices; the gradient is then one matvec with the (weighted) normal matrix,
with cost O(#grid) per evaluation and no per-step graph construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .forward import CauchyData, Nonlinearity
from .mesh import Field, Mesh
from .stochastic import BrownianPath
from .weights import CarlemanParams, theta0_sq_grid, theta_sq_grid

__all__ = [
    "DofLayout",
    "ObjectiveContext",
    "SharedAssembly",
    "build_shared_assembly",
    "embed",
    "extract_free",
    "phi_field",
    "eval_F_field",
    "eval_J",
    "eval_J_direct",
    "grad_J",
    "stencil_blocks",
]


@dataclass(frozen=True)
class DofLayout:
    """Partition of the field indices into free, Dirichlet, tied, and mirror sets.

    Free entries: k in [1, M], i in [2, Nx-2], j in [j_lo, Ny-2] where
    j_lo = 1 when the bottom ring is free and 2 when it is frozen. Every
    other entry is defined by exactly one rule (Dirichlet data, a Neumann
    tie, the k = 0 mirror, or the frozen bottom ring), so reconstructing a
    field from free values plus data is idempotent.
    """

    mesh: Mesh
    bottom_ring_mode: str = "free"

    def __post_init__(self):
        if self.bottom_ring_mode not in ("free", "frozen"):
            raise ValueError(f"bottom_ring_mode must be 'free' or 'frozen', got {self.bottom_ring_mode!r}")

    @property
    def j_lo(self) -> int:
        return 1 if self.bottom_ring_mode == "free" else 2

    @property
    def free_shape(self) -> tuple[int, int, int]:
        m = self.mesh
        return (m.M, m.Nx - 3, m.Ny - 1 - self.j_lo)

    @property
    def n_free(self) -> int:
        s = self.free_shape
        return s[0] * s[1] * s[2]

    def _free_block(self):
        m = self.mesh
        return (slice(1, m.M + 1), slice(2, m.Nx - 1), slice(self.j_lo, m.Ny - 1))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.free_shape)

    def embed(self, free: np.ndarray, data: CauchyData, frozen_bottom: np.ndarray | None = None) -> np.ndarray:
        """Materialize the full field for a free-entry tensor; affine in ``free``."""
        m = self.mesh
        free = np.asarray(free, dtype=np.float64)
        if free.shape != self.free_shape:
            raise ValueError(f"free values have shape {free.shape}, expected {self.free_shape}")
        u = np.zeros(m.shape)
        # Dirichlet ring at every level (k = 0 is overwritten by the mirror below).
        u[:, 0, :] = data.f[:, 0, :]
        u[:, -1, :] = data.f[:, -1, :]
        u[:, :, 0] = data.f[:, :, 0]
        u[:, :, -1] = data.f[:, :, -1]
        # Neumann ties; they depend only on data, never on free entries.
        u[:, 1, 1:-1] = u[:, 0, 1:-1] - m.hx * data.g_left[:, 1:-1]
        u[:, -2, 1:-1] = u[:, -1, 1:-1] - m.hx * data.g_right[:, 1:-1]
        u[:, 2:-2, -2] = u[:, 2:-2, -1] - m.hy * data.g_top[:, 2:-2]
        if self.bottom_ring_mode == "frozen":
            if frozen_bottom is not None:
                u[1:, 2:-2, 1] = frozen_bottom
        u[self._free_block()] = free
        u[0] = u[1]
        return u

    def extract_free(self, u: np.ndarray) -> np.ndarray:
        return u[self._free_block()].copy()

    def linear_matrix(self) -> sp.csr_matrix:
        """Sparse linear part E of the embedding: full field <- free entries."""
        m = self.mesh
        idx = np.arange((m.M + 1) * (m.Nx + 1) * (m.Ny + 1)).reshape(m.shape)
        cols_block = np.arange(self.n_free).reshape(self.free_shape)
        rows = idx[self._free_block()].ravel()
        cols = cols_block.ravel()
        # Mirror: the k = 0 layer repeats the free entries of the k = 1 layer.
        rows0 = idx[0, 2:-2, self.j_lo : m.Ny - 1].ravel()
        cols0 = cols_block[0].ravel()
        r = np.concatenate([rows, rows0])
        c = np.concatenate([cols, cols0])
        return sp.csr_matrix(
            (np.ones(r.size), (r, c)), shape=(idx.size, self.n_free)
        )


# ---------------------------------------------------------------------------
# Sparse stencil operators over the interior block k in [1, M-1],
# i in [1, Nx-1], j in [1, Ny-1] (row order: k outer, j inner).


def _interior_count(m: Mesh) -> int:
    return (m.M - 1) * (m.Nx - 1) * (m.Ny - 1)


def _stencil_matrix(m: Mesh, terms) -> sp.csr_matrix:
    """Operator mapping a flattened full field to interior-block values.

    ``terms`` is a list of (dk, di, dj, coef) with scalar or block-shaped
    coefficient arrays.
    """
    idx = np.arange((m.M + 1) * (m.Nx + 1) * (m.Ny + 1)).reshape(m.shape)
    n_rows = _interior_count(m)
    rows_base = np.arange(n_rows)
    rows, cols, vals = [], [], []
    for dk, di, dj, coef in terms:
        block = idx[1 + dk : m.M + dk, 1 + di : m.Nx + di, 1 + dj : m.Ny + dj]
        rows.append(rows_base)
        cols.append(block.ravel())
        coef = np.asarray(coef, dtype=np.float64)
        vals.append(np.broadcast_to(coef, (n_rows,)) if coef.ndim == 0 else coef.ravel())
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_rows, idx.size),
    )
    mat.sum_duplicates()
    return mat


def _regularizer_terms(m: Mesh):
    tau, hx, hy = m.tau, m.hx, m.hy
    return [
        ("u", [(0, 0, 0, 1.0)]),
        ("ut", [(1, 0, 0, 1.0 / tau), (0, 0, 0, -1.0 / tau)]),
        ("gx", [(0, 1, 0, 1.0 / hx), (0, 0, 0, -1.0 / hx)]),
        ("gy", [(0, 0, 1, 1.0 / hy), (0, 0, 0, -1.0 / hy)]),
        ("uxx", [(0, 1, 0, 1.0 / hx**2), (0, 0, 0, -2.0 / hx**2), (0, -1, 0, 1.0 / hx**2)]),
        ("uyy", [(0, 0, 1, 1.0 / hy**2), (0, 0, 0, -2.0 / hy**2), (0, 0, -1, 1.0 / hy**2)]),
        ("uxy", [(0, 1, 1, 1.0 / (hx * hy)), (0, 1, 0, -1.0 / (hx * hy)),
                 (0, 0, 1, -1.0 / (hx * hy)), (0, 0, 0, 1.0 / (hx * hy))]),
        ("utx", [(1, 1, 0, 1.0 / (tau * hx)), (1, 0, 0, -1.0 / (tau * hx)),
                 (0, 1, 0, -1.0 / (tau * hx)), (0, 0, 0, 1.0 / (tau * hx))]),
        ("uty", [(1, 0, 1, 1.0 / (tau * hy)), (1, 0, 0, -1.0 / (tau * hy)),
                 (0, 0, 1, -1.0 / (tau * hy)), (0, 0, 0, 1.0 / (tau * hy))]),
    ]


def _phi_terms(m: Mesh, a_block: np.ndarray, increments: np.ndarray):
    """Linear residual operator: d2t/tau^2 - u_xx - u_yy - (a dW_k / tau) u."""
    tau, hx, hy = m.tau, m.hx, m.hy
    ito = a_block * (increments[1 : m.M, None, None] / tau)
    center = (-2.0 / tau**2 + 2.0 / hx**2 + 2.0 / hy**2) - ito
    return [
        (1, 0, 0, 1.0 / tau**2),
        (-1, 0, 0, 1.0 / tau**2),
        (0, 1, 0, -1.0 / hx**2),
        (0, -1, 0, -1.0 / hx**2),
        (0, 0, 1, -1.0 / hy**2),
        (0, 0, -1, -1.0 / hy**2),
        (0, 0, 0, center),
    ]


@dataclass(frozen=True)
class SharedAssembly:
    """Path-independent pieces of the assembly, reusable across sample paths.

    Holds the embedding matrix, the stacked regularizer stencils (over the
    full field and composed with the embedding), the per-row regularizer
    weights, and the regularizer's normal matrix.
    """

    layout: DofLayout
    carleman: CarlemanParams
    kappa: float
    E: sp.csr_matrix
    S_reg: sp.csr_matrix        # (9 * n_interior) x n_full
    A_reg: sp.csr_matrix        # S_reg @ E
    w_reg: np.ndarray           # per-row weight kappa * theta0^2 * tau hx hy
    H_reg: sp.csr_matrix        # A_reg^T diag(w_reg) A_reg
    theta_sq: np.ndarray        # interior block
    theta0_sq: np.ndarray       # interior spatial block


def build_shared_assembly(mesh: Mesh, carleman: CarlemanParams, kappa: float, layout: DofLayout | None = None) -> SharedAssembly:
    if layout is None:
        layout = DofLayout(mesh)
    if layout.mesh != mesh:
        raise ValueError("layout was built for a different mesh")
    vol = mesh.tau * mesh.hx * mesh.hy
    theta_sq = theta_sq_grid(mesh, carleman)
    theta0_sq = theta0_sq_grid(mesh, carleman)

    E = layout.linear_matrix()
    mats = [_stencil_matrix(mesh, terms) for _, terms in _regularizer_terms(mesh)]
    S_reg = sp.vstack(mats, format="csr")
    w_one = (kappa * vol) * np.broadcast_to(theta0_sq[None, :, :], (mesh.M - 1, mesh.Nx - 1, mesh.Ny - 1)).ravel()
    w_reg = np.tile(w_one, len(mats))
    A_reg = (S_reg @ E).tocsr()
    H_reg = (A_reg.multiply(w_reg[:, None]).T @ A_reg).tocsr()
    return SharedAssembly(layout, carleman, float(kappa), E, S_reg, A_reg, w_reg, H_reg, theta_sq, theta0_sq)


class ObjectiveContext:
    """Everything needed to evaluate the functional and its exact gradient.

    Fixed per (sample path, Cauchy data) pair; call ``set_previous_iterate``
    when the outer fixed-point iteration advances. The quadratic form is
    J(p) = p.Hp - 2 b.p + c0 with H assembled once per context.
    """

    def __init__(
        self,
        mesh: Mesh,
        carleman: CarlemanParams,
        kappa: float,
        data: CauchyData,
        path: BrownianPath,
        a_fn,
        nonlinearity: Nonlinearity,
        u_prev=None,
        *,
        layout: DofLayout | None = None,
        paper_literal_volume: bool = False,
        frozen_bottom: np.ndarray | None = None,
        shared: SharedAssembly | None = None,
    ):
        if path.M < mesh.M:
            raise ValueError(f"Brownian path has {path.M} increments, need {mesh.M}")
        if shared is None:
            shared = build_shared_assembly(mesh, carleman, kappa, layout)
        elif layout is not None and shared.layout != layout:
            raise ValueError("shared assembly does not match the requested layout")
        self.mesh = mesh
        self.carleman = carleman
        self.kappa = float(kappa)
        self.data = data
        self.path = path
        self.a_fn = a_fn
        self.nonlinearity = nonlinearity
        self.layout = shared.layout
        self.paper_literal_volume = bool(paper_literal_volume)
        self.frozen_bottom = frozen_bottom
        self.theta_sq = shared.theta_sq
        self.theta0_sq = shared.theta0_sq

        m = mesh
        ts = np.arange(1, m.M) * m.tau
        X, Y = m.xy_grids()
        self._a_block = np.broadcast_to(
            a_fn(ts[:, None, None], X[None, 1:-1, 1:-1], Y[None, 1:-1, 1:-1]),
            (m.M - 1, m.Nx - 1, m.Ny - 1),
        ).astype(np.float64)

        vol = m.tau * m.hx * m.hy
        vol_data = vol * vol if paper_literal_volume else vol
        self._w_data = (vol_data * self.theta_sq).ravel()

        D = _stencil_matrix(m, _phi_terms(m, self._a_block, path.increments))
        self._D = D
        self._A_data = (D @ shared.E).tocsr()
        self._offset = self.layout.embed(self.layout.zeros(), data, frozen_bottom).ravel()
        self._D_offset = D @ self._offset
        self._c_reg = -(shared.S_reg @ self._offset)
        self._b_reg = shared.A_reg.T @ (shared.w_reg * self._c_reg)
        self._c0_reg = float(self._c_reg @ (shared.w_reg * self._c_reg))
        self._H = (self._A_data.multiply(self._w_data[:, None]).T @ self._A_data).tocsr()
        self._H = (self._H + shared.H_reg).tocsr()

        if u_prev is None:
            u_prev = Field(mesh, self.layout.embed(self.layout.zeros(), data, frozen_bottom))
        self.set_previous_iterate(u_prev)

    @property
    def n_free(self) -> int:
        return self.layout.n_free

    def set_previous_iterate(self, u_prev) -> None:
        """Refresh the affine part for a new frozen iterate of the outer loop."""
        u_prev_vals = u_prev.values if isinstance(u_prev, Field) else np.asarray(u_prev, dtype=np.float64)
        if not np.isfinite(u_prev_vals).all():
            raise ValueError("previous iterate contains non-finite entries")
        self.u_prev = u_prev_vals
        self._F_prev = eval_F_field(u_prev_vals, self)
        c_data = self._F_prev.ravel() - self._D_offset
        self._c_data = c_data
        self._b = self._b_reg + self._A_data.T @ (self._w_data * c_data)
        self._c0 = self._c0_reg + float(c_data @ (self._w_data * c_data))

    # -- spec operations ---------------------------------------------------

    def embed(self, free: np.ndarray) -> np.ndarray:
        return self.layout.embed(free, self.data, self.frozen_bottom)

    def eval_J(self, free: np.ndarray) -> float:
        p = self._as_vector(free)
        Hp = self._H @ p
        value = float(p @ Hp - 2.0 * (self._b @ p) + self._c0)
        if not np.isfinite(value):
            raise FloatingPointError("objective evaluated to a non-finite value")
        return value

    def grad_J(self, free: np.ndarray) -> np.ndarray:
        p = self._as_vector(free)
        g = 2.0 * (self._H @ p - self._b)
        if not np.isfinite(g).all():
            raise FloatingPointError("gradient evaluated to a non-finite value")
        return g.reshape(self.layout.free_shape)

    def _as_vector(self, free: np.ndarray) -> np.ndarray:
        free = np.asarray(free, dtype=np.float64)
        if free.shape == (self.n_free,):
            return free
        if free.shape != self.layout.free_shape:
            raise ValueError(f"free values have shape {free.shape}, expected {self.layout.free_shape}")
        return free.ravel()


# Module-level forms of the operations, taking the context explicitly.


def embed(free: np.ndarray, ctx: ObjectiveContext) -> np.ndarray:
    return ctx.embed(free)


def extract_free(u: np.ndarray, ctx: ObjectiveContext) -> np.ndarray:
    return ctx.layout.extract_free(u)


def phi_field(u, ctx: ObjectiveContext) -> np.ndarray:
    """Scheme residual (second time difference minus Laplacian minus Ito term),
    divided through by tau, on the interior block."""
    vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=np.float64)
    m = ctx.mesh
    tau, hx, hy = m.tau, m.hx, m.hy
    c = vals[1:-1, 1:-1, 1:-1]
    du_t = (vals[2:, 1:-1, 1:-1] - 2.0 * c + vals[:-2, 1:-1, 1:-1]) / tau
    uxx = (vals[1:-1, 2:, 1:-1] - 2.0 * c + vals[1:-1, :-2, 1:-1]) / hx**2
    uyy = (vals[1:-1, 1:-1, 2:] - 2.0 * c + vals[1:-1, 1:-1, :-2]) / hy**2
    ito = ctx._a_block * c * ctx.path.increments[1 : m.M, None, None]
    return (du_t - (uxx + uyy) * tau - ito) / tau


def eval_F_field(u, ctx: ObjectiveContext) -> np.ndarray:
    """Nonlinearity evaluated with forward differences on the interior block."""
    vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=np.float64)
    m = ctx.mesh
    c = vals[1:-1, 1:-1, 1:-1]
    ut = (vals[2:, 1:-1, 1:-1] - c) / m.tau
    gx = (vals[1:-1, 2:, 1:-1] - c) / m.hx
    gy = (vals[1:-1, 1:-1, 2:] - c) / m.hy
    ts = np.arange(1, m.M) * m.tau
    X, Y = m.xy_grids()
    out = ctx.nonlinearity(
        ts[:, None, None], X[None, 1:-1, 1:-1], Y[None, 1:-1, 1:-1], c, ut, gx, gy
    )
    out = np.broadcast_to(np.asarray(out, dtype=np.float64), c.shape)
    if not np.isfinite(out).all():
        bad = np.argwhere(~np.isfinite(out))[0]
        raise FloatingPointError(
            f"nonlinearity produced a non-finite value at interior node "
            f"(k={bad[0] + 1}, i={bad[1] + 1}, j={bad[2] + 1})"
        )
    return out


def eval_J(free: np.ndarray, ctx: ObjectiveContext) -> float:
    return ctx.eval_J(free)


def grad_J(free: np.ndarray, ctx: ObjectiveContext) -> np.ndarray:
    return ctx.grad_J(free)


def stencil_blocks(u: np.ndarray, m: Mesh) -> dict[str, np.ndarray]:
    """All regularizer stencils of a full field on the interior block."""
    tau, hx, hy = m.tau, m.hx, m.hy
    c = u[1:-1, 1:-1, 1:-1]
    return {
        "u": c,
        "ut": (u[2:, 1:-1, 1:-1] - c) / tau,
        "gx": (u[1:-1, 2:, 1:-1] - c) / hx,
        "gy": (u[1:-1, 1:-1, 2:] - c) / hy,
        "uxx": (u[1:-1, 2:, 1:-1] - 2.0 * c + u[1:-1, :-2, 1:-1]) / hx**2,
        "uyy": (u[1:-1, 1:-1, 2:] - 2.0 * c + u[1:-1, 1:-1, :-2]) / hy**2,
        "uxy": (u[1:-1, 2:, 2:] - u[1:-1, 2:, 1:-1] - u[1:-1, 1:-1, 2:] + c) / (hx * hy),
        "utx": (u[2:, 2:, 1:-1] - u[2:, 1:-1, 1:-1] - u[1:-1, 2:, 1:-1] + c) / (tau * hx),
        "uty": (u[2:, 1:-1, 2:] - u[2:, 1:-1, 1:-1] - u[1:-1, 1:-1, 2:] + c) / (tau * hy),
    }


def eval_J_direct(free: np.ndarray, ctx: ObjectiveContext) -> float:
    """Evaluate the functional without the assembled matrices.

    Materializes the embedded field and sums the weighted squares of the
    residual and the regularizer stencils slice by slice. Serves as the
    independent route for gradient/objective verification.
    """
    m = ctx.mesh
    u = ctx.embed(np.asarray(free, dtype=np.float64).reshape(ctx.layout.free_shape))
    vol = m.tau * m.hx * m.hy
    vol_data = vol * vol if ctx.paper_literal_volume else vol
    residual = phi_field(u, ctx) - ctx._F_prev
    data_term = vol_data * np.sum(ctx.theta_sq * residual**2)
    blocks = stencil_blocks(u, m)
    reg_sum = np.zeros_like(ctx.theta_sq)
    for block in blocks.values():
        reg_sum += block**2
    reg_term = ctx.kappa * vol * np.sum(ctx.theta0_sq[None, :, :] * reg_sum)
    return float(data_term + reg_term)
