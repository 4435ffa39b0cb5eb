"""Uniform space-time grids, field storage, finite-difference stencils, and field I/O.

A field is a real array ``u[k, i, j]`` over the nodes of a uniform mesh on
``[0, T] x [ox, ox+Lx] x [oy, oy+Ly]``, with ``k`` the time index (outermost,
so time slices are contiguous) and ``j`` innermost. All arithmetic is in
float64; the gradient checks downstream rely on full double precision.

Stencils are free functions evaluated at a node rather than materialized
derivative fields: the objective needs them on staggered index ranges, and
materializing every derivative would triple the memory footprint.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "Field",
    "build_mesh",
    "cfl_number",
    "d2t",
    "d2x",
    "d2y",
    "dt_fwd",
    "grad_fwd",
    "dxy",
    "dtx",
    "dty",
    "save_field",
    "load_field",
    "field_to_csv",
]

FIELD_MAGIC = b"CWI1"


@dataclass(frozen=True)
class Mesh:
    """Uniform space-time grid.

    Node ``(k, i, j)`` sits at ``(k*tau, ox + i*hx, oy + j*hy)`` with
    ``k in [0, M]``, ``i in [0, Nx]``, ``j in [0, Ny]``.
    """

    M: int
    Nx: int
    Ny: int
    T: float
    Lx: float
    Ly: float
    ox: float = 0.0
    oy: float = 0.0

    @property
    def tau(self) -> float:
        return self.T / self.M

    @property
    def hx(self) -> float:
        return self.Lx / self.Nx

    @property
    def hy(self) -> float:
        return self.Ly / self.Ny

    @property
    def shape(self) -> tuple[int, int, int]:
        """Array shape of a field on this mesh: (M+1, Nx+1, Ny+1)."""
        return (self.M + 1, self.Nx + 1, self.Ny + 1)

    def t(self, k):
        return np.asarray(k) * self.tau

    def x(self, i):
        return self.ox + np.asarray(i) * self.hx

    def y(self, j):
        return self.oy + np.asarray(j) * self.hy

    def node_coords(self, k: int, i: int, j: int) -> tuple[float, float, float]:
        return (k * self.tau, self.ox + i * self.hx, self.oy + j * self.hy)

    def index_of(self, t: float, x: float, y: float) -> tuple[int, int, int]:
        """Nearest grid index of a point; exact for grid nodes."""
        return (
            int(round(t / self.tau)),
            int(round((x - self.ox) / self.hx)),
            int(round((y - self.oy) / self.hy)),
        )

    def xy_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Spatial coordinate arrays X, Y of shape (Nx+1, Ny+1)."""
        xs = self.ox + np.arange(self.Nx + 1) * self.hx
        ys = self.oy + np.arange(self.Ny + 1) * self.hy
        return np.meshgrid(xs, ys, indexing="ij")


def build_mesh(M, Nx, Ny, T, Lx, Ly, ox=0.0, oy=0.0) -> Mesh:
    """Construct a mesh, rejecting degenerate dimensions.

    Minimums (M >= 3, Nx >= 4, Ny >= 4) guarantee that the interior index
    ranges used by the objective and the feasible-set rings are non-empty.
    """
    if M < 3 or Nx < 4 or Ny < 4:
        raise ValueError(f"mesh too small: M={M}, Nx={Nx}, Ny={Ny} (need M>=3, Nx>=4, Ny>=4)")
    if T <= 0 or Lx <= 0 or Ly <= 0:
        raise ValueError(f"non-positive extent: T={T}, Lx={Lx}, Ly={Ly}")
    return Mesh(int(M), int(Nx), int(Ny), float(T), float(Lx), float(Ly), float(ox), float(oy))


def cfl_number(mesh: Mesh) -> float:
    """Explicit-scheme stability number tau * sqrt(1/hx^2 + 1/hy^2); stable below 1."""
    return mesh.tau * np.sqrt(1.0 / mesh.hx**2 + 1.0 / mesh.hy**2)


@dataclass(frozen=True)
class Field:
    """A float64 array over all mesh nodes, indexed (k, i, j)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != self.mesh.shape:
            raise ValueError(f"field shape {v.shape} does not match mesh shape {self.mesh.shape}")
        if not np.isfinite(v).all():
            raise ValueError("field contains non-finite entries")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mesh: Mesh) -> "Field":
        return cls(mesh, np.zeros(mesh.shape))

    @classmethod
    def from_function(cls, mesh: Mesh, fn) -> "Field":
        """Sample ``fn(t, x, y)`` (vectorized) on every node."""
        X, Y = mesh.xy_grids()
        ts = np.arange(mesh.M + 1) * mesh.tau
        vals = fn(ts[:, None, None], X[None, :, :], Y[None, :, :])
        return cls(mesh, np.broadcast_to(vals, mesh.shape).copy())


def _vals(F) -> np.ndarray:
    return F.values if isinstance(F, Field) else np.asarray(F)


def _steps(F, mesh: Mesh | None):
    if mesh is None:
        if not isinstance(F, Field):
            raise TypeError("pass a Field or supply mesh= explicitly")
        mesh = F.mesh
    return mesh.tau, mesh.hx, mesh.hy


# Pointwise divided differences. Index validity (e.g. 1 <= k <= M-1 for d2t,
# k <= M-1 / i <= Nx-1 / j <= Ny-1 for the forward and mixed stencils) is the
# caller's contract; out-of-range indices raise IndexError via numpy.


def d2t(F, k, i, j, mesh=None):
    """Second time difference with a single division by tau: (u_{k+1} - 2u_k + u_{k-1}) / tau."""
    tau, _, _ = _steps(F, mesh)
    u = _vals(F)
    return (u[k + 1, i, j] - 2.0 * u[k, i, j] + u[k - 1, i, j]) / tau


def d2x(F, k, i, j, mesh=None):
    _, hx, _ = _steps(F, mesh)
    u = _vals(F)
    return (u[k, i + 1, j] - 2.0 * u[k, i, j] + u[k, i - 1, j]) / hx**2


def d2y(F, k, i, j, mesh=None):
    _, _, hy = _steps(F, mesh)
    u = _vals(F)
    return (u[k, i, j + 1] - 2.0 * u[k, i, j] + u[k, i, j - 1]) / hy**2


def dt_fwd(F, k, i, j, mesh=None):
    tau, _, _ = _steps(F, mesh)
    u = _vals(F)
    return (u[k + 1, i, j] - u[k, i, j]) / tau


def grad_fwd(F, k, i, j, mesh=None):
    """Forward-difference spatial gradient (gx, gy)."""
    _, hx, hy = _steps(F, mesh)
    u = _vals(F)
    gx = (u[k, i + 1, j] - u[k, i, j]) / hx
    gy = (u[k, i, j + 1] - u[k, i, j]) / hy
    return gx, gy


def dxy(F, k, i, j, mesh=None):
    _, hx, hy = _steps(F, mesh)
    u = _vals(F)
    return (u[k, i + 1, j + 1] - u[k, i + 1, j] - u[k, i, j + 1] + u[k, i, j]) / (hx * hy)


def dtx(F, k, i, j, mesh=None):
    tau, hx, _ = _steps(F, mesh)
    u = _vals(F)
    return (u[k + 1, i + 1, j] - u[k + 1, i, j] - u[k, i + 1, j] + u[k, i, j]) / (hx * tau)


def dty(F, k, i, j, mesh=None):
    tau, _, hy = _steps(F, mesh)
    u = _vals(F)
    return (u[k + 1, i, j + 1] - u[k + 1, i, j] - u[k, i, j + 1] + u[k, i, j]) / (hy * tau)


# ---------------------------------------------------------------------------
# Serialization.
#
# Flat binary format: magic "CWI1", three int64 LE dimensions (the array
# shape), six float64 LE mesh parameters (T, Lx, Ly, ox, oy, reserved 0),
# then the row-major float64 payload. Degenerate shapes like (M, 1, 1) store
# 1-D data (Brownian increments) in the same container.

_HEADER = struct.Struct("<4s3q6d")


def write_raw(path, dims, params, values: np.ndarray) -> None:
    dims = tuple(int(d) for d in dims)
    params = tuple(float(p) for p in params)
    if len(dims) != 3 or len(params) != 6:
        raise ValueError("expected 3 dimensions and 6 parameters")
    flat = np.ascontiguousarray(values, dtype="<f8").reshape(-1)
    if flat.size != dims[0] * dims[1] * dims[2]:
        raise ValueError("value count does not match dimensions")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, *dims, *params))
        fh.write(flat.tobytes())


def read_raw(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        unpacked = _HEADER.unpack(head)
        if unpacked[0] != FIELD_MAGIC:
            raise ValueError(f"{path}: bad magic {unpacked[0]!r}")
        dims = unpacked[1:4]
        params = unpacked[4:10]
        payload = np.frombuffer(fh.read(), dtype="<f8")
    n = dims[0] * dims[1] * dims[2]
    if payload.size != n:
        raise ValueError(f"{path}: expected {n} values, found {payload.size}")
    return dims, params, payload.reshape(dims).astype(np.float64)


def save_field(field: Field, path) -> None:
    m = field.mesh
    write_raw(path, m.shape, (m.T, m.Lx, m.Ly, m.ox, m.oy, 0.0), field.values)


def load_field(path) -> Field:
    dims, params, values = read_raw(path)
    mesh = build_mesh(dims[0] - 1, dims[1] - 1, dims[2] - 1, *params[:5])
    return Field(mesh, values)


def field_to_csv(field: Field, path) -> None:
    """Plot-friendly export: one row (t, x, y, value) per node."""
    m = field.mesh
    ts = np.arange(m.M + 1) * m.tau
    X, Y = m.xy_grids()
    tt = np.repeat(ts, (m.Nx + 1) * (m.Ny + 1))
    xx = np.tile(X.ravel(), m.M + 1)
    yy = np.tile(Y.ravel(), m.M + 1)
    rows = np.column_stack([tt, xx, yy, field.values.ravel()])
    np.savetxt(path, rows, delimiter=",", header="t,x,y,value", comments="")
