"""Deterministic seeded randomness: Brownian increments and measurement noise.

Every random draw is a pure function of a seed. The bit generator is Philox
(counter based, platform independent); Gaussians are produced by applying the
inverse normal CDF to uniforms drawn on the open interval (0, 1), so a stream
is reproducible bit for bit from its seed alone. Role seeds are derived from
a master seed through numpy's SeedSequence spawn keys, keyed by (role tag,
index); adding sample paths therefore never perturbs existing ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import mesh as meshmod

__all__ = [
    "RNG_ALGORITHM",
    "ROLE_TAGS",
    "split_seed",
    "generator",
    "standard_normal",
    "BrownianPath",
    "sample_path",
    "NoiseRealization",
    "sample_noise",
    "apply_noise",
    "save_increments",
    "load_increments",
]

# Recorded in run manifests so outputs document the exact sampling scheme.
RNG_ALGORITHM = "philox4x64-10+invcdf"

ROLE_TAGS = {
    "forward": 1,    # Brownian path driving a forward solve
    "noise": 2,      # multiplicative measurement noise
    "functional": 3, # Brownian path sampled inside the objective
}


def split_seed(master_seed: int, role: str, index: int) -> np.random.SeedSequence:
    """Child seed for (role, index), independent of all other (role, index) pairs."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(ROLE_TAGS[role], int(index)))


def generator(seed) -> np.random.Generator:
    """Philox generator from an int seed or a SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def standard_normal(gen: np.random.Generator, size) -> np.ndarray:
    # Uniform on the open interval via integers in [1, 2^53), then inverse CDF.
    u = gen.integers(1, 1 << 53, size=size) / float(1 << 53)
    return ndtri(u)


@dataclass(frozen=True)
class BrownianPath:
    """Increments dW_k = W_{k+1} - W_k for k in [0, M-1], each N(0, tau)."""

    increments: np.ndarray
    tau: float
    seed: object = None  # int or (master, role, index) tuple; metadata only

    def __post_init__(self):
        inc = np.ascontiguousarray(self.increments, dtype=np.float64)
        object.__setattr__(self, "increments", inc)

    @property
    def M(self) -> int:
        return self.increments.shape[0]


def sample_path(seed, M: int, tau: float) -> BrownianPath:
    """i.i.d. Gaussian increments with standard deviation sqrt(tau).

    The nominal N(0, sqrt(tau)) increment law is taken as std-dev sqrt(tau),
    i.e. variance tau, the Euler-Maruyama convention.
    """
    if M < 1 or tau <= 0:
        raise ValueError(f"need M >= 1 and tau > 0, got M={M}, tau={tau}")
    gen = generator(seed)
    inc = np.sqrt(tau) * standard_normal(gen, M)
    tag = seed if not isinstance(seed, np.random.SeedSequence) else (seed.entropy, seed.spawn_key)
    return BrownianPath(inc, float(tau), tag)


@dataclass(frozen=True)
class NoiseRealization:
    """Uniform[-1, 1] draws for the Dirichlet trace and each Neumann edge."""

    xi_f: np.ndarray          # (M+1, n_boundary_nodes)
    xi_g_left: np.ndarray     # (M+1, Ny+1)
    xi_g_right: np.ndarray    # (M+1, Ny+1)
    xi_g_top: np.ndarray      # (M+1, Nx+1)
    seed: object = None


def sample_noise(seed, n_time: int, n_boundary: int, n_left: int, n_right: int, n_top: int) -> NoiseRealization:
    gen = generator(seed)

    def uni(cols):
        return gen.uniform(-1.0, 1.0, size=(n_time, cols))

    tag = seed if not isinstance(seed, np.random.SeedSequence) else (seed.entropy, seed.spawn_key)
    return NoiseRealization(uni(n_boundary), uni(n_left), uni(n_right), uni(n_top), tag)


def apply_noise(f, g_left, g_right, g_top, boundary_mask, delta: float, seed):
    """Multiplicative noise v -> v * (1 + delta * xi), xi ~ U[-1, 1] per entry.

    ``f`` is a full field-shaped array whose boundary ring (selected by
    ``boundary_mask`` over the spatial grid) carries the Dirichlet trace; the
    three ``g_*`` arrays are per-edge Neumann traces. Every entry gets an
    independent draw; the draws for f and for g at the same node are
    independent as well.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    f = np.array(f, dtype=np.float64)
    gl = np.array(g_left, dtype=np.float64)
    gr = np.array(g_right, dtype=np.float64)
    gt = np.array(g_top, dtype=np.float64)
    noise = sample_noise(seed, f.shape[0], int(boundary_mask.sum()), gl.shape[1], gr.shape[1], gt.shape[1])
    if delta > 0:
        f[:, boundary_mask] *= 1.0 + delta * noise.xi_f
        gl *= 1.0 + delta * noise.xi_g_left
        gr *= 1.0 + delta * noise.xi_g_right
        gt *= 1.0 + delta * noise.xi_g_top
    return f, gl, gr, gt, noise


def save_increments(path_obj: BrownianPath, filename) -> None:
    """Persist a Brownian path in the field container (degenerate (M, 1, 1) shape)."""
    meshmod.write_raw(filename, (path_obj.M, 1, 1), (path_obj.tau, 0, 0, 0, 0, 0), path_obj.increments)


def load_increments(filename) -> BrownianPath:
    dims, params, values = meshmod.read_raw(filename)
    return BrownianPath(values.reshape(dims[0]), params[0], None)
