"""Closed-form heat-wave quantities and the companion ODE / SDE samplers.

The symmetrized heat kernel launched from the lattice is

    rho_eps(t, X) = (N! (2 pi eps t)^(Nd/2))^-1 sum_sigma exp(-|X - A^sigma|^2 / (2 eps t)),

and the transporting velocity field, two ways (they agree identically):

    v_eps(t, X) = -(eps/2) grad log rho_eps(t, X)
                = (X - <A^sigma> at X/(eps t)) / (2 t).

``integrate_companion`` follows dX/dt = v_eps with a classical 4th-order
one-step method; ``sample_sde`` adds sqrt(eta) alpha(t) dB noise with
Euler-Maruyama and a counter-based generator (Philox keyed by the seed, the
step index as counter), so identical seeds give identical paths regardless of
scheduling, and eta = 0 reduces to the explicit Euler path bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clouds import Lattice, Trajectory, as_cloud
from .errors import NumericalError
from .potential import lattice_vertices, softmax_vertex_average, _require_cap

__all__ = [
    "NoiseSpec",
    "rho_eps",
    "log_rho_eps",
    "v_eps",
    "integrate_companion",
    "sample_sde",
    "sample_sde_batch",
]

_ALPHAS = {
    "inv_sqrt_t": lambda t: 1.0 / math.sqrt(t),
    "one": lambda t: 1.0,
}


@dataclass(frozen=True)
class NoiseSpec:
    """Noise level, time profile alpha(t), seed, and step count for the SDE."""

    eta: float = 0.0
    alpha: str = "inv_sqrt_t"
    seed: int = 0
    steps: int = 512

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.alpha not in _ALPHAS:
            raise ValueError(f"unknown alpha profile {self.alpha!r}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


def _check(t: float, eps: float) -> None:
    if t <= 0:
        raise ValueError("t must be > 0")
    if eps <= 0:
        raise ValueError("eps must be > 0")


def log_rho_eps(t: float, X, eps: float, A: Lattice) -> float:
    """log of the symmetrized Gaussian mixture, evaluated in log-space."""
    _check(t, eps)
    X = as_cloud(X, A.dim)
    _require_cap(A.count, "rho_eps")
    verts = lattice_vertices(A)
    diff = X[None, :, :] - verts
    sq = np.einsum("pnd,pnd->p", diff, diff)
    exponents = -sq / (2.0 * eps * t)
    m = float(exponents.max())
    lse = m + math.log(float(np.mean(np.exp(exponents - m))))
    nd = A.count * A.dim
    return lse - 0.5 * nd * math.log(2.0 * math.pi * eps * t)


def rho_eps(t: float, X, eps: float, A: Lattice) -> float:
    """Probability density of the Brownian point cloud; positive and permutation-symmetric."""
    return math.exp(log_rho_eps(t, X, eps, A))


def v_eps(t: float, X, eps: float, A: Lattice) -> np.ndarray:
    """Transporting velocity (X - <A^sigma>_{X/(eps t)}) / (2t)."""
    _check(t, eps)
    X = as_cloud(X, A.dim)
    _require_cap(A.count, "v_eps")
    return (X - softmax_vertex_average(X, A, eps * t)) / (2.0 * t)


def integrate_companion(X0, t0: float, t1: float, steps: int, eps: float,
                        A: Lattice) -> Trajectory:
    """Classical 4th-order one-step integration of dX/dt = v_eps(t, X)."""
    _check(t0, eps)
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    X = as_cloud(X0, A.dim).copy()
    grid = np.linspace(t0, t1, steps + 1)
    dt = float(grid[1] - grid[0])
    out = np.empty((steps + 1, A.count, A.dim))
    out[0] = X
    for k in range(steps):
        t = float(grid[k])
        k1 = v_eps(t, X, eps, A)
        k2 = v_eps(t + dt / 2.0, X + dt / 2.0 * k1, eps, A)
        k3 = v_eps(t + dt / 2.0, X + dt / 2.0 * k2, eps, A)
        k4 = v_eps(t + dt, X + dt * k3, eps, A)
        X = X + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(X)):
            raise NumericalError("companion ODE step produced a non-finite state")
        out[k + 1] = X
    return Trajectory(gauge="t", grid=grid, states=out)


def _step_normals(seed: int, step: int, count: int) -> np.ndarray:
    bits = np.random.Philox(key=np.uint64(seed), counter=[0, 0, 0, np.uint64(step)])
    return np.random.Generator(bits).standard_normal(count)


def sample_sde_batch(X0, t0: float, t1: float, noise: NoiseSpec, eps: float,
                     A: Lattice, n_samples: int) -> np.ndarray:
    """Euler-Maruyama paths, shape (n_samples, steps+1, N, d).

    Per step one block of standard normals is drawn from the counter-based
    generator at counter = step; sample i always receives slice i of the
    block, so the paths are independent of evaluation order and sample 0 of
    any batch equals the single-path output.
    """
    _check(t0, eps)
    if t1 <= t0:
        raise ValueError("t1 must exceed t0")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    X0 = as_cloud(X0, A.dim)
    steps = noise.steps
    alpha = _ALPHAS[noise.alpha]
    grid = np.linspace(t0, t1, steps + 1)
    dt = float(grid[1] - grid[0])
    sqdt = math.sqrt(dt)
    out = np.empty((n_samples, steps + 1, A.count, A.dim))
    out[:, 0] = X0[None]
    X = np.repeat(X0[None], n_samples, axis=0)
    amplitude = math.sqrt(noise.eta) if noise.eta > 0 else 0.0
    for k in range(steps):
        t = float(grid[k])
        drift = (X - softmax_vertex_average(X, A, eps * t)) / (2.0 * t)
        X = X + dt * drift
        if amplitude > 0.0:
            xi = _step_normals(noise.seed, k, n_samples * A.count * A.dim)
            X = X + amplitude * alpha(t) * sqdt * xi.reshape(n_samples, A.count, A.dim)
        out[:, k + 1] = X
    return out


def sample_sde(X0, t0: float, t1: float, noise: NoiseSpec, eps: float,
               A: Lattice) -> Trajectory:
    """One noised companion path; eta = 0 gives exactly the explicit Euler path."""
    paths = sample_sde_batch(X0, t0, t1, noise, eps, A, n_samples=1)
    grid = np.linspace(t0, t1, noise.steps + 1)
    return Trajectory(gauge="t", grid=grid, states=paths[0])
