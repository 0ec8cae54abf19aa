"""Discretized evaluation of the least-action functional family.

Kinds and their gauges:

* ``"L_eps"``, ``"L"`` (t-gauge states X):
      integral of |X' - (X - grad)(2t)^-1|^2 beta(t) dt,
  with ``grad`` the softmax gradient (L_eps) or the minimal-norm subgradient
  (L).
* ``"K_eps"``, ``"K"`` (theta-gauge, Y-scaled states Y = X/exp(theta)):
      (1/2) integral of { |Y'|^2 + |grad g(theta, Y)|^2 } eta(theta) dtheta,
  the auxiliary split functional, with fixed endpoints P/sqrt(t0), Q/sqrt(t1).
* ``"Lambda"`` (theta-gauge, plain Z):
      (1/2) integral of |Z' - (Z - min-norm subgradient)|^2 dtheta.
  The 1/2 makes the exact change-of-variables identity L(X) = Lambda(Z) hold
  for beta(t) = t (expand the square in the Y variables to see it).
* ``"LambdaPrime"``: integral of { |Z'|^2 + |Z - min-norm subgradient|^2 }.
* ``"LambdaDoublePrime"`` (d = 1, ordered lattice): integral of
  { |Z'|^2 + |Z - A|^2 + h(pi(Z)) }, the cluster decomposition of LambdaPrime
  shifted by the constant |A|^2.
* ``"LambdaPlus"``: integral of { |Z'|^2 + |Z|^2 + |A|^2 - 2 f(Z) }. The
  potential equals |Z - grad f(Z)|^2 wherever f is differentiable and
  dominates the LambdaPrime potential on clustered states, so
  LambdaPrime <= LambdaPlus with equality off the clustered set.

Quadrature: forward-difference velocities on the uniform grid, potential at
interval midpoints with the two states averaged. The +infinity branches of
the functionals (endpoint violations) are returned as an ``ActionValue``
sentinel carrying a reason code, never raised.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .clouds import Lattice, Trajectory, as_cloud, partition_of
from .errors import CapabilityError, GaugeError
from .potential import (
    extended_gradient,
    f_max,
    hess_h_apply_scaled,
    internal_energy,
    lattice_vertices,
    softmax_vertex_average,
    _require_cap,
)

__all__ = [
    "KINDS",
    "SMOOTH_KINDS",
    "T_GAUGE_KINDS",
    "ActionSpec",
    "ActionValue",
    "eval_action",
    "grad_discretized_action",
    "change_gauge",
    "eval_g",
    "lambda_prime_equivalent",
]

KINDS = (
    "L_eps",
    "L",
    "K_eps",
    "K",
    "Lambda",
    "LambdaPrime",
    "LambdaDoublePrime",
    "LambdaPlus",
)
SMOOTH_KINDS = frozenset({"L_eps", "K_eps"})
T_GAUGE_KINDS = frozenset({"L_eps", "L"})

# beta is the t-gauge weight; eta(theta) = beta(exp(2 theta)). The default
# beta(t) = t is the regime in which the gravitational dynamics arises.
_WEIGHTS = {
    "t": lambda t: t,
    "one": lambda t: np.ones_like(np.asarray(t, dtype=float)),
}

ENDPOINT_REASON = "endpoint-constraint-violated"


class ActionValue(float):
    """A float action value; infinite branches carry a ``reason`` code."""

    def __new__(cls, value, reason=None):
        obj = super().__new__(cls, value)
        obj.reason = reason
        return obj


@dataclass(frozen=True)
class ActionSpec:
    """What to evaluate: a functional kind, its data, and endpoint handling.

    ``p`` and ``q`` are always given in the original (t-gauge X) coordinates;
    K-kind evaluation rescales them to P/sqrt(t0), Q/sqrt(t1) internally.
    ``window`` is the (t0, t1) window for t-gauge kinds and the
    (theta0, theta1) window otherwise.
    """

    kind: str
    lattice: Lattice
    p: np.ndarray
    q: np.ndarray
    window: tuple[float, float]
    eps: float | None = None
    weight: str = "t"
    endpoint_mode: str = "up_to_permutation"
    endpoint_tol: float = 1e-8
    cluster_tol: float = 1e-9

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.weight not in _WEIGHTS:
            raise ValueError(f"unknown weight {self.weight!r}")
        if self.endpoint_mode not in ("fixed", "up_to_permutation"):
            raise ValueError(f"unknown endpoint mode {self.endpoint_mode!r}")
        object.__setattr__(self, "p", as_cloud(self.p, self.lattice.dim))
        object.__setattr__(self, "q", as_cloud(self.q, self.lattice.dim))
        lo, hi = float(self.window[0]), float(self.window[1])
        if not lo < hi:
            raise ValueError("window must be increasing")
        if self.kind in T_GAUGE_KINDS and lo <= 0:
            raise ValueError("t-gauge windows require t0 > 0")
        object.__setattr__(self, "window", (lo, hi))
        if self.kind in SMOOTH_KINDS:
            if self.eps is None or self.eps <= 0:
                raise ValueError(f"kind {self.kind} requires eps > 0")
        if self.kind == "LambdaDoublePrime" and not self.lattice.strictly_ordered:
            raise ValueError("LambdaDoublePrime requires a strictly ordered 1-D lattice")

    @property
    def gauge(self) -> str:
        return "t" if self.kind in T_GAUGE_KINDS else "theta"


def _weight_fn(spec: ActionSpec):
    return _WEIGHTS[spec.weight]


def _endpoint_targets(spec: ActionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Endpoint targets in the representation the trajectory actually stores."""
    if spec.kind in ("K_eps", "K"):
        th0, th1 = spec.window
        return spec.p * math.exp(-th0), spec.q * math.exp(-th1)
    return spec.p, spec.q


def _endpoint_matches(state: np.ndarray, target: np.ndarray, mode: str, tol: float) -> bool:
    atol = tol * (1.0 + float(np.linalg.norm(target)))
    if mode == "fixed":
        return bool(np.linalg.norm(state - target) <= atol)
    n, d = target.shape
    if d == 1:
        return bool(np.linalg.norm(np.sort(state[:, 0]) - np.sort(target[:, 0])) <= atol)
    if n <= 6:
        best = min(
            float(np.linalg.norm(state - target[list(perm)]))
            for perm in itertools.permutations(range(n))
        )
        return best <= atol
    raise CapabilityError("endpoint matching up to permutation needs N <= 6 when d > 1")


def _check_traj(spec: ActionSpec, traj: Trajectory) -> None:
    if traj.gauge != spec.gauge:
        raise GaugeError(f"kind {spec.kind} expects a {spec.gauge}-gauge trajectory, got {traj.gauge}")
    lo, hi = spec.window
    span = hi - lo
    if abs(traj.grid[0] - lo) > 1e-9 * span or abs(traj.grid[-1] - hi) > 1e-9 * span:
        raise ValueError("trajectory grid does not cover the spec window")
    if traj.n_particles != spec.lattice.count or traj.dim != spec.lattice.dim:
        raise ValueError("trajectory shape does not match the lattice")


def _ext_grad_rows(states: np.ndarray, A: Lattice, cluster_tol: float) -> np.ndarray:
    out = np.empty_like(states)
    for k in range(states.shape[0]):
        out[k] = extended_gradient(states[k], A, tie_tol=cluster_tol if A.dim == 1 else None)
    return out


def _discrete_value_grad(spec: ActionSpec, grid: np.ndarray, states: np.ndarray,
                         want_grad: bool) -> tuple[float, np.ndarray | None]:
    """Midpoint quadrature of the chosen integrand, plus its exact gradient.

    The gradient is with respect to every node of ``states``; callers clamp
    the endpoint rows. Only smooth kinds support gradients.
    """
    A = spec.lattice
    dt = float(grid[1] - grid[0])
    mids = 0.5 * (grid[1:] + grid[:-1])
    vel = np.diff(states, axis=0) / dt
    sm = 0.5 * (states[1:] + states[:-1])
    kind = spec.kind
    beta = _weight_fn(spec)
    if want_grad and kind not in SMOOTH_KINDS:
        raise ValueError(f"gradients are unsupported for the nonsmooth kind {kind!r}")

    if kind in ("L_eps", "L"):
        w = beta(mids)
        if kind == "L_eps":
            scale = spec.eps * mids
            _require_cap(A.count, "eval_action(L_eps)")
            grad_pot = softmax_vertex_average(sm, A, scale)
        else:
            grad_pot = _ext_grad_rows(sm, A, spec.cluster_tol)
        drift = (sm - grad_pot) / (2.0 * mids)[:, None, None]
        resid = vel - drift
        value = float(np.sum(np.einsum("knd,knd->k", resid, resid) * w) * dt)
        if not want_grad:
            return value, None
        hr = hess_h_apply_scaled(sm, resid, A, scale)
        dfr = (resid - hr / scale[:, None, None]) / (2.0 * mids)[:, None, None]
        wcol = w[:, None, None]
        grad = np.zeros_like(states)
        grad[:-1] += -2.0 * wcol * resid - wcol * dt * dfr
        grad[1:] += 2.0 * wcol * resid - wcol * dt * dfr
        return value, grad

    if kind in ("K_eps", "K"):
        eta = beta(np.exp(2.0 * mids))
        if kind == "K_eps":
            scale = spec.eps * np.exp(mids)
            _require_cap(A.count, "eval_action(K_eps)")
            g1 = softmax_vertex_average(sm, A, scale) / np.exp(mids)[:, None, None]
        else:
            g1 = _ext_grad_rows(sm, A, spec.cluster_tol) / np.exp(mids)[:, None, None]
        kin = np.einsum("knd,knd->k", vel, vel)
        pot = np.einsum("knd,knd->k", g1, g1)
        value = float(0.5 * np.sum((kin + pot) * eta) * dt)
        if not want_grad:
            return value, None
        hg = hess_h_apply_scaled(sm, g1, A, scale) / (spec.eps * np.exp(2.0 * mids))[:, None, None]
        etac = eta[:, None, None]
        grad = np.zeros_like(states)
        grad[:-1] += -etac * vel + 0.5 * etac * dt * hg
        grad[1:] += etac * vel + 0.5 * etac * dt * hg
        return value, grad

    if want_grad:
        raise ValueError(f"gradients are unsupported for the nonsmooth kind {kind!r}")

    kin = np.einsum("knd,knd->k", vel, vel)
    if kind == "Lambda":
        gbar = _ext_grad_rows(sm, A, spec.cluster_tol)
        resid = vel - (sm - gbar)
        return float(0.5 * np.sum(np.einsum("knd,knd->k", resid, resid)) * dt), None
    if kind == "LambdaPrime":
        gbar = _ext_grad_rows(sm, A, spec.cluster_tol)
        diff = sm - gbar
        pot = np.einsum("knd,knd->k", diff, diff)
        return float(np.sum(kin + pot) * dt), None
    if kind == "LambdaDoublePrime":
        diff = sm - A.points[None, :, :]
        pot = np.einsum("knd,knd->k", diff, diff)
        hvals = np.array([
            internal_energy(partition_of(sm[k, :, 0], spec.cluster_tol), A)
            for k in range(sm.shape[0])
        ])
        return float(np.sum(kin + pot + hvals) * dt), None
    if kind == "LambdaPlus":
        norms = np.einsum("knd,knd->k", sm, sm)
        fvals = np.array([f_max(sm[k], A) for k in range(sm.shape[0])])
        pot = norms + A.norm**2 - 2.0 * fvals
        return float(np.sum(kin + pot) * dt), None
    raise AssertionError(f"unhandled kind {kind!r}")


def eval_action(spec: ActionSpec, traj: Trajectory) -> ActionValue:
    """Quadrature value of the functional; +inf sentinel on endpoint violation."""
    _check_traj(spec, traj)
    tp, tq = _endpoint_targets(spec)
    if not _endpoint_matches(traj.states[0], tp, spec.endpoint_mode, spec.endpoint_tol):
        return ActionValue(math.inf, reason=ENDPOINT_REASON)
    if not _endpoint_matches(traj.states[-1], tq, spec.endpoint_mode, spec.endpoint_tol):
        return ActionValue(math.inf, reason=ENDPOINT_REASON)
    value, _ = _discrete_value_grad(spec, traj.grid, traj.states, want_grad=False)
    return ActionValue(value)


def grad_discretized_action(spec: ActionSpec, traj: Trajectory) -> np.ndarray:
    """Exact gradient of the discretized action w.r.t. interior node positions.

    Endpoint rows are clamped to zero. Matches central finite differences of
    ``eval_action`` on the interior nodes.
    """
    if spec.kind not in SMOOTH_KINDS:
        raise ValueError(f"gradients are unsupported for the nonsmooth kind {spec.kind!r}")
    _check_traj(spec, traj)
    _, grad = _discrete_value_grad(spec, traj.grid, traj.states, want_grad=True)
    grad[0] = 0.0
    grad[-1] = 0.0
    return grad


def _interp_states(src: np.ndarray, states: np.ndarray, query: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(src, query, side="right"), 1, len(src) - 1)
    x0 = src[idx - 1]
    x1 = src[idx]
    w = ((query - x0) / (x1 - x0))[:, None, None]
    return (1.0 - w) * states[idx - 1] + w * states[idx]


def change_gauge(traj: Trajectory, target: str, variant: str = "Z-plain") -> Trajectory:
    """Map between the t-grid and the uniform theta-grid, theta = log(t)/2.

    ``variant`` fixes the theta-side representation: ``"Z-plain"`` stores
    Zraw = X itself, ``"Y-scaling"`` stores Y = X/exp(theta). Resampling is by
    linear interpolation in the source grid variable; round trips return the
    original trajectory to interpolation accuracy.
    """
    if variant not in ("Z-plain", "Y-scaling"):
        raise ValueError(f"unknown change-of-gauge variant {variant!r}")
    if target not in ("t", "theta"):
        raise ValueError(f"unknown gauge {target!r}")
    if target == traj.gauge:
        return traj

    m = traj.intervals
    if traj.gauge == "t":
        t0, t1 = float(traj.grid[0]), float(traj.grid[-1])
        theta_grid = np.linspace(math.log(t0) / 2.0, math.log(t1) / 2.0, m + 1)
        t_query = np.exp(2.0 * theta_grid)
        xq = _interp_states(traj.grid, traj.states, t_query)
        if variant == "Y-scaling":
            xq = xq / np.exp(theta_grid)[:, None, None]
        return Trajectory(gauge="theta", grid=theta_grid, states=xq)

    theta0, theta1 = float(traj.grid[0]), float(traj.grid[-1])
    x_nodes = traj.states
    if variant == "Y-scaling":
        x_nodes = x_nodes * np.exp(traj.grid)[:, None, None]
    t_grid = np.linspace(math.exp(2.0 * theta0), math.exp(2.0 * theta1), m + 1)
    theta_query = np.log(t_grid) / 2.0
    xq = _interp_states(traj.grid, x_nodes, theta_query)
    return Trajectory(gauge="t", grid=t_grid, states=xq)


def eval_g(eps: float, theta: float, Y, A: Lattice, which: str):
    """The rescaled potential family g_eps(theta, Y) = eps*h(Y/(eps e^theta)).

    ``which`` selects among {"g_eps", "g", "grad_g_eps", "ext_grad_g"}; the
    limit is g(theta, Y) = f(e^theta Y)/e^(2 theta) = f(Y)/e^theta. Gradients
    obey |grad g_eps(theta, .)| <= |A| e^(-theta).
    """
    Y = as_cloud(Y, A.dim)
    eth = math.exp(theta)
    if which == "g_eps":
        if eps <= 0:
            raise ValueError("eps must be > 0")
        _require_cap(A.count, "eval_g")
        scaled = np.einsum("nd,pnd->p", Y, lattice_vertices(A)) / (eps * eth)
        m = float(scaled.max())
        return float(eps * (m + np.log(np.mean(np.exp(scaled - m)))))
    if which == "g":
        return f_max(eth * Y, A) / (eth * eth)
    if which == "grad_g_eps":
        if eps <= 0:
            raise ValueError("eps must be > 0")
        _require_cap(A.count, "eval_g")
        return softmax_vertex_average(Y, A, eps * eth) / eth
    if which == "ext_grad_g":
        return extended_gradient(Y, A) / eth
    raise ValueError(f"unknown selector {which!r}")


def lambda_prime_equivalent(l_value: float, P, Q, A: Lattice) -> float:
    """Convert an L-normalized action value to the LambdaPrime normalization.

    Expanding the square in Lambda and integrating the exact-derivative cross
    term gives, for a trajectory with ordered endpoints P, Q,

        LambdaPrime = 2 L + (|Q|^2 - |P|^2) - 2 (f(Q) - f(P)),

    which reduces to LambdaPrime = 2 L when P = Q.
    """
    P = as_cloud(P, A.dim)
    Q = as_cloud(Q, A.dim)
    boundary = float(np.sum(Q * Q) - np.sum(P * P)) - 2.0 * (f_max(Q, A) - f_max(P, A))
    return 2.0 * float(l_value) + boundary
