"""The permutation potential family.

For a lattice A, the potential is the convex piecewise-linear function

    f(X) = max over relabelings sigma of X . A^sigma,

whose softmax regularization at temperature scale s is built from

    h(X) = log[ (1/N!) sum_sigma exp(X . A^sigma) ],
    f_eps(t, X) = eps * t * h(X / (eps * t)).

Gradients of h are softmax-weighted averages of the permuted lattices; the
Hessian is their covariance. The minimal-norm subgradient of f (the extended
gradient) selects class averages of the lattice on clustered 1-D
configurations, and is computed by a min-norm-point solve over the active
vertices in general dimension.

Everything enumerating all N! permutations is capped at ``N_CAP`` particles;
the assignment-based operations (``optimal_assignment``, ``f_max``,
``resolvent_f``) run on an O(N^3) solver and carry no cap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clouds import (
    DEFAULT_CLUSTER_TOL,
    Lattice,
    Partition,
    as_cloud,
    partition_of,
    sort_ascending,
)
from .errors import CapabilityError, NumericalError

__all__ = [
    "N_CAP",
    "SoftmaxStats",
    "h_logsumexp",
    "softmax_stats",
    "softmax_vertex_average",
    "hess_h_apply_scaled",
    "optimal_assignment",
    "f_max",
    "f_eps",
    "grad_f_eps",
    "hess_h_apply",
    "extended_gradient",
    "min_norm_point",
    "internal_energy",
    "delta_gap",
    "resolvent_f",
    "resolvent_f_eps",
]

# Cap for any operation that enumerates all N! permutations: 8! = 40320 terms
# is still desk scale.
N_CAP = 8


@lru_cache(maxsize=None)
def _perm_array(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def _require_cap(n: int, op: str) -> None:
    if n > N_CAP:
        raise CapabilityError(f"{op} enumerates all N! permutations; N={n} exceeds the cap {N_CAP}")


def lattice_vertices(A: Lattice) -> np.ndarray:
    """All permuted lattices A^sigma, shape (N!, N, d). Cached on the lattice."""
    cached = A.__dict__.get("_vertices")
    if cached is not None:
        return cached
    _require_cap(A.count, "lattice_vertices")
    verts = A.points[_perm_array(A.count)]
    verts.setflags(write=False)
    object.__setattr__(A, "_vertices", verts)
    return verts


def _check_dims(X: np.ndarray, A: Lattice) -> np.ndarray:
    X = as_cloud(X)
    if X.shape != (A.count, A.dim):
        raise ValueError(f"cloud shape {X.shape} does not match lattice ({A.count}, {A.dim})")
    return X


def _vertex_dots(Xs: np.ndarray, verts: np.ndarray) -> np.ndarray:
    """Inner products X . A^sigma; Xs (..., N, d), verts (P, N, d) -> (..., P)."""
    return np.einsum("...nd,pnd->...p", Xs, verts)


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    w = np.exp(logits - m)
    return w / w.sum(axis=-1, keepdims=True)


def h_logsumexp(X, A: Lattice) -> float:
    """h(X) = log[(1/N!) sum_sigma exp(X . A^sigma)], computed with max subtraction."""
    X = _check_dims(X, A)
    dots = _vertex_dots(X, lattice_vertices(A))
    m = dots.max()
    return float(m + np.log(np.mean(np.exp(dots - m))))


@dataclass(frozen=True)
class SoftmaxStats:
    """Value of h, the softmax-average vertex, and the near-argmax permutations."""

    value: float
    mean_vertex: np.ndarray
    argmax_set: tuple[np.ndarray, ...]


def default_tie_tol(X, A: Lattice) -> float:
    X = np.asarray(X, dtype=float)
    return 1e-9 * (1.0 + float(np.linalg.norm(X)) * A.norm)


def softmax_stats(X, A: Lattice, tie_tol: float | None = None) -> SoftmaxStats:
    X = _check_dims(X, A)
    verts = lattice_vertices(A)
    dots = _vertex_dots(X, verts)
    m = dots.max()
    value = float(m + np.log(np.mean(np.exp(dots - m))))
    w = _softmax(dots)
    mean_vertex = np.einsum("p,pnd->nd", w, verts)
    if tie_tol is None:
        tie_tol = default_tie_tol(X, A)
    active = np.flatnonzero(dots >= m - tie_tol)
    perms = _perm_array(A.count)
    return SoftmaxStats(value=value, mean_vertex=mean_vertex, argmax_set=tuple(perms[i] for i in active))


def softmax_vertex_average(Xs, A: Lattice, scale) -> np.ndarray:
    """Softmax-weighted average <A^sigma> at X/scale; batched over leading axes.

    ``Xs`` has shape (..., N, d); ``scale`` is a positive scalar or an array
    broadcastable to the leading axes.
    """
    Xs = np.asarray(Xs, dtype=float)
    verts = lattice_vertices(A)
    scale = np.asarray(scale, dtype=float)
    dots = _vertex_dots(Xs, verts) / scale[..., None]
    w = _softmax(dots)
    return np.einsum("...p,pnd->...nd", w, verts)


def hess_h_apply_scaled(Xs, Vs, A: Lattice, scale) -> np.ndarray:
    """D^2 h(X/scale) applied to V, batched like ``softmax_vertex_average``.

    D^2 h(u) . V = <(A^sigma . V) A^sigma>_u - (<A^sigma>_u . V) <A^sigma>_u,
    a positive-semidefinite covariance form.
    """
    Xs = np.asarray(Xs, dtype=float)
    Vs = np.asarray(Vs, dtype=float)
    verts = lattice_vertices(A)
    scale = np.asarray(scale, dtype=float)
    dots = _vertex_dots(Xs, verts) / scale[..., None]
    w = _softmax(dots)
    mean_vertex = np.einsum("...p,pnd->...nd", w, verts)
    vdots = _vertex_dots(Vs, verts)
    first = np.einsum("...p,pnd->...nd", w * vdots, verts)
    mixed = np.sum(mean_vertex * Vs, axis=(-2, -1))
    return first - mixed[..., None, None] * mean_vertex


def optimal_assignment(X, A: Lattice) -> tuple[np.ndarray, float]:
    """Solve min over sigma of sum_i |x_i - a_sigma(i)|^2.

    Runs the O(N^3) assignment solver; among optimal permutations the
    lexicographically smallest one is returned, so regressions are stable.
    """
    X = _check_dims(X, A)
    n = A.count
    diff = X[:, None, :] - A.points[None, :, :]
    C = np.einsum("ijd,ijd->ij", diff, diff)
    rows, cols = linear_sum_assignment(C)
    base = float(C[rows, cols].sum())
    tol = 1e-9 * (1.0 + abs(base))

    sigma = np.empty(n, dtype=np.intp)
    avail = list(range(n))
    prefix = 0.0
    for i in range(n):
        for j in avail:
            rest_cols = [k for k in avail if k != j]
            if i + 1 < n:
                sub = C[np.ix_(range(i + 1, n), rest_cols)]
                r, c = linear_sum_assignment(sub)
                rest = float(sub[r, c].sum())
            else:
                rest = 0.0
            if prefix + C[i, j] + rest <= base + tol:
                sigma[i] = j
                avail.remove(j)
                prefix += C[i, j]
                break
        else:
            raise NumericalError("assignment tie-breaking failed to extend a prefix")
    return sigma, float(C[np.arange(n), sigma].sum())


def f_max(X, A: Lattice) -> float:
    """f(X) = max_sigma X . A^sigma via the assignment solver (no N! enumeration)."""
    X = _check_dims(X, A)
    gains = np.einsum("id,jd->ij", X, A.points)
    rows, cols = linear_sum_assignment(-gains)
    return float(gains[rows, cols].sum())


def _check_t_eps(t: float, eps: float) -> None:
    if t <= 0:
        raise ValueError("t must be > 0")
    if eps <= 0:
        raise ValueError("eps must be > 0")


def f_eps(t: float, X, eps: float, A: Lattice) -> float:
    """Softmax regularization f_eps(t, X) = eps*t*h(X/(eps*t)).

    Satisfies f - eps*t*log(N!) <= f_eps <= f.
    """
    _check_t_eps(t, eps)
    X = _check_dims(X, A)
    _require_cap(A.count, "f_eps")
    s = eps * t
    dots = _vertex_dots(X, lattice_vertices(A)) / s
    m = dots.max()
    return float(s * (m + np.log(np.mean(np.exp(dots - m)))))


def grad_f_eps(t: float, X, eps: float, A: Lattice) -> np.ndarray:
    """Gradient of f_eps: the softmax-average vertex <A^sigma> at X/(eps*t); norm <= |A|."""
    _check_t_eps(t, eps)
    X = _check_dims(X, A)
    _require_cap(A.count, "grad_f_eps")
    return softmax_vertex_average(X, A, eps * t)


def hess_h_apply(X, V, A: Lattice) -> np.ndarray:
    """D^2 h(X) applied to V (temperature scale 1)."""
    X = _check_dims(X, A)
    V = _check_dims(V, A)
    _require_cap(A.count, "hess_h_apply")
    return hess_h_apply_scaled(X, V, A, 1.0)


def extended_gradient(X, A: Lattice, tie_tol: float | None = None) -> np.ndarray:
    """Minimal-Euclidean-norm element of the subdifferential of f at X.

    d = 1: sort X, cluster equal coordinates (absolute tolerance ``tie_tol``,
    default 1e-9), return class averages of the sorted lattice values,
    transported back through the sorting permutation. Exact and O(N log N).

    d > 1: enumerate permutations whose value is within ``tie_tol`` of the
    maximum (value-space tolerance, default 1e-9*(1+|X||A|)) and return the
    min-norm point of their convex hull. Capped at N_CAP particles.
    """
    X = _check_dims(X, A)
    if A.dim == 1:
        coord_tol = DEFAULT_CLUSTER_TOL if tie_tol is None else tie_tol
        x = X[:, 0]
        xs, sigma = sort_ascending(x)
        pi = partition_of(xs, coord_tol)
        a_sorted = np.sort(A.points[:, 0])
        g_sorted = np.empty_like(xs)
        for members in pi.classes:
            idx = list(members)
            g_sorted[idx] = a_sorted[idx].mean()
        out = np.empty_like(x)
        out[sigma] = g_sorted
        return out[:, None]

    _require_cap(A.count, "extended_gradient (general d)")
    verts = lattice_vertices(A)
    dots = _vertex_dots(X, verts)
    m = dots.max()
    if tie_tol is None:
        tie_tol = default_tie_tol(X, A)
    active = verts[dots >= m - tie_tol]
    return min_norm_point(active)


# ---------------------------------------------------------------------------
# Min-norm point / polytope projection (Wolfe's algorithm)
# ---------------------------------------------------------------------------

def _affine_min_norm(S: np.ndarray) -> np.ndarray:
    """Weights of the min-norm point of the affine hull of the rows of S."""
    k = S.shape[0]
    G = S @ S.T
    scale = max(1.0, float(np.abs(G).max()))
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = G / scale
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k]


def _wolfe_min_norm(oracle, p0: np.ndarray, gap_tol: float, max_iter: int = 200):
    """Wolfe's min-norm-point algorithm over an implicit polytope.

    ``oracle(w)`` must return a vertex minimizing <w, v>. Returns the
    min-norm point; raises NumericalError with the residual duality gap on
    iteration-cap overrun.
    """
    S = [np.array(p0, dtype=float)]
    lam = np.array([1.0])
    x = S[0].copy()
    gap = np.inf
    for _ in range(max_iter):
        p = oracle(x)
        gap = float(x @ x - x @ p)
        if gap <= gap_tol:
            return x
        if any(np.array_equal(p, s) for s in S):
            return x
        S.append(p)
        lam = np.append(lam, 0.0)
        while True:
            mat = np.stack(S)
            mu = _affine_min_norm(mat)
            if np.all(mu >= -1e-14):
                lam = np.clip(mu, 0.0, None)
                lam /= lam.sum()
                x = lam @ mat
                break
            shrink = lam - mu
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(mu < 0, lam / shrink, np.inf)
            theta = float(min(1.0, ratios.min()))
            lam = (1.0 - theta) * lam + theta * mu
            keep = lam > 1e-14
            if keep.all():
                # numerical safeguard: drop the smallest weight to make progress
                keep[np.argmin(lam)] = False
            S = [s for s, k in zip(S, keep) if k]
            lam = lam[keep]
            lam /= lam.sum()
    raise NumericalError("min-norm-point iteration cap exceeded", residual=gap)


def min_norm_point(vertices, tol: float = 1e-10) -> np.ndarray:
    """Minimal-norm point of the convex hull of an explicit vertex list.

    The result is a convex combination of the vertices, accurate to ``tol``.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim == 1:
        verts = verts[None, :]
    shape = verts.shape[1:]
    flat = verts.reshape(verts.shape[0], -1)
    if flat.shape[0] == 0:
        raise ValueError("vertex list must be nonempty")

    def oracle(w):
        return flat[int(np.argmin(flat @ w))]

    scale = 1.0 + float(np.max(np.einsum("ij,ij->i", flat, flat)))
    x = _wolfe_min_norm(oracle, flat[0], gap_tol=tol * tol * scale)
    return x.reshape(shape)


def _project_onto_assignment_hull(y: np.ndarray, A: Lattice, gap_tol: float) -> np.ndarray:
    """Project ``y`` (flat, length N*d) onto conv{A^sigma} via Wolfe + assignment oracle."""
    pts = A.points
    n, d = pts.shape

    def vertex_for(w_flat: np.ndarray) -> np.ndarray:
        w = w_flat.reshape(n, d)
        cost = np.einsum("id,jd->ij", w, pts)
        rows, cols = linear_sum_assignment(cost)
        return pts[cols].ravel()

    def oracle(w):
        # minimize <w, v - y> over v in K, expressed in the shifted polytope
        return vertex_for(w) - y

    p0 = vertex_for(-y) - y
    x = _wolfe_min_norm(oracle, p0, gap_tol=gap_tol)
    return y + x


def resolvent_f(X, tau: float, A: Lattice, tol: float = 1e-12) -> np.ndarray:
    """Proximal map J(X) = argmin_Y f(Y) + |Y - X|^2 / (2 tau).

    f is the support function of K = conv{A^sigma}, so by Moreau's
    decomposition J(X) = X - tau * proj_K(X / tau). The projection runs
    Wolfe's algorithm with an assignment linear oracle, hence needs no N!
    enumeration in any dimension.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    X = _check_dims(X, A)
    y = (X / tau).ravel()
    scale = 1.0 + float(y @ y) + A.norm**2
    proj = _project_onto_assignment_hull(y, A, gap_tol=tol * scale)
    return X - tau * proj.reshape(X.shape)


def resolvent_f_eps(X, tau: float, eps_t: float, A: Lattice, tol: float = 1e-12) -> np.ndarray:
    """Proximal map of the smoothed potential Y -> eps_t * h(Y/eps_t).

    Solved by damped Newton on the strictly convex objective; used to test
    the resolvent convergence J_{tau, f_eps} -> J_{tau, f}.
    """
    if tau <= 0 or eps_t <= 0:
        raise ValueError("tau and eps_t must be > 0")
    X = _check_dims(X, A)
    _require_cap(A.count, "resolvent_f_eps")
    Y = X - tau * softmax_vertex_average(X, A, eps_t)  # one resolvent-style step
    for _ in range(200):
        g = softmax_vertex_average(Y, A, eps_t) + (Y - X) / tau
        if np.linalg.norm(g) <= tol * (1.0 + A.norm):
            return Y
        # Newton direction via CG on (D2h/eps_t + I/tau) p = -g, few iterations
        p = _cg_solve(lambda V: hess_h_apply_scaled(Y, V, A, eps_t) / eps_t + V / tau, -g)
        step = 1.0
        val = _smoothed_objective(Y, X, tau, eps_t, A)
        gd = float(np.sum(g * p))
        while step > 1e-16:
            cand = Y + step * p
            if _smoothed_objective(cand, X, tau, eps_t, A) <= val + 1e-4 * step * gd:
                break
            step *= 0.5
        Y = Y + step * p
    raise NumericalError("resolvent_f_eps Newton iteration cap exceeded",
                         residual=float(np.linalg.norm(g)))


def _smoothed_objective(Y, X, tau, eps_t, A):
    s = eps_t
    dots = _vertex_dots(Y, lattice_vertices(A)) / s
    m = dots.max()
    val = s * (m + np.log(np.mean(np.exp(dots - m))))
    return float(val + np.sum((Y - X) ** 2) / (2 * tau))


def _cg_solve(apply_mat, b, iters: int = 50, tol: float = 1e-12):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(np.sum(r * r))
    for _ in range(iters):
        if math.sqrt(rr) <= tol * (1.0 + math.sqrt(float(np.sum(b * b)))):
            break
        Ap = apply_mat(p)
        alpha = rr / float(np.sum(p * Ap))
        x = x + alpha * p
        r = r - alpha * Ap
        rr_new = float(np.sum(r * r))
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


# ---------------------------------------------------------------------------
# Partition internal energy and its minimal refinement gap
# ---------------------------------------------------------------------------

def internal_energy(pi: Partition, A: Lattice) -> float:
    """h(pi) = sum over classes C of (sum_{j in C} a_j)^2 / #C (d = 1).

    Equals |project_class_average(A, pi)|^2; strictly increases under strict
    refinement of ordered partitions when A is strictly ordered.
    """
    a = A.values1d()
    if pi.n != A.count:
        raise ValueError("partition size does not match the lattice")
    total = 0.0
    for members in pi.classes:
        s = float(a[list(members)].sum())
        total += s * s / len(members)
    return total


def delta_gap(A: Lattice) -> tuple[float, float]:
    """Minimal internal-energy gap over ordered strict-refinement pairs, and alpha.

    The minimum over all strict refinements is attained on a single merge of
    two adjacent interval classes, for which the gap is

        (k2*S1 - k1*S2)^2 / (k1*k2*(k1+k2)),

    with S, k the sums and sizes of the two intervals; minimizing over all
    adjacent interval pairs is O(N^3). Returns (delta, alpha) with
    alpha = sqrt(delta / (N^2 - N)), the lower bound on the leftmost
    particle's velocity jump at an isolated shock.
    """
    if not A.strictly_ordered:
        raise ValueError("delta_gap requires a strictly ordered 1-D lattice")
    n = A.count
    if n < 2:
        raise ValueError("delta_gap needs at least two lattice points")
    a = A.values1d()
    csum = np.concatenate([[0.0], np.cumsum(a)])
    delta = math.inf
    for i in range(n):
        for j in range(i, n):
            for k in range(j + 1, n):
                s1 = csum[j + 1] - csum[i]
                s2 = csum[k + 1] - csum[j + 1]
                k1 = j - i + 1
                k2 = k - j
                gap = (k2 * s1 - k1 * s2) ** 2 / (k1 * k2 * (k1 + k2))
                delta = min(delta, gap)
    alpha = math.sqrt(delta / (n * n - n))
    return float(delta), float(alpha)
