import itertools

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def central_diff(fun, x, h=1e-6):
    """Central finite differences of a scalar function of an (N, d) array."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (fun(xp) - fun(xm)) / (2.0 * h)
    return grad


def brute_force_assignment(X, A_points):
    """N!-enumeration oracle for the quadratic assignment cost."""
    n = len(X)
    best_cost = np.inf
    best_sigma = None
    for perm in itertools.permutations(range(n)):
        cost = float(np.sum((X - A_points[list(perm)]) ** 2))
        if cost < best_cost - 1e-15:
            best_cost = cost
            best_sigma = perm
    return np.array(best_sigma), best_cost


def union_find_partition(values, tol):
    """Quadratic transitive-closure clustering oracle."""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(n):
            if abs(values[i] - values[j]) <= tol:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri
    labels = [find(i) for i in range(n)]
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    return sorted(tuple(g) for g in groups.values())


def simplex_qp_min_norm(vertices, iters=200000, tol=1e-12):
    """Projected-gradient QP oracle: min |w^T V|^2 over the simplex."""
    V = np.asarray(vertices, dtype=float).reshape(len(vertices), -1)
    p = V.shape[0]
    w = np.full(p, 1.0 / p)
    G = V @ V.T
    lip = np.linalg.eigvalsh(G).max() + 1e-12
    step = 1.0 / lip
    for _ in range(iters):
        grad = 2.0 * G @ w
        w_new = project_simplex(w - step * grad)
        if np.linalg.norm(w_new - w) <= tol:
            w = w_new
            break
        w = w_new
    return w @ V


def project_simplex(v):
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
