"""Core state types: lattices, particle clouds, permutations, partitions, trajectories.

Conventions used throughout the package:

* a *cloud* of N particles in R^d is a float ndarray of shape (N, d);
  one-dimensional helpers accept and return plain 1-D position arrays;
* a *permutation* is an int index array ``sigma`` acting by
  ``permute(X, sigma)[i] = X[sigma[i]]``;
* indices are 0-based;
* trajectories live on uniform time grids, either in the original time
  variable (``"t"`` gauge, grid strictly positive) or in the logarithmic
  variable ``theta = log(t)/2`` (``"theta"`` gauge).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Lattice",
    "Partition",
    "Trajectory",
    "DEFAULT_CLUSTER_TOL",
    "OPTIMIZER_CLUSTER_TOL_FACTOR",
    "as_cloud",
    "identity_perm",
    "check_perm",
    "compose_perms",
    "invert_perm",
    "permute",
    "sort_ascending",
    "partition_of",
    "project_class_average",
    "is_refinement",
    "ordered_partitions",
    "join_partitions",
]

# Absolute coordinate tolerance for clustering exact (closed-form) data, and
# the relative factor used on optimizer output, which carries discretization
# noise.
DEFAULT_CLUSTER_TOL = 1e-9
OPTIMIZER_CLUSTER_TOL_FACTOR = 1e-4


def as_cloud(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a (N, d) float cloud; 1-D input becomes a (N, 1) cloud."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"a cloud must be a (N, d) array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"cloud dimension {arr.shape[1]} does not match expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cloud coordinates must be finite")
    return arr


@dataclass(frozen=True)
class Lattice:
    """Reference points A = (a_1, ..., a_N) in R^d."""

    points: np.ndarray

    def __post_init__(self):
        pts = as_cloud(self.points)
        if pts.shape[0] < 1:
            raise ValueError("a lattice needs at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def strictly_ordered(self) -> bool:
        if self.dim != 1:
            return False
        vals = self.points[:, 0]
        return bool(np.all(np.diff(vals) > 0))

    @property
    def norm(self) -> float:
        """Euclidean norm |A| of the full configuration."""
        return float(np.linalg.norm(self.points))

    @property
    def mean_point(self) -> np.ndarray:
        """Barycenter of the lattice points, shape (d,)."""
        return self.points.mean(axis=0)

    def values1d(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("values1d requires a 1-dimensional lattice")
        return self.points[:, 0]


def identity_perm(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.intp)


def check_perm(sigma, n: int) -> np.ndarray:
    """Validate ``sigma`` as a bijection of {0, ..., n-1} and return it as intp."""
    sig = np.asarray(sigma, dtype=np.intp)
    if sig.shape != (n,):
        raise ValueError(f"permutation has shape {sig.shape}, expected ({n},)")
    seen = np.zeros(n, dtype=bool)
    seen[sig] = True
    if not seen.all():
        raise ValueError("permutation is not a bijection")
    return sig


def compose_perms(sigma, tau) -> np.ndarray:
    """Composition so that permute(permute(X, sigma), tau) == permute(X, compose_perms(sigma, tau))."""
    sigma = np.asarray(sigma, dtype=np.intp)
    tau = np.asarray(tau, dtype=np.intp)
    return sigma[tau]

def invert_perm(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.intp)
    inv = np.empty_like(sigma)
    inv[sigma] = np.arange(len(sigma), dtype=np.intp)
    return inv


def permute(X, sigma) -> np.ndarray:
    """Relabel a cloud: result[i] = X[sigma[i]] (the X^sigma of the model)."""
    X = np.asarray(X, dtype=float)
    sig = check_perm(sigma, X.shape[0])
    return X[sig]


def sort_ascending(x) -> tuple[np.ndarray, np.ndarray]:
    """Sort a 1-D configuration; returns (sorted, sigma) with sorted = permute(x, sigma).

    The map x -> sorted(x) is 1-Lipschitz (rearrangement inequality), which is
    what makes endpoint ordering a free normalization downstream.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError("sort_ascending works on 1-D configurations")
    sigma = np.argsort(x, kind="stable").astype(np.intp)
    return x[sigma], sigma


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty classes covering {0, ..., n-1}.

    Classes are stored sorted internally and ordered by their smallest member,
    so equal partitions compare equal.
    """

    classes: tuple[tuple[int, ...], ...]
    n: int

    @staticmethod
    def from_classes(classes, n: int | None = None) -> "Partition":
        normed = tuple(sorted(tuple(sorted(int(i) for i in c)) for c in classes))
        members = [i for c in normed for i in c]
        count = len(members)
        if n is None:
            n = count
        if sorted(members) != list(range(n)) or count != n:
            raise ValueError("classes must be disjoint, nonempty, and cover 0..n-1")
        if any(len(c) == 0 for c in normed):
            raise ValueError("classes must be nonempty")
        return Partition(classes=normed, n=n)

    @staticmethod
    def from_class_of(labels) -> "Partition":
        labels = np.asarray(labels)
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(labels):
            groups.setdefault(int(lab), []).append(i)
        return Partition.from_classes(groups.values(), n=len(labels))

    @staticmethod
    def singletons(n: int) -> "Partition":
        return Partition.from_classes([(i,) for i in range(n)], n=n)

    @staticmethod
    def single_class(n: int) -> "Partition":
        return Partition.from_classes([tuple(range(n))], n=n)

    @property
    def class_of(self) -> np.ndarray:
        labels = np.empty(self.n, dtype=np.intp)
        for cid, members in enumerate(self.classes):
            for i in members:
                labels[i] = cid
        return labels

    @property
    def ordered(self) -> bool:
        """True iff every class is an interval of consecutive integers."""
        return all(c[-1] - c[0] + 1 == len(c) for c in self.classes)

    def class_containing(self, i: int) -> tuple[int, ...]:
        return self.classes[self.class_of[i]]

    def __len__(self) -> int:
        return len(self.classes)


def partition_of(x, tol: float = DEFAULT_CLUSTER_TOL) -> Partition:
    """Cluster a 1-D configuration by chained proximity.

    Two indices land in the same class iff they are connected by a chain of
    coordinates with successive gaps <= tol (transitive closure; on a line
    this equals union-find on the sorted order). tol = 0 gives exact equality
    classes.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    x = np.asarray(x, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError("partition_of works on 1-D configurations")
    order = np.argsort(x, kind="stable")
    xs = x[order]
    labels = np.empty(len(x), dtype=np.intp)
    current = 0
    labels[order[0]] = 0
    for k in range(1, len(x)):
        if xs[k] - xs[k - 1] > tol:
            current += 1
        labels[order[k]] = current
    return Partition.from_class_of(labels)


def project_class_average(V, pi: Partition) -> np.ndarray:
    """Replace each coordinate vector by the mean over its class.

    This is the orthogonal projection onto the subspace of clouds constant on
    the classes of ``pi``: idempotent, linear, non-expansive.
    """
    V = np.asarray(V, dtype=float)
    arr = V if V.ndim == 2 else V[:, None]
    if arr.shape[0] != pi.n:
        raise ValueError("partition size does not match the cloud")
    out = np.empty_like(arr)
    for members in pi.classes:
        idx = list(members)
        out[idx] = arr[idx].mean(axis=0)
    return out if V.ndim == 2 else out[:, 0]


def is_refinement(pi: Partition, pi_coarse: Partition) -> bool:
    """True iff every class of ``pi`` is contained in some class of ``pi_coarse``."""
    if pi.n != pi_coarse.n:
        raise ValueError("partitions must cover the same index set")
    labels = pi_coarse.class_of
    return all(len({int(labels[i]) for i in c}) == 1 for c in pi.classes)


def ordered_partitions(n: int) -> list[Partition]:
    """All partitions of {0..n-1} into intervals of consecutive integers."""
    out = []
    for bits in itertools.product((0, 1), repeat=n - 1):
        classes = []
        start = 0
        for k, cut in enumerate(bits):
            if cut:
                classes.append(tuple(range(start, k + 1)))
                start = k + 1
        classes.append(tuple(range(start, n)))
        out.append(Partition.from_classes(classes, n=n))
    return out


def join_partitions(pi1: Partition, pi2: Partition) -> Partition:
    """Finest partition of which both arguments are refinements."""
    if pi1.n != pi2.n:
        raise ValueError("partitions must cover the same index set")
    parent = list(range(pi1.n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i, j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri

    for pi in (pi1, pi2):
        for members in pi.classes:
            for i in members[1:]:
                union(members[0], i)
    return Partition.from_class_of([find(i) for i in range(pi1.n)])


@dataclass(frozen=True)
class Trajectory:
    """A uniformly gridded path of clouds in the t- or theta-gauge.

    ``states`` has shape (M+1, N, d) over the M+1 grid stamps. Non-uniform
    grids are rejected: downstream quadrature and bit-reproducibility both
    assume uniform spacing.
    """

    gauge: str
    grid: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        if self.gauge not in ("t", "theta"):
            raise ValueError(f"unknown gauge {self.gauge!r}")
        grid = np.asarray(self.grid, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 2:
            states = states[:, :, None]
        if grid.ndim != 1 or len(grid) < 2:
            raise ValueError("grid must hold at least two stamps")
        steps = np.diff(grid)
        if not np.all(steps > 0):
            raise ValueError("grid must be strictly increasing")
        span = grid[-1] - grid[0]
        if np.max(np.abs(steps - steps[0])) > 1e-9 * span:
            raise ValueError("grid must be uniform")
        if self.gauge == "t" and grid[0] <= 0:
            raise ValueError("t-gauge grids must start at t > 0 (heat kernel domain)")
        if states.ndim != 3 or states.shape[0] != len(grid):
            raise ValueError("states must have shape (len(grid), N, d)")
        if not np.all(np.isfinite(states)):
            raise ValueError("trajectory states must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "states", states)

    @property
    def intervals(self) -> int:
        return len(self.grid) - 1

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def spacing(self) -> float:
        return float((self.grid[-1] - self.grid[0]) / self.intervals)

    @property
    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.states[0].copy(), self.states[-1].copy()

    def states1d(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("states1d requires a 1-dimensional trajectory")
        return self.states[:, :, 0]

    @staticmethod
    def from_1d(gauge: str, grid, states2d) -> "Trajectory":
        states2d = np.asarray(states2d, dtype=float)
        return Trajectory(gauge=gauge, grid=np.asarray(grid, dtype=float), states=states2d[:, :, None])
