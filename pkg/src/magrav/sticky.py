"""Event-driven forward simulator of the 1D cluster dynamics with sticky merges.

Between collisions every cluster follows z'' = z - m with m the mean of the
lattice values over its members, which integrates exactly:

    z(t + dt) = m + (z - m) cosh(dt) + v sinh(dt),
    v(t + dt) =     (z - m) sinh(dt) + v cosh(dt).

Collisions are perfectly inelastic: members merge into one interval cluster,
the outgoing velocity is the mass-weighted mean of the incoming ones, and the
kinetic loss k1 k2 / (k1 + k2) (v1 - v2)^2 is recorded per event. Merging
only; spontaneous separation is the variational oracle's business, not the
forward simulator's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clouds import Lattice, Trajectory, partition_of
from .errors import NumericalError

__all__ = [
    "COLLISION_TOL",
    "Cluster",
    "SimState",
    "MergeEvent",
    "flow_free",
    "first_collision_time",
    "merge_clusters",
    "simulate_sticky",
]

# Absolute gap tolerance: a pair collides once its gap crosses below this.
COLLISION_TOL = 1e-12
_SCAN_PANELS = 64


@dataclass(frozen=True)
class Cluster:
    position: float
    velocity: float
    members: tuple[int, ...]

    def __post_init__(self):
        members = tuple(sorted(int(i) for i in self.members))
        if not members:
            raise ValueError("a cluster needs at least one member")
        if members[-1] - members[0] + 1 != len(members):
            raise ValueError("cluster members must form an interval of indices")
        object.__setattr__(self, "members", members)

    @property
    def mass(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class SimState:
    time: float
    clusters: tuple[Cluster, ...]
    lattice: Lattice

    def __post_init__(self):
        if self.lattice.dim != 1:
            raise ValueError("the sticky simulator is 1-D only")
        pos = [c.position for c in self.clusters]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("cluster positions must be strictly increasing")
        members = [i for c in self.clusters for i in c.members]
        if sorted(members) != list(range(self.lattice.count)):
            raise ValueError("clusters must partition the particle indices")
        for left, right in zip(self.clusters, self.clusters[1:]):
            if left.members[-1] + 1 != right.members[0]:
                raise ValueError("clusters must be ordered intervals of indices")


@dataclass(frozen=True)
class MergeEvent:
    time: float
    position: float
    members: tuple[int, ...]
    incoming_masses: tuple[int, ...]
    incoming_velocities: tuple[float, ...]
    outgoing_velocity: float
    kinetic_loss: float


def _cluster_mean(lattice: Lattice, members) -> float:
    return float(lattice.values1d()[list(members)].mean())


def _advance(cluster: Cluster, mean: float, dt: float) -> tuple[float, float]:
    w = cluster.position - mean
    ch, sh = math.cosh(dt), math.sinh(dt)
    return mean + w * ch + cluster.velocity * sh, w * sh + cluster.velocity * ch


def flow_free(state: SimState, dt: float) -> SimState:
    """Advance every cluster by the closed form; the caller guarantees no collision."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    moved = []
    for cluster in state.clusters:
        z, v = _advance(cluster, _cluster_mean(state.lattice, cluster.members), dt)
        moved.append(Cluster(position=z, velocity=v, members=cluster.members))
    pos = [c.position for c in moved]
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise NumericalError("cluster order violated during free flow (missed collision)")
    return SimState(time=state.time + dt, clusters=tuple(moved), lattice=state.lattice)


def _gap_function(state: SimState, idx: int):
    left = state.clusters[idx]
    right = state.clusters[idx + 1]
    ml = _cluster_mean(state.lattice, left.members)
    mr = _cluster_mean(state.lattice, right.members)
    dm = mr - ml
    dw = (right.position - mr) - (left.position - ml)
    dv = right.velocity - left.velocity

    def gap(dt: float) -> float:
        return dm + dw * math.cosh(dt) + dv * math.sinh(dt)

    return gap


def first_collision_time(state: SimState, horizon: float):
    """Earliest time (absolute) at which an adjacent gap crosses below tolerance.

    Each gap is scanned on 64 panels of [0, horizon] for a sign bracket of
    gap - tol, then bisected to 1e-12. Returns None when nothing collides, or
    (time, (left_index, right_index)).
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    best = None
    for idx in range(len(state.clusters) - 1):
        gap = _gap_function(state, idx)
        ts = np.linspace(0.0, horizon, _SCAN_PANELS + 1)
        hit = None
        for k in range(1, len(ts)):
            if gap(float(ts[k])) <= COLLISION_TOL:
                # keep gap(lo) > tol so flowing to the returned time preserves order
                lo, hi = float(ts[k - 1]), float(ts[k])
                for _ in range(200):
                    if hi - lo <= 1e-12:
                        break
                    mid = 0.5 * (lo + hi)
                    if gap(mid) <= COLLISION_TOL:
                        hi = mid
                    else:
                        lo = mid
                hit = lo
                break
        if hit is not None and (best is None or hit < best[0]):
            best = (hit, (idx, idx + 1))
    if best is None:
        return None
    return state.time + best[0], best[1]


def merge_clusters(left: Cluster, right: Cluster, time: float = 0.0) -> tuple[Cluster, MergeEvent]:
    """Inelastic merge of two touching adjacent clusters.

    Outgoing velocity is the mass-weighted mean; the kinetic loss
    k1 k2/(k1+k2) (v1 - v2)^2 equals the drop of sum(k v^2) exactly.
    """
    if left.members[-1] + 1 != right.members[0]:
        raise ValueError("only adjacent clusters can merge")
    if abs(left.position - right.position) > 1e-6 * (1.0 + abs(left.position)):
        raise ValueError("clusters must be touching to merge")
    k1, k2 = left.mass, right.mass
    v1, v2 = left.velocity, right.velocity
    p = (k1 * v1 + k2 * v2) / (k1 + k2)
    loss = k1 * k2 / (k1 + k2) * (v1 - v2) ** 2
    position = (k1 * left.position + k2 * right.position) / (k1 + k2)
    merged = Cluster(position=position, velocity=p, members=left.members + right.members)
    event = MergeEvent(
        time=time,
        position=position,
        members=merged.members,
        incoming_masses=(k1, k2),
        incoming_velocities=(v1, v2),
        outgoing_velocity=p,
        kinetic_loss=loss,
    )
    return merged, event


def _initial_state(p: np.ndarray, v0: np.ndarray, lattice: Lattice, t_start: float) -> SimState:
    pi = partition_of(p, tol=1e-12 * (1.0 + float(np.max(np.abs(p)))))
    clusters = []
    for members in pi.classes:
        idx = list(members)
        clusters.append(Cluster(
            position=float(p[idx].mean()),
            velocity=float(v0[idx].mean()),
            members=members,
        ))
    clusters.sort(key=lambda c: c.members[0])
    return SimState(time=t_start, clusters=tuple(clusters), lattice=lattice)


def simulate_sticky(p, v0, window: tuple[float, float], lattice: Lattice,
                    grid_m: int = 512) -> tuple[Trajectory, list[MergeEvent]]:
    """Run the event-driven dynamics and sample it on a uniform grid.

    ``p`` must be ordered (ties allowed; tied particles start merged with the
    mean velocity). Events carry exact times separately, so none is lost to
    sampling. At most N - 1 merges can occur.
    """
    p = np.asarray(p, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if p.ndim == 2:
        p = p[:, 0]
    if v0.ndim == 2:
        v0 = v0[:, 0]
    if np.any(np.diff(p) < 0):
        raise ValueError("initial positions must be ordered")
    t_start, t_end = float(window[0]), float(window[1])
    if t_end <= t_start:
        raise ValueError("window must be increasing")

    state = _initial_state(p, v0, lattice, t_start)
    segments = [state]
    events: list[MergeEvent] = []

    while state.time < t_end - 1e-15:
        remaining = t_end - state.time
        hit = first_collision_time(state, remaining)
        if hit is None:
            state = flow_free(state, remaining)
            break
        t_hit, (idx, _) = hit
        state = flow_free(state, t_hit - state.time)
        clusters = list(state.clusters)
        merged, event = merge_clusters(clusters[idx], clusters[idx + 1], time=state.time)
        events.append(event)
        clusters[idx:idx + 2] = [merged]
        # simultaneous contacts elsewhere are resolved left-to-right at this timestamp
        k = 0
        while k < len(clusters) - 1:
            if clusters[k + 1].position - clusters[k].position <= 100.0 * COLLISION_TOL:
                merged, event = merge_clusters(clusters[k], clusters[k + 1], time=state.time)
                events.append(event)
                clusters[k:k + 2] = [merged]
            else:
                k += 1
        state = SimState(time=state.time, clusters=tuple(clusters), lattice=lattice)
        segments.append(state)

    grid = np.linspace(t_start, t_end, grid_m + 1)
    starts = np.array([s.time for s in segments])
    states_out = np.empty((grid_m + 1, lattice.count))
    for k, t in enumerate(grid):
        j = int(np.searchsorted(starts, t, side="right") - 1)
        j = max(j, 0)
        seg = segments[j]
        dt = float(t - seg.time)
        for cluster in seg.clusters:
            z, _ = _advance(cluster, _cluster_mean(lattice, cluster.members), dt)
            for i in cluster.members:
                states_out[k, i] = z
    return Trajectory.from_1d("theta", grid, states_out), events
