"""Invariant measurement on 1-D theta-gauge trajectories.

Velocities are estimated by finite differences that never straddle a change
of cluster structure: the grid is split into maximal runs of constant
partition, with central differences inside a run and one-sided second-order
stencils at its edges. Velocity jumps at shocks are measured by linear fits
over 8-step one-sided windows kept clear of the shock, which is robust to
O(dtheta) noise while staying local.

The energy profile is E = |Z'|^2 - |Z - A|^2 - h(pi(Z)); on minimizers it is
constant up to discretization, while forward sticky simulations may jump at
merges (the jump equals the internal-energy gap minus the kinetic loss, which
is reported, not asserted zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clouds import DEFAULT_CLUSTER_TOL, Lattice, Partition, Trajectory, join_partitions, partition_of
from .potential import delta_gap, internal_energy

__all__ = [
    "EnergyProfile",
    "ShockRecord",
    "JumpCheck",
    "energy_profile",
    "momentum_residual",
    "detect_shocks",
    "check_velocity_jump",
]

_FIT_WINDOW = 8   # grid steps per one-sided velocity fit
_CLEARANCE = 1    # grid steps kept clear of the shock before a fit window
_ISOLATION_STEPS = 4


@dataclass(frozen=True)
class EnergyProfile:
    values: np.ndarray
    max_deviation: float


@dataclass(frozen=True)
class ShockRecord:
    time: float
    location: float
    members: tuple[int, ...]
    velocities_before: np.ndarray
    velocities_after: np.ndarray
    jump_min: float
    conclusive: bool
    isolated: bool


@dataclass(frozen=True)
class JumpCheck:
    jump: float
    alpha: float
    passed: bool
    conclusive: bool


def _check_1d_theta(traj: Trajectory) -> np.ndarray:
    if traj.dim != 1:
        raise ValueError("analysis operations are 1-D only")
    return traj.states1d()


def _node_partitions(states: np.ndarray, tol: float) -> list[Partition]:
    return [partition_of(states[k], tol) for k in range(states.shape[0])]


def _runs(partitions: list[Partition]) -> list[tuple[int, int]]:
    """Maximal inclusive index ranges on which the partition is constant."""
    runs = []
    start = 0
    for k in range(1, len(partitions)):
        if partitions[k] != partitions[start]:
            runs.append((start, k - 1))
            start = k
    runs.append((start, len(partitions) - 1))
    return runs


def _segment_velocities(grid: np.ndarray, states: np.ndarray,
                        runs: list[tuple[int, int]]) -> np.ndarray:
    dt = float(grid[1] - grid[0])
    vel = np.full_like(states, np.nan)
    for a, b in runs:
        n = b - a + 1
        if n >= 3:
            vel[a + 1:b] = (states[a + 2:b + 1] - states[a:b - 1]) / (2.0 * dt)
            vel[a] = (-3.0 * states[a] + 4.0 * states[a + 1] - states[a + 2]) / (2.0 * dt)
            vel[b] = (3.0 * states[b] - 4.0 * states[b - 1] + states[b - 2]) / (2.0 * dt)
        elif n == 2:
            vel[a] = vel[b] = (states[b] - states[a]) / dt
    return vel


def energy_profile(traj: Trajectory, A: Lattice,
                   cluster_tol: float = DEFAULT_CLUSTER_TOL) -> EnergyProfile:
    """E(theta) per node, and the max deviation from the median E."""
    states = _check_1d_theta(traj)
    a = A.values1d()
    partitions = _node_partitions(states, cluster_tol)
    vel = _segment_velocities(traj.grid, states, _runs(partitions))
    energies = np.empty(states.shape[0])
    for k in range(states.shape[0]):
        kin = float(np.sum(vel[k] ** 2))
        pot = float(np.sum((states[k] - a) ** 2))
        energies[k] = kin - pot - internal_energy(partitions[k], A)
    finite = energies[np.isfinite(energies)]
    deviation = float(np.max(np.abs(finite - np.median(finite)))) if finite.size else math.nan
    return EnergyProfile(values=energies, max_deviation=deviation)


def momentum_residual(traj: Trajectory, A: Lattice) -> float:
    """Max interior defect of the center-of-mass law M'' = M - mean(a).

    The mean coordinate stays smooth through merges (momentum conservation),
    so plain second differences apply across the whole grid.
    """
    states = _check_1d_theta(traj)
    abar = float(A.values1d().mean())
    m = states.mean(axis=1)
    dt = traj.spacing
    second = (m[2:] - 2.0 * m[1:-1] + m[:-2]) / (dt * dt)
    return float(np.max(np.abs(second - (m[1:-1] - abar))))


def _interp_gap(states: np.ndarray, members: tuple[int, ...], k0: int, k1: int, w: float) -> float:
    row = (1.0 - w) * states[k0] + w * states[k1]
    vals = np.sort(row[list(members)])
    return float(np.max(np.diff(vals))) if len(members) > 1 else 0.0


def _refine_shock_time(grid: np.ndarray, states: np.ndarray, members: tuple[int, ...],
                       k: int, tol: float) -> float:
    """Bisection on the interpolated internal gap of the class across nodes k, k+1."""
    g0 = _interp_gap(states, members, k, k + 1, 0.0)
    g1 = _interp_gap(states, members, k, k + 1, 1.0)
    decreasing = g0 > g1
    lo, hi = 0.0, 1.0
    if not ((g0 > tol >= g1) or (g1 > tol >= g0)):
        w = 0.5
    else:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            gm = _interp_gap(states, members, k, k + 1, mid)
            above = gm > tol
            if above == decreasing:
                lo = mid
            else:
                hi = mid
        w = 0.5 * (lo + hi)
    return float((1.0 - w) * grid[k] + w * grid[k + 1])


def _window_slope(grid: np.ndarray, series: np.ndarray, a: int, b: int) -> float:
    th = grid[a:b + 1] - grid[a:b + 1].mean()
    y = series[a:b + 1]
    return float((th @ (y - y.mean())) / (th @ th))


def detect_shocks(traj: Trajectory, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> list[ShockRecord]:
    """Scan the grid partition for changes and measure each changed class.

    A shock record is produced for every class of the coarser (join) side
    that is not shared by both neighbors. The shock time is refined by
    bisection on the linearly interpolated internal gap; one-sided member
    velocities come from 8-step window fits when the windows fit inside the
    adjacent constant-partition runs (else the record is inconclusive).
    Isolation uses the documented heuristic: another shock within 4 grid
    steps in time and 4 configuration spreads in space disqualifies both.
    """
    states = _check_1d_theta(traj)
    grid = traj.grid
    partitions = _node_partitions(states, cluster_tol)
    runs = _runs(partitions)
    n = traj.n_particles

    records = []
    for (la, lb), (ra, rb) in zip(runs, runs[1:]):
        left = partitions[lb]
        right = partitions[ra]
        joined = join_partitions(left, right)
        shared = set(left.classes) & set(right.classes)
        for members in joined.classes:
            if members in shared or len(members) == 1:
                continue
            t_star = _refine_shock_time(grid, states, members, lb, cluster_tol)
            w = (t_star - grid[lb]) / (grid[ra] - grid[lb])
            row = (1.0 - w) * states[lb] + w * states[ra]
            location = float(row[list(members)].mean())

            before_hi = lb - _CLEARANCE
            before_lo = before_hi - (_FIT_WINDOW - 1)
            after_lo = ra + _CLEARANCE
            after_hi = after_lo + (_FIT_WINDOW - 1)
            conclusive = before_lo >= la and after_hi <= rb
            v_before = np.full(n, np.nan)
            v_after = np.full(n, np.nan)
            if conclusive:
                for i in members:
                    v_before[i] = _window_slope(grid, states[:, i], before_lo, before_hi)
                    v_after[i] = _window_slope(grid, states[:, i], after_lo, after_hi)
                jump = float(v_before[min(members)] - v_after[min(members)])
            else:
                jump = math.nan
            records.append(ShockRecord(
                time=t_star,
                location=location,
                members=members,
                velocities_before=v_before,
                velocities_after=v_after,
                jump_min=jump,
                conclusive=conclusive,
                isolated=True,
            ))

    dt = traj.spacing
    spreads = states.max(axis=1) - states.min(axis=1)
    flags = [True] * len(records)
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            ri, rj = records[i], records[j]
            near_t = abs(ri.time - rj.time) <= _ISOLATION_STEPS * dt
            node = int(np.clip(round((ri.time - grid[0]) / dt), 0, len(grid) - 1))
            radius = _ISOLATION_STEPS * max(float(spreads[node]), cluster_tol)
            if near_t and abs(ri.location - rj.location) <= radius:
                flags[i] = flags[j] = False
    out = []
    for rec, flag in zip(records, flags):
        out.append(ShockRecord(
            time=rec.time, location=rec.location, members=rec.members,
            velocities_before=rec.velocities_before, velocities_after=rec.velocities_after,
            jump_min=rec.jump_min, conclusive=rec.conclusive, isolated=flag,
        ))
    return out


def check_velocity_jump(traj: Trajectory, shock: ShockRecord, A: Lattice,
                        tol: float = 0.01) -> JumpCheck:
    """Compare the measured jump of particle min(C) against the lattice bound.

    ``tol`` is the accepted relative shortfall: 1% is appropriate for oracle
    output, 20% for optimizer output with its discretization noise.
    """
    if not shock.isolated:
        raise ValueError("the velocity-jump bound applies to isolated shocks only")
    _, alpha = delta_gap(A)
    if not shock.conclusive:
        return JumpCheck(jump=shock.jump_min, alpha=alpha, passed=False, conclusive=False)
    passed = bool(shock.jump_min >= alpha * (1.0 - tol))
    return JumpCheck(jump=shock.jump_min, alpha=alpha, passed=passed, conclusive=True)
