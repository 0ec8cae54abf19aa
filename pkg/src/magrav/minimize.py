"""Minimization of discretized actions, and the 1D pattern-enumeration oracle.

The smooth kinds (``L_eps``, ``K_eps``) are descended with endpoint nodes
clamped: steepest descent with a Barzilai-Borwein trial step and Armijo
backtracking (c = 1e-4, halving), so the value history is non-increasing by
construction. The nonsmooth limit functionals are never descended directly;
the epsilon-continuation (warm-started geometric schedule) is the
minimization strategy for them.

The oracle enumerates ordered-partition sequences with a bounded number of
transitions, solves each piecewise two-point boundary problem in closed form
(per cluster, z'' = z - mean(a over cluster), cosh/sinh profiles), optimizes
the free shock times by golden-section search, and returns the best valid
pattern. Momentum conservation at shocks is automatic: the shared shock
positions are interior variables of the quadratic form, and stationarity in
them is exactly the mass-weighted velocity matching.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .actions import ActionSpec, SMOOTH_KINDS, _discrete_value_grad, _endpoint_matches, _endpoint_targets, eval_action
from .clouds import (
    Lattice,
    Partition,
    Trajectory,
    as_cloud,
    join_partitions,
    ordered_partitions,
    sort_ascending,
)
from .errors import CapabilityError, GaugeError, NumericalError

__all__ = [
    "SolveOptions",
    "SolveReport",
    "SweepResult",
    "ShockPattern",
    "OracleResult",
    "straight_line_trajectory",
    "minimize_fixed_eps",
    "continuation_sweep",
    "oracle_minimizer_1d",
]


@dataclass(frozen=True)
class SolveOptions:
    grad_tol: float = 1e-7          # stopping threshold on the max-norm of the interior gradient
    max_iters: int = 100_000
    armijo_c: float = 1e-4
    step_floor: float = 1e-18
    keep_history: bool = True


@dataclass(frozen=True)
class SolveReport:
    final_traj: Trajectory
    value: float
    grad_norm: float
    iterations: int
    converged: bool
    history: np.ndarray


@dataclass(frozen=True)
class SweepResult:
    """Per-epsilon solve reports plus the limit functional on each minimizer."""

    reports: tuple[SolveReport, ...]
    limit_values: tuple[float, ...]
    limit_kind: str


def straight_line_trajectory(spec: ActionSpec, m: int) -> Trajectory:
    """Linear interpolation between the spec endpoints on the spec window.

    For d = 1 and endpoint mode up to permutation, the endpoints are sorted
    first (an ordered minimizer always exists), which is also how the descent
    resolves the permutation freedom.
    """
    p, q = _endpoint_targets(spec)
    if spec.endpoint_mode == "up_to_permutation" and spec.lattice.dim == 1:
        p = np.sort(p[:, 0])[:, None]
        q = np.sort(q[:, 0])[:, None]
    grid = np.linspace(spec.window[0], spec.window[1], m + 1)
    w = np.linspace(0.0, 1.0, m + 1)[:, None, None]
    states = (1.0 - w) * p[None] + w * q[None]
    return Trajectory(gauge=spec.gauge, grid=grid, states=states)


def minimize_fixed_eps(spec: ActionSpec, init: Trajectory,
                       opts: SolveOptions | None = None) -> SolveReport:
    """Descend the discretized smooth action from ``init``; endpoints never move."""
    if spec.kind not in SMOOTH_KINDS:
        raise ValueError(f"minimize_fixed_eps handles smooth kinds only, got {spec.kind!r}")
    if init.gauge != spec.gauge:
        raise GaugeError(f"init must be a {spec.gauge}-gauge trajectory")
    opts = opts or SolveOptions()
    tp, tq = _endpoint_targets(spec)
    if not (_endpoint_matches(init.states[0], tp, spec.endpoint_mode, spec.endpoint_tol)
            and _endpoint_matches(init.states[-1], tq, spec.endpoint_mode, spec.endpoint_tol)):
        raise ValueError("init does not satisfy the endpoint constraints")

    grid = init.grid
    shape = init.states.shape
    first = init.states[0].copy()
    last = init.states[-1].copy()

    def assemble(xflat: np.ndarray) -> np.ndarray:
        states = np.empty(shape)
        states[0] = first
        states[-1] = last
        states[1:-1] = xflat.reshape(shape[0] - 2, shape[1], shape[2])
        return states

    def value_grad(xflat: np.ndarray) -> tuple[float, np.ndarray]:
        states = assemble(xflat)
        val, grad = _discrete_value_grad(spec, grid, states, want_grad=True)
        if not np.isfinite(val):
            raise NumericalError("non-finite action encountered during descent", residual=val)
        return val, grad[1:-1].ravel()

    x = init.states[1:-1].reshape(-1).copy()
    f, g = value_grad(x)
    history = [f]
    step = 1.0 / (1.0 + float(np.linalg.norm(g)))
    converged = False
    iters = 0
    for iters in range(opts.max_iters):
        gnorm = float(np.abs(g).max()) if g.size else 0.0
        if gnorm <= opts.grad_tol:
            converged = True
            break
        d = -g
        gd = float(g @ d)
        t = step
        accepted = False
        while t >= opts.step_floor:
            xn = x + t * d
            fn, gn_vec = value_grad(xn)
            if fn <= f + opts.armijo_c * t * gd:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break  # no descent step representable; stop without breaking monotonicity
        s = xn - x
        y = gn_vec - g
        sy = float(s @ y)
        yy = float(y @ y)
        if sy > 1e-18 and yy > 0.0:
            # BB2 trial step: conservative enough that Armijo rarely rejects it
            step = min(max(sy / yy, 1e-12), 1e8)
        else:
            step = 1.0 / (1.0 + float(np.linalg.norm(gn_vec)))
        x, f, g = xn, fn, gn_vec
        if opts.keep_history:
            history.append(f)
    gnorm = float(np.abs(g).max()) if g.size else 0.0
    converged = converged or gnorm <= opts.grad_tol
    final = Trajectory(gauge=spec.gauge, grid=grid, states=assemble(x))
    return SolveReport(
        final_traj=final,
        value=f,
        grad_norm=gnorm,
        iterations=iters,
        converged=converged,
        history=np.asarray(history),
    )


def continuation_sweep(base_spec: ActionSpec, eps_schedule, init: Trajectory,
                       opts: SolveOptions | None = None) -> SweepResult:
    """Warm-started descent along a decreasing epsilon schedule.

    Each epsilon starts from the previous minimizer; the limit functional
    (L for the L_eps lane, K for the K_eps lane) is evaluated on every
    minimizer so convergence of minima can be tracked against an oracle.
    """
    eps_schedule = [float(e) for e in eps_schedule]
    if not eps_schedule:
        raise ValueError("eps schedule must be nonempty")
    if any(e <= 0 for e in eps_schedule):
        raise ValueError("eps schedule must be positive")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    limit_kind = "L" if base_spec.kind == "L_eps" else "K"
    reports = []
    limit_values = []
    current = init
    for eps in eps_schedule:
        spec = replace(base_spec, eps=eps)
        try:
            report = minimize_fixed_eps(spec, current, opts)
        except NumericalError as err:
            raise NumericalError(f"solver failed at eps={eps}: {err}", residual=err.residual) from err
        reports.append(report)
        limit_spec = replace(base_spec, kind=limit_kind, eps=None)
        limit_values.append(float(eval_action(limit_spec, report.final_traj)))
        current = report.final_traj
    return SweepResult(reports=tuple(reports), limit_values=tuple(limit_values), limit_kind=limit_kind)


# ---------------------------------------------------------------------------
# 1D oracle: enumerate cluster patterns, solve piecewise BVPs in closed form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShockPattern:
    """Sequence of ordered partitions with the transition times between them."""

    partitions: tuple[Partition, ...]
    times: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) != len(self.partitions) - 1:
            raise ValueError("need exactly one time per transition")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("transition times must be strictly increasing")


@dataclass(frozen=True)
class OracleResult:
    trajectory: Trajectory
    value: float
    pattern: ShockPattern


def _segment_cost_coeffs(length: float) -> tuple[float, float]:
    """Quadratic coefficients of min integral(w'^2 + w^2) with fixed endpoint values.

    The minimal cost is (cosh(L)(w0^2 + w1^2) - 2 w0 w1)/sinh(L), i.e.
    alpha (w0^2 + w1^2) + 2 gamma w0 w1 with alpha = cosh(L)/sinh(L),
    gamma = -1/sinh(L).
    """
    s = math.sinh(length)
    return math.cosh(length) / s, -1.0 / s


class _PatternProblem:
    """Assemble the cluster action of one partition sequence as a quadratic form."""

    def __init__(self, a: np.ndarray, p: np.ndarray, q: np.ndarray,
                 seq: tuple[Partition, ...], horizon: float):
        self.a = a
        self.p = p
        self.q = q
        self.seq = seq
        self.horizon = horizon
        self.k_trans = len(seq) - 1
        self.var_index: dict[tuple[int, tuple[int, ...]], int] = {}
        self.junctions: list[Partition] = []
        nv = 0
        for m in range(1, self.k_trans + 1):
            rho = join_partitions(seq[m - 1], seq[m])
            self.junctions.append(rho)
            for members in rho.classes:
                self.var_index[(m, members)] = nv
                nv += 1
        self.n_vars = nv

    def _position(self, junction: int, members: tuple[int, ...]):
        """(variable index or None, constant) for the cluster position at a junction."""
        if junction == 0:
            return None, float(self.p[members[0]])
        if junction == self.k_trans + 1:
            return None, float(self.q[members[0]])
        rho = self.junctions[junction - 1]
        rho_class = rho.classes[rho.class_of[members[0]]]
        return self.var_index[(junction, rho_class)], 0.0

    def solve(self, times: tuple[float, ...]) -> tuple[float, np.ndarray]:
        bounds = [0.0, *times, self.horizon]
        H = np.zeros((self.n_vars, self.n_vars))
        g = np.zeros(self.n_vars)
        c0 = 0.0

        def accumulate(alpha, gamma, left, right, mass, mean):
            nonlocal c0
            (iL, bL), (iR, bR) = left, right
            wL = (iL, bL - mean)
            wR = (iR, bR - mean)
            for i, b in (wL, wR):
                if i is None:
                    c0 += mass * alpha * b * b
                else:
                    H[i, i] += mass * alpha
                    g[i] += 2.0 * mass * alpha * b
                    c0 += mass * alpha * b * b
            (i0, b0), (i1, b1) = wL, wR
            if i0 is not None and i1 is not None:
                H[i0, i1] += mass * gamma
                H[i1, i0] += mass * gamma
                g[i0] += 2.0 * mass * gamma * b1
                g[i1] += 2.0 * mass * gamma * b0
                c0 += 2.0 * mass * gamma * b0 * b1
            elif i0 is not None:
                g[i0] += 2.0 * mass * gamma * b1
                c0 += 2.0 * mass * gamma * b0 * b1
            elif i1 is not None:
                g[i1] += 2.0 * mass * gamma * b0
                c0 += 2.0 * mass * gamma * b0 * b1
            else:
                c0 += 2.0 * mass * gamma * b0 * b1

        for j, part in enumerate(self.seq):
            length = bounds[j + 1] - bounds[j]
            alpha, gamma = _segment_cost_coeffs(length)
            for members in part.classes:
                mean = float(self.a[list(members)].mean())
                accumulate(alpha, gamma, self._position(j, members),
                           self._position(j + 1, members), len(members), mean)

        if self.n_vars:
            u = np.linalg.lstsq(2.0 * H, -g, rcond=None)[0]
            value = float(u @ H @ u + g @ u + c0)
        else:
            u = np.zeros(0)
            value = c0
        return value, u

    def cluster_curves(self, times: tuple[float, ...], u: np.ndarray):
        """Per-segment closed forms: list of (t_lo, t_hi, [(members, mean, wL, c2)])."""
        bounds = [0.0, *times, self.horizon]
        segments = []
        for j, part in enumerate(self.seq):
            lo, hi = bounds[j], bounds[j + 1]
            length = hi - lo
            curves = []
            for members in part.classes:
                mean = float(self.a[list(members)].mean())
                iL, bL = self._position(j, members)
                iR, bR = self._position(j + 1, members)
                zl = bL if iL is None else float(u[iL])
                zr = bR if iR is None else float(u[iR])
                wl = zl - mean
                c2 = ((zr - mean) - wl * math.cosh(length)) / math.sinh(length)
                curves.append((members, mean, wl, c2))
            segments.append((lo, hi, curves))
        return segments


def _golden_min(fun, lo: float, hi: float, iters: int = 80) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    mid = 0.5 * (a + b)
    return mid, fun(mid)


def _segment_positions(segments, s: float) -> dict[tuple[int, ...], float]:
    for lo, hi, curves in segments:
        if s <= hi or (lo, hi, curves) is segments[-1]:
            if s >= lo:
                rel = s - lo
                return {
                    members: mean + wl * math.cosh(rel) + c2 * math.sinh(rel)
                    for members, mean, wl, c2 in curves
                }
    raise AssertionError("time outside pattern window")


def _pattern_valid(segments, scale: float) -> bool:
    """Clusters must not cross inside any open segment (touching is allowed)."""
    for lo, hi, curves in segments:
        if len(curves) < 2:
            continue
        samples = np.linspace(lo, hi, 35)[1:-1]
        order = sorted(range(len(curves)), key=lambda i: curves[i][0][0])
        for s in samples:
            rel = s - lo
            pos = [curves[i][1] + curves[i][2] * math.cosh(rel) + curves[i][3] * math.sinh(rel)
                   for i in order]
            if any(b - a < -1e-9 * scale for a, b in zip(pos, pos[1:])):
                return False
    return True


def _feasible_start(vec: np.ndarray, part: Partition, tol: float) -> bool:
    return all(np.ptp(vec[list(members)]) <= tol for members in part.classes)


def oracle_minimizer_1d(A: Lattice, P, Q, window: tuple[float, float],
                        pattern_budget: int = 2, grid_m: int = 512) -> OracleResult:
    """Independent LambdaPrime minimizer for d = 1, N <= 3.

    Enumerates every sequence of ordered partitions with at most
    ``pattern_budget`` transitions, solves the free junction positions
    exactly, optimizes the transition times, validates that clusters do not
    cross, and returns the best pattern sampled on a uniform grid.
    """
    if A.dim != 1 or not A.strictly_ordered:
        raise ValueError("the oracle requires a strictly ordered 1-D lattice")
    if A.count > 3:
        raise CapabilityError("the pattern oracle is restricted to N <= 3")
    if pattern_budget > 4:
        raise CapabilityError("pattern budgets above 4 transitions are not enumerable at desk scale")
    a = A.values1d()
    p, _ = sort_ascending(as_cloud(P, 1)[:, 0])
    q, _ = sort_ascending(as_cloud(Q, 1)[:, 0])
    theta0, theta1 = float(window[0]), float(window[1])
    horizon = theta1 - theta0
    if horizon <= 0:
        raise ValueError("window must be increasing")
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(np.abs(p))), float(np.max(np.abs(q))))
    tie = 1e-12 * scale
    margin = 1e-6 * horizon

    parts = ordered_partitions(A.count)
    best: tuple[float, _PatternProblem, tuple[float, ...], np.ndarray] | None = None

    for k_trans in range(pattern_budget + 1):
        for seq in itertools.product(parts, repeat=k_trans + 1):
            if any(x == y for x, y in zip(seq, seq[1:])):
                continue
            if not _feasible_start(p, seq[0], tie) or not _feasible_start(q, seq[-1], tie):
                continue
            problem = _PatternProblem(a, p, q, seq, horizon)

            if k_trans == 0:
                value, u = problem.solve(())
                times: tuple[float, ...] = ()
            elif k_trans == 1:
                t_opt, value = _golden_min(lambda t: problem.solve((t,))[0], margin, horizon - margin)
                times = (t_opt,)
                value, u = problem.solve(times)
            else:
                # coarse grid seed, then alternating golden-section sweeps
                grid = np.linspace(margin, horizon - margin, 13)
                seed = min(
                    ((problem.solve((t1, t2))[0], (t1, t2))
                     for t1, t2 in itertools.combinations(grid, 2)),
                    key=lambda item: item[0],
                )
                t1, t2 = seed[1]
                for _ in range(6):
                    t1, _v = _golden_min(lambda t: problem.solve((t, t2))[0], margin, t2 - margin)
                    t2, _v = _golden_min(lambda t: problem.solve((t1, t))[0], t1 + margin, horizon - margin)
                times = (t1, t2)
                value, u = problem.solve(times)

            segments = problem.cluster_curves(times, u)
            if not _pattern_valid(segments, scale):
                continue
            if best is None or value < best[0] - 1e-12:
                best = (value, problem, times, u)

    if best is None:
        raise NumericalError("no valid cluster pattern found")
    value, problem, times, u = best
    segments = problem.cluster_curves(times, u)

    grid = np.linspace(theta0, theta1, grid_m + 1)
    states = np.empty((grid_m + 1, A.count))
    for idx, theta in enumerate(grid):
        pos = _segment_positions(segments, float(theta - theta0))
        for members, value_at in pos.items():
            for i in members:
                states[idx, i] = value_at
    pattern = ShockPattern(
        partitions=tuple(problem.seq),
        times=tuple(theta0 + t for t in times),
    )
    return OracleResult(
        trajectory=Trajectory.from_1d("theta", grid, states),
        value=float(value),
        pattern=pattern,
    )
