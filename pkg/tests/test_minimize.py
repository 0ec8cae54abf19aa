import math

import numpy as np
import pytest

from magrav import (
    ActionSpec,
    CapabilityError,
    Lattice,
    ShockPattern,
    SolveOptions,
    Trajectory,
    continuation_sweep,
    eval_action,
    grad_discretized_action,
    lambda_prime_equivalent,
    minimize_fixed_eps,
    oracle_minimizer_1d,
    straight_line_trajectory,
)
from magrav.clouds import Partition


def lat1(*vals):
    return Lattice(np.array(vals, dtype=float))


T_WIN = (1.0, math.exp(2.0))


def test_minimize_rejects_nonsmooth_kind():
    A = lat1(0.0, 1.0)
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=[0.0, 1.0], q=[0.0, 1.0], window=(0.0, 1.0))
    with pytest.raises(ValueError, match="smooth"):
        minimize_fixed_eps(spec, straight_line_trajectory(
            ActionSpec(kind="L_eps", lattice=A, p=[0.0, 1.0], q=[0.0, 1.0], window=T_WIN, eps=1.0), 8))


def test_minimize_requires_matching_endpoints():
    A = lat1(0.0, 1.0)
    spec = ActionSpec(kind="L_eps", lattice=A, p=[0.0, 1.0], q=[0.0, 1.0], window=T_WIN, eps=1.0)
    bad = ActionSpec(kind="L_eps", lattice=A, p=[5.0, 6.0], q=[5.0, 6.0], window=T_WIN, eps=1.0)
    init = straight_line_trajectory(bad, 16)
    with pytest.raises(ValueError, match="endpoint"):
        minimize_fixed_eps(spec, init)


def test_single_particle_bvp_closed_form():
    # theta-form Euler-Lagrange: z'' = z - a, cosh/sinh two-point solution
    A = lat1(2.0)
    spec = ActionSpec(kind="L_eps", lattice=A, p=[0.5], q=[1.2], window=T_WIN, eps=1.0)
    report = minimize_fixed_eps(spec, straight_line_trajectory(spec, 512))
    assert report.converged
    theta = np.log(report.final_traj.grid) / 2.0
    w0, w1 = 0.5 - 2.0, 1.2 - 2.0
    c2 = (w1 - w0 * math.cosh(1.0)) / math.sinh(1.0)
    exact = 2.0 + w0 * np.cosh(theta) + c2 * np.sinh(theta)
    assert np.max(np.abs(report.final_traj.states[:, 0, 0] - exact)) <= 1e-5


def test_history_non_increasing_and_endpoints_clamped():
    A = lat1(-1.0, 1.0)
    spec = ActionSpec(kind="L_eps", lattice=A, p=[-0.3, 0.3], q=[-0.3, 0.3], window=T_WIN, eps=0.5)
    init = straight_line_trajectory(spec, 64)
    report = minimize_fixed_eps(spec, init, SolveOptions(grad_tol=1e-6))
    assert np.all(np.diff(report.history) <= 0)
    assert np.array_equal(report.final_traj.states[0], init.states[0])
    assert np.array_equal(report.final_traj.states[-1], init.states[-1])


def test_minimizer_is_a_fixed_point():
    A = lat1(-1.0, 1.0)
    spec = ActionSpec(kind="L_eps", lattice=A, p=[-0.3, 0.3], q=[-0.3, 0.3], window=T_WIN, eps=0.5)
    first = minimize_fixed_eps(spec, straight_line_trajectory(spec, 256))
    second = minimize_fixed_eps(spec, first.final_traj)
    assert second.value <= first.value + 1e-12
    assert np.max(np.abs(second.final_traj.states - first.final_traj.states)) <= 1e-6


def test_gradient_vanishes_at_minimizer():
    A = lat1(-1.0, 1.0)
    spec = ActionSpec(kind="L_eps", lattice=A, p=[-0.3, 0.3], q=[-0.3, 0.3], window=T_WIN, eps=0.5)
    report = minimize_fixed_eps(spec, straight_line_trajectory(spec, 48))
    grad = grad_discretized_action(spec, report.final_traj)
    assert np.max(np.abs(grad)) <= 1e-7


def test_k_eps_lane_single_particle_closed_form():
    # K_eps with one particle: (1/2) int (Y'^2 e^{2 theta} + a^2); EL gives
    # Y(theta) = c1 + c2 e^{-2 theta}
    A = lat1(0.8)
    spec = ActionSpec(kind="K_eps", lattice=A, p=[0.5], q=[1.1], window=(0.0, 1.0), eps=0.7)
    report = minimize_fixed_eps(spec, straight_line_trajectory(spec, 256))
    theta = report.final_traj.grid
    r = 0.5 * math.exp(-0.0)
    s = 1.1 * math.exp(-1.0)
    e0, e1 = 1.0, math.exp(-2.0)
    c2 = (r - s) / (e0 - e1)
    c1 = r - c2 * e0
    exact = c1 + c2 * np.exp(-2.0 * theta)
    assert np.max(np.abs(report.final_traj.states[:, 0, 0] - exact)) <= 1e-4


def test_continuation_single_step_reduces_to_fixed_eps():
    A = lat1(-1.0, 1.0)
    spec = ActionSpec(kind="L_eps", lattice=A, p=[-0.3, 0.3], q=[-0.3, 0.3], window=T_WIN, eps=0.5)
    init = straight_line_trajectory(spec, 64)
    sweep = continuation_sweep(spec, [0.5], init)
    single = minimize_fixed_eps(spec, init)
    assert len(sweep.reports) == 1
    assert sweep.reports[0].value == pytest.approx(single.value, rel=1e-12)


def test_continuation_validates_schedule():
    A = lat1(-1.0, 1.0)
    spec = ActionSpec(kind="L_eps", lattice=A, p=[-0.3, 0.3], q=[-0.3, 0.3], window=T_WIN, eps=0.5)
    init = straight_line_trajectory(spec, 16)
    with pytest.raises(ValueError):
        continuation_sweep(spec, [0.5, 0.5], init)
    with pytest.raises(ValueError):
        continuation_sweep(spec, [0.5, -0.1], init)


def test_continuation_gap_shrinks_toward_oracle():
    A = lat1(-1.0, 1.0)
    p = np.array([-0.3, 0.3])
    spec = ActionSpec(kind="L_eps", lattice=A, p=p, q=p, window=T_WIN, eps=1.0)
    init = straight_line_trajectory(spec, 128)
    sweep = continuation_sweep(spec, [2.0**-k for k in range(6)], init,
                               SolveOptions(grad_tol=1e-6))
    oracle = oracle_minimizer_1d(A, p, p, (0.0, 1.0), grid_m=128)
    oracle_min_l = oracle.value / 2.0  # P = Q: LambdaPrime = 2 L
    gaps = [abs(r.value - oracle_min_l) for r in sweep.reports]
    assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 0.02 * abs(oracle_min_l)
    # the limit functional decreases toward the oracle value as well
    assert abs(sweep.limit_values[-1] - oracle_min_l) <= 0.02 * abs(oracle_min_l)


# -- oracle -------------------------------------------------------------------

def test_oracle_rejects_large_n():
    A = lat1(0.0, 1.0, 2.0, 3.0)
    with pytest.raises(CapabilityError):
        oracle_minimizer_1d(A, [0, 1, 2, 3], [0, 1, 2, 3], (0.0, 1.0))


def test_oracle_fully_degenerate_stays_stuck():
    A = lat1(-1.0, 1.0)
    result = oracle_minimizer_1d(A, [0.15, 0.15], [0.15, 0.15], (0.0, 1.0))
    states = result.trajectory.states1d()
    assert np.max(states[:, 1] - states[:, 0]) <= 1e-9
    assert len(result.pattern.partitions) == 1
    assert result.pattern.partitions[0] == Partition.single_class(2)


def test_oracle_symmetric_data_gives_symmetric_trajectory():
    A = lat1(-1.0, 1.0)
    result = oracle_minimizer_1d(A, [-0.2, 0.2], [-0.2, 0.2], (0.0, 1.0))
    states = result.trajectory.states1d()
    assert np.max(np.abs(states[:, 0] + states[:, 1])) <= 1e-9


def test_oracle_stuck_interval_beats_never_stuck_when_close():
    # closed forms: never-stuck costs 4 (1-p)^2 tanh(T/2); the stick-interval
    # pattern costs 4 (1 - (1-p)^2) at its optimal transition times
    A = lat1(-1.0, 1.0)
    p = 0.05
    result = oracle_minimizer_1d(A, [-p, p], [-p, p], (0.0, 1.0))
    never_stuck = 4.0 * (1 - p) ** 2 * math.tanh(0.5)
    stuck = 4.0 * (1.0 - (1 - p) ** 2)
    assert result.value == pytest.approx(stuck, abs=1e-8)
    assert result.value < never_stuck - 0.5
    assert len(result.pattern.partitions) == 3
    assert result.pattern.partitions[1] == Partition.single_class(2)


def test_oracle_no_stick_for_far_endpoints():
    A = lat1(-1.0, 1.0)
    result = oracle_minimizer_1d(A, [-0.3, 0.3], [-0.3, 0.3], (0.0, 1.0))
    assert result.value == pytest.approx(4.0 * 0.49 * math.tanh(0.5), abs=1e-9)
    assert len(result.pattern.partitions) == 1


def test_oracle_transition_times_match_closed_form():
    A = lat1(-1.0, 1.0)
    p = 0.1
    result = oracle_minimizer_1d(A, [-p, p], [-p, p], (0.0, 1.0))
    c = 1.0 - p
    tau = math.acosh((1 + c * c) / (2 * c))
    assert result.pattern.times[0] == pytest.approx(tau, abs=1e-7)
    assert result.pattern.times[1] == pytest.approx(1.0 - tau, abs=1e-7)


def test_oracle_matches_lambda_prime_quadrature():
    A = lat1(-1.0, 1.0)
    result = oracle_minimizer_1d(A, [-0.1, 0.1], [-0.1, 0.1], (0.0, 1.0), grid_m=2048)
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=[-0.1, 0.1], q=[-0.1, 0.1], window=(0.0, 1.0))
    assert float(eval_action(spec, result.trajectory)) == pytest.approx(result.value, abs=5e-3)


def test_oracle_grid_refinement_stability():
    # quadrature of the sampled trajectory stays within O(1/M) of the closed
    # form; the constant is set by the potential jump at the shocks, and the
    # error is not monotone in M (the kink lands at varying grid offsets)
    A = lat1(-1.0, 1.0)
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=[-0.1, 0.1], q=[-0.1, 0.1],
                      window=(0.0, 1.0))
    vals = {}
    for m in (256, 512, 1024, 2048):
        result = oracle_minimizer_1d(A, [-0.1, 0.1], [-0.1, 0.1], (0.0, 1.0), grid_m=m)
        vals[m] = float(eval_action(spec, result.trajectory))
        assert abs(vals[m] - result.value) <= 2.0 / m
    for m in (256, 512, 1024):
        assert abs(vals[m] - vals[2 * m]) <= 4.0 / m


def test_oracle_three_particles_triple_stick():
    A = lat1(0.0, 1.0, 2.0)
    p = np.array([0.9, 1.0, 1.1])
    result = oracle_minimizer_1d(A, p, p, (0.0, 1.0))
    assert len(result.pattern.partitions) == 3
    assert result.pattern.partitions[1] == Partition.single_class(3)
    states = result.trajectory.states1d()
    spread = states[:, 2] - states[:, 0]
    assert spread.min() <= 1e-12


def test_oracle_single_particle_is_plain_bvp():
    A = lat1(1.5)
    result = oracle_minimizer_1d(A, [0.3], [0.9], (0.0, 2.0), grid_m=64)
    theta = result.trajectory.grid
    w0, w1 = 0.3 - 1.5, 0.9 - 1.5
    c2 = (w1 - w0 * math.cosh(2.0)) / math.sinh(2.0)
    exact = 1.5 + w0 * np.cosh(theta) + c2 * np.sinh(theta)
    assert np.max(np.abs(result.trajectory.states1d()[:, 0] - exact)) <= 1e-10


def test_shock_pattern_validation():
    with pytest.raises(ValueError):
        ShockPattern(partitions=(Partition.singletons(2),), times=(0.3,))
    with pytest.raises(ValueError):
        ShockPattern(
            partitions=(Partition.singletons(2), Partition.single_class(2), Partition.singletons(2)),
            times=(0.8, 0.2),
        )
