import itertools
import math

import numpy as np
import pytest

from magrav import (
    ActionSpec,
    GaugeError,
    Lattice,
    Trajectory,
    change_gauge,
    eval_action,
    eval_g,
    extended_gradient,
    f_max,
    grad_discretized_action,
    lambda_prime_equivalent,
    permute,
)
from magrav.actions import ENDPOINT_REASON
from magrav.potential import hess_h_apply_scaled, softmax_vertex_average


def lat1(*vals):
    return Lattice(np.array(vals, dtype=float))


def theta_traj(states2d, window=(0.0, 1.0)):
    states2d = np.asarray(states2d, dtype=float)
    grid = np.linspace(window[0], window[1], states2d.shape[0])
    return Trajectory.from_1d("theta", grid, states2d)


def smooth_random_traj(rng, n, m, window=(0.0, 1.0), amp=0.5, endpoints=None, max_freq=3):
    grid = np.linspace(window[0], window[1], m + 1)
    tt = (grid - grid[0]) / (grid[-1] - grid[0])
    if endpoints is None:
        p = rng.standard_normal(n)
        q = rng.standard_normal(n)
    else:
        p, q = endpoints
    base = np.outer(1 - tt, p) + np.outer(tt, q)
    for _ in range(3):
        freq = rng.integers(1, max_freq + 1)
        base += amp * np.outer(np.sin(math.pi * freq * tt), rng.standard_normal(n))
    return Trajectory.from_1d("theta", grid, base)


# -- basic values --------------------------------------------------------------

def test_stationary_single_particle_has_zero_l_eps():
    A = lat1(0.7)
    grid = np.linspace(1.0, 3.0, 65)
    traj = Trajectory.from_1d("t", grid, np.full((65, 1), 0.7))
    spec = ActionSpec(kind="L_eps", lattice=A, p=[0.7], q=[0.7], window=(1.0, 3.0), eps=0.5)
    assert float(eval_action(spec, traj)) == pytest.approx(0.0, abs=1e-14)


def test_fully_clustered_at_mean_has_zero_lambda_prime():
    A = lat1(0.0, 1.0, 2.0)
    traj = theta_traj(np.full((33, 3), 1.0))
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=[1.0, 1.0, 1.0], q=[1.0, 1.0, 1.0],
                      window=(0.0, 1.0))
    assert float(eval_action(spec, traj)) == pytest.approx(0.0, abs=1e-14)


def test_lambda_prime_double_prime_offset(rng):
    A = lat1(0.0, 1.0, 2.0)
    traj = smooth_random_traj(rng, 3, 64)
    traj = Trajectory.from_1d("theta", traj.grid, np.sort(traj.states1d(), axis=1))
    p, q = traj.states1d()[0], traj.states1d()[-1]
    spec_p = ActionSpec(kind="LambdaPrime", lattice=A, p=p, q=q, window=(0.0, 1.0))
    spec_d = ActionSpec(kind="LambdaDoublePrime", lattice=A, p=p, q=q, window=(0.0, 1.0))
    lhs = float(eval_action(spec_p, traj))
    rhs = float(eval_action(spec_d, traj)) - 1.0 * A.norm**2
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_lambda_prime_below_lambda_plus(rng):
    A = lat1(0.0, 1.0, 2.0)
    p = np.array([0.0, 0.6, 1.7])
    q = np.array([0.2, 0.9, 2.2])
    spread = smooth_random_traj(rng, 3, 64, amp=0.1, endpoints=(p, q))
    spread = Trajectory.from_1d("theta", spread.grid, np.sort(spread.states1d(), axis=1))
    spec_p = ActionSpec(kind="LambdaPrime", lattice=A, p=p, q=q, window=(0.0, 1.0))
    spec_plus = ActionSpec(kind="LambdaPlus", lattice=A, p=p, q=q, window=(0.0, 1.0))
    v_prime = float(eval_action(spec_p, spread))
    v_plus = float(eval_action(spec_plus, spread))
    # no clustered state: the two potentials agree pointwise
    assert v_prime == pytest.approx(v_plus, abs=1e-10)

    clustered = np.full((65, 3), 1.0)  # exactly tied interior: f is nondifferentiable there
    clustered[0] = p
    clustered[-1] = q
    traj_c = Trajectory.from_1d("theta", spread.grid, clustered)
    assert float(eval_action(spec_p, traj_c)) < float(eval_action(spec_plus, traj_c)) - 1e-3


def test_eval_action_permutation_invariance(rng):
    A = Lattice(rng.standard_normal((3, 2)))
    grid = np.linspace(0.0, 1.0, 33)
    states = rng.standard_normal((33, 3, 2)) * 0.3 + np.linspace(0, 1, 33)[:, None, None]
    traj = Trajectory(gauge="theta", grid=grid, states=states)
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=states[0], q=states[-1], window=(0.0, 1.0))
    base = float(eval_action(spec, traj))
    sigma = [2, 0, 1]
    spec_s = ActionSpec(kind="LambdaPrime", lattice=A, p=permute(states[0], sigma),
                        q=permute(states[-1], sigma), window=(0.0, 1.0))
    traj_s = Trajectory(gauge="theta", grid=grid, states=states[:, sigma, :])
    assert float(eval_action(spec_s, traj_s)) == pytest.approx(base, rel=1e-12)


def test_quadrature_convergence_order(rng):
    A = lat1(-1.0, 1.0)
    p = np.array([-0.4, 0.1])
    q = np.array([-0.2, 0.5])
    vals = []
    for m in (64, 128, 256):
        grid = np.linspace(0.0, 1.0, m + 1)
        tt = grid
        states = np.stack([
            -0.4 + 0.2 * tt + 0.3 * np.sin(math.pi * tt),
            0.1 + 0.4 * tt - 0.2 * np.sin(2 * math.pi * tt),
        ], axis=1)
        spec = ActionSpec(kind="LambdaPrime", lattice=A, p=p, q=q, window=(0.0, 1.0))
        vals.append(float(eval_action(spec, Trajectory.from_1d("theta", grid, states))))
    rate = math.log2(abs(vals[0] - vals[1]) / abs(vals[1] - vals[2]))
    assert rate >= 0.9


# -- endpoint handling -----------------------------------------------------------

def test_endpoint_violation_gives_sentinel():
    A = lat1(0.0, 1.0)
    traj = theta_traj(np.linspace([0.0, 1.0], [0.3, 1.3], 17))
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=[5.0, 6.0], q=[0.3, 1.3], window=(0.0, 1.0))
    val = eval_action(spec, traj)
    assert math.isinf(val)
    assert val.reason == ENDPOINT_REASON


def test_endpoints_up_to_permutation():
    A = lat1(0.0, 1.0)
    states = np.linspace([0.0, 1.0], [1.0, 0.0], 17)
    traj = theta_traj(states)
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=[1.0, 0.0], q=[1.0, 0.0], window=(0.0, 1.0))
    assert math.isfinite(eval_action(spec, traj))
    spec_fixed = ActionSpec(kind="LambdaPrime", lattice=A, p=[1.0, 0.0], q=[1.0, 0.0],
                            window=(0.0, 1.0), endpoint_mode="fixed")
    assert math.isinf(eval_action(spec_fixed, traj))


def test_gauge_mismatch_raises():
    A = lat1(0.0, 1.0)
    traj = theta_traj(np.linspace([0.0, 1.0], [0.3, 1.3], 9))
    spec = ActionSpec(kind="L", lattice=A, p=[0.0, 1.0], q=[0.3, 1.3], window=(1.0, 2.0))
    with pytest.raises(GaugeError):
        eval_action(spec, traj)


# -- change of gauge ---------------------------------------------------------------

def test_change_gauge_endpoint_map():
    A = lat1(0.5)
    grid = np.linspace(2.0, 6.0, 33)
    traj = Trajectory.from_1d("t", grid, np.full((33, 1), 0.5))
    out = change_gauge(traj, "theta")
    assert out.grid[0] == pytest.approx(math.log(2.0) / 2.0)
    assert out.grid[-1] == pytest.approx(math.log(6.0) / 2.0)


def test_change_gauge_round_trip():
    grid = np.linspace(1.0, math.e, 1025)
    states = (0.4 + 0.01 * grid)[:, None, None]
    traj = Trajectory(gauge="t", grid=grid, states=states)
    for variant in ("Z-plain", "Y-scaling"):
        there = change_gauge(traj, "theta", variant=variant)
        back = change_gauge(there, "t", variant=variant)
        assert np.max(np.abs(back.states - traj.states)) <= 1e-8


def test_change_gauge_action_correspondence(rng):
    # L(X) = Lambda(Z) with beta(t) = t, to quadrature tolerance
    A = lat1(-1.0, 1.0)
    for _ in range(5):
        traj_theta = smooth_random_traj(rng, 2, 1024, amp=0.15, max_freq=2)
        states = np.sort(traj_theta.states1d(), axis=1)
        traj_theta = Trajectory.from_1d("theta", traj_theta.grid, states)
        p, q = states[0], states[-1]
        traj_t = change_gauge(traj_theta, "t", variant="Z-plain")
        spec_L = ActionSpec(kind="L", lattice=A, p=p, q=q, window=(1.0, math.exp(2.0)))
        spec_Lam = ActionSpec(kind="Lambda", lattice=A, p=p, q=q, window=(0.0, 1.0))
        l_val = float(eval_action(spec_L, traj_t))
        lam_val = float(eval_action(spec_Lam, traj_theta))
        assert l_val == pytest.approx(lam_val, rel=2e-3, abs=2e-4)


def test_lambda_prime_equivalent_identity(rng):
    A = lat1(-1.0, 1.0)
    traj = smooth_random_traj(rng, 2, 1024, amp=0.2)
    states = np.sort(traj.states1d(), axis=1)
    traj = Trajectory.from_1d("theta", traj.grid, states)
    p, q = states[0], states[-1]
    spec_lam = ActionSpec(kind="Lambda", lattice=A, p=p, q=q, window=(0.0, 1.0))
    spec_lp = ActionSpec(kind="LambdaPrime", lattice=A, p=p, q=q, window=(0.0, 1.0))
    lam = float(eval_action(spec_lam, traj))
    lp = float(eval_action(spec_lp, traj))
    assert lambda_prime_equivalent(lam, p, q, A) == pytest.approx(lp, rel=1e-3, abs=5e-4)


# -- the g family ---------------------------------------------------------------

def test_g_eps_zero_at_origin():
    A = lat1(0.0, 1.0, 2.0)
    assert eval_g(0.5, 0.3, np.zeros((3, 1)), A, "g_eps") == pytest.approx(0.0, abs=1e-12)


def test_g_eps_converges_to_g(rng):
    A = lat1(0.0, 1.0)
    nfact = math.log(math.factorial(2))
    for _ in range(50):
        theta = float(rng.uniform(-0.5, 1.0))
        Y = rng.standard_normal((2, 1))
        g_lim = eval_g(1.0, theta, Y, A, "g")
        prev_gap = None
        for eps in (1.0, 0.5, 0.25, 0.125):
            gap = g_lim - eval_g(eps, theta, Y, A, "g_eps")
            assert -1e-12 <= gap <= eps * nfact + 1e-12
            if prev_gap is not None:
                assert gap <= prev_gap + 1e-12
            prev_gap = gap


def test_g_homogeneity_formulations_agree(rng):
    A = lat1(0.0, 1.0, 2.0)
    for _ in range(20):
        theta = float(rng.uniform(-1, 1))
        Y = rng.standard_normal((3, 1))
        direct = eval_g(1.0, theta, Y, A, "g")
        assert direct == pytest.approx(f_max(Y, A) / math.exp(theta), rel=1e-12)


def test_grad_g_eps_bound(rng):
    A = lat1(0.0, 1.0, 2.0)
    for _ in range(500):
        theta = float(rng.uniform(-1.0, 1.5))
        Y = rng.standard_normal((3, 1)) * rng.uniform(0.1, 30)
        g1 = eval_g(float(rng.uniform(0.05, 2.0)), theta, Y, A, "grad_g_eps")
        assert np.linalg.norm(g1) <= A.norm * math.exp(-theta) + 1e-12


def test_dtheta_grad_g_eps_bounded(rng):
    # |d/dtheta grad g_eps| = e^-theta |grad h(u) + D2h(u) u| stays bounded
    A = lat1(0.0, 1.0, 2.0)
    worst = 0.0
    for _ in range(500):
        theta = float(rng.uniform(0.0, 1.0))
        eps = float(rng.uniform(0.05, 1.0))
        Y = rng.standard_normal((3, 1)) * rng.uniform(0.1, 1e4)
        u = Y / (eps * math.exp(theta))
        term = softmax_vertex_average(u, A, 1.0) + hess_h_apply_scaled(u, u, A, 1.0)
        worst = max(worst, math.exp(-theta) * float(np.linalg.norm(term)))
    assert np.isfinite(worst) and worst < 100.0


def test_ext_grad_g_scaling():
    A = lat1(0.0, 1.0)
    Y = np.array([[0.4], [0.4]])
    out = eval_g(1.0, 0.7, Y, A, "ext_grad_g")
    assert np.allclose(out, extended_gradient(Y, A) / math.exp(0.7))


# -- gradients of the discretized actions -------------------------------------------

def test_grad_unsupported_for_nonsmooth():
    A = lat1(0.0, 1.0)
    traj = theta_traj(np.linspace([0.0, 1.0], [0.1, 1.1], 9))
    spec = ActionSpec(kind="LambdaPrime", lattice=A, p=[0.0, 1.0], q=[0.1, 1.1], window=(0.0, 1.0))
    with pytest.raises(ValueError, match="unsupported"):
        grad_discretized_action(spec, traj)


def test_grad_single_particle_hand_formula():
    # N = 1: the L_eps quadrature is sum_k w_k (V_k - (Xm_k - a)/(2 tm_k))^2 dt;
    # the node derivative can be expanded by hand
    A = lat1(1.3)
    grid = np.linspace(1.0, 2.0, 9)
    rng = np.random.default_rng(5)
    states = (0.5 + 0.3 * np.sin(grid))[:, None, None]
    traj = Trajectory(gauge="t", grid=grid, states=states)
    spec = ActionSpec(kind="L_eps", lattice=A, p=states[0], q=states[-1], window=(1.0, 2.0), eps=1.0)
    g = grad_discretized_action(spec, traj)
    dt = grid[1] - grid[0]
    j = 4
    x = states[:, 0, 0]
    total = 0.0
    for k in (j - 1, j):
        tm = 0.5 * (grid[k] + grid[k + 1])
        xm = 0.5 * (x[k] + x[k + 1])
        v = (x[k + 1] - x[k]) / dt
        resid = v - (xm - 1.3) / (2 * tm)
        dv = (1.0 / dt) if k == j - 1 else (-1.0 / dt)
        dresid = dv - 0.5 / (2 * tm)
        total += 2 * tm * resid * dresid * dt
    assert g[j, 0, 0] == pytest.approx(total, rel=1e-12)


def test_grads_match_finite_differences(rng):
    A = Lattice(np.array([[-1.0], [1.0]]))
    for kind, gauge, window in (("L_eps", "t", (1.0, 3.0)), ("K_eps", "theta", (0.0, 1.0))):
        grid = np.linspace(window[0], window[1], 17)
        states = rng.standard_normal((17, 2, 1)) * 0.4
        traj = Trajectory(gauge=gauge, grid=grid, states=states)
        spec = ActionSpec(kind=kind, lattice=A, p=states[0], q=states[-1], window=window,
                          eps=0.3, endpoint_mode="fixed")
        g = grad_discretized_action(spec, traj)
        h = 1e-6
        worst = 0.0
        for k in (1, 5, 11, 15):
            for i in (0, 1):
                sp = states.copy()
                sp[k, i, 0] += h
                sm = states.copy()
                sm[k, i, 0] -= h
                vp = float(eval_action(spec, Trajectory(gauge=gauge, grid=grid, states=sp)))
                vm = float(eval_action(spec, Trajectory(gauge=gauge, grid=grid, states=sm)))
                fd = (vp - vm) / (2 * h)
                worst = max(worst, abs(fd - g[k, i, 0]) / (1 + abs(fd)))
        assert worst < 1e-5
