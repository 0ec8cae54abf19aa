"""Experiment orchestration: scenario -> deterministic artifact bundle on disk."""

from __future__ import annotations

import math

import numpy as np

from . import __version__
from .actions import ActionSpec, change_gauge, lambda_prime_equivalent
from .analysis import check_velocity_jump, detect_shocks, energy_profile, momentum_residual
from .heatwave import NoiseSpec, integrate_companion, sample_sde
from .minimize import continuation_sweep, minimize_fixed_eps, oracle_minimizer_1d, straight_line_trajectory
from .outputs import Bundle, events_jsonl, summary_csv, trajectory_csv, write_outputs
from .scenario import Scenario

__all__ = ["run_experiment", "build_bundle"]


def _window_for_kind(scenario: Scenario) -> tuple[float, float]:
    """ActionSpec windows: t for the L lane, theta for the K lane."""
    lo, hi = scenario.window
    if scenario.kind == "L_eps":
        if scenario.gauge == "theta":
            return math.exp(2.0 * lo), math.exp(2.0 * hi)
        return lo, hi
    if scenario.gauge == "t":
        return math.log(lo) / 2.0, math.log(hi) / 2.0
    return lo, hi


def _theta_window(scenario: Scenario) -> tuple[float, float]:
    lo, hi = scenario.window
    if scenario.gauge == "t":
        return math.log(lo) / 2.0, math.log(hi) / 2.0
    return lo, hi


def _base_spec(scenario: Scenario) -> ActionSpec:
    return ActionSpec(
        kind=scenario.kind,
        lattice=scenario.lattice_obj(),
        p=np.asarray(scenario.p, dtype=float),
        q=np.asarray(scenario.q, dtype=float),
        window=_window_for_kind(scenario),
        eps=scenario.eps if scenario.eps is not None else scenario.eps_schedule[0],
        weight=scenario.weight,
        cluster_tol=scenario.cluster_tol,
    )


def _report_dict(report) -> dict:
    return {
        "value": report.value,
        "grad_norm": report.grad_norm,
        "iterations": report.iterations,
        "converged": report.converged,
    }


def _run_minimize(scenario: Scenario, bundle: Bundle) -> None:
    spec = _base_spec(scenario)
    init = straight_line_trajectory(spec, scenario.grid_m)
    report = minimize_fixed_eps(spec, init)
    bundle.add("trajectory.csv", trajectory_csv(report.final_traj))
    bundle.manifest["report"] = _report_dict(report)


def _run_gamma_sweep(scenario: Scenario, bundle: Bundle) -> None:
    spec = _base_spec(scenario)
    init = straight_line_trajectory(spec, scenario.grid_m)
    sweep = continuation_sweep(spec, scenario.eps_schedule, init)

    lattice = scenario.lattice_obj()
    theta_win = _theta_window(scenario)
    oracle = None
    if lattice.count <= 3 and lattice.strictly_ordered:
        oracle = oracle_minimizer_1d(lattice, np.asarray(scenario.p), np.asarray(scenario.q),
                                     theta_win, pattern_budget=scenario.pattern_budget,
                                     grid_m=scenario.grid_m)
        bundle.add("oracle.csv", trajectory_csv(oracle.trajectory))
        bundle.manifest["oracle_lambda_prime"] = oracle.value

    rows = []
    for eps, report, limit_value in zip(scenario.eps_schedule, sweep.reports, sweep.limit_values):
        sup_dist = None
        if oracle is not None:
            in_theta = report.final_traj
            if in_theta.gauge == "t":
                in_theta = change_gauge(in_theta, "theta", variant="Z-plain")
            sup_dist = float(np.max(np.abs(in_theta.states - oracle.trajectory.states)))
        rows.append((eps, report.value, limit_value, sup_dist))
    bundle.add("summary.csv", summary_csv(rows))

    final = sweep.reports[-1].final_traj
    final_theta = final if final.gauge == "theta" else change_gauge(final, "theta", variant="Z-plain")
    bundle.add("trajectory.csv", trajectory_csv(final_theta))
    p_ord = np.sort(np.asarray(scenario.p))
    q_ord = np.sort(np.asarray(scenario.q))
    bundle.manifest["report"] = _report_dict(sweep.reports[-1])
    bundle.manifest["limit_kind"] = sweep.limit_kind
    bundle.manifest["final_lambda_prime_equivalent"] = lambda_prime_equivalent(
        sweep.reports[-1].value, p_ord, q_ord, lattice,
    )


def _run_sticky(scenario: Scenario, bundle: Bundle) -> None:
    theta_win = _theta_window(scenario)
    traj, events = _sticky_run(scenario, theta_win)
    bundle.add("trajectory.csv", trajectory_csv(traj))
    bundle.add("events.jsonl", events_jsonl(events))
    bundle.manifest["event_count"] = len(events)


def _sticky_run(scenario: Scenario, theta_win):
    from .sticky import simulate_sticky

    return simulate_sticky(
        np.asarray(scenario.p, dtype=float),
        np.asarray(scenario.v0, dtype=float),
        theta_win,
        scenario.lattice_obj(),
        grid_m=scenario.grid_m,
    )


def _run_heatwave(scenario: Scenario, bundle: Bundle) -> None:
    lattice = scenario.lattice_obj()
    t0, t1 = scenario.window
    x0 = np.asarray(scenario.p, dtype=float)
    companion = integrate_companion(x0, t0, t1, scenario.steps, scenario.eps, lattice)
    bundle.add("companion.csv", trajectory_csv(companion))
    if scenario.noise.eta > 0:
        noise = NoiseSpec(eta=scenario.noise.eta, alpha=scenario.noise.alpha,
                          seed=scenario.seed, steps=scenario.noise.steps)
        path = sample_sde(x0, t0, t1, noise, scenario.eps, lattice)
        bundle.add("sde.csv", trajectory_csv(path))


def _run_check_invariants(scenario: Scenario, bundle: Bundle) -> None:
    lattice = scenario.lattice_obj()
    theta_win = _theta_window(scenario)
    oracle = oracle_minimizer_1d(lattice, np.asarray(scenario.p), np.asarray(scenario.q),
                                 theta_win, pattern_budget=scenario.pattern_budget,
                                 grid_m=scenario.grid_m)
    bundle.add("oracle.csv", trajectory_csv(oracle.trajectory))
    profile = energy_profile(oracle.trajectory, lattice, cluster_tol=scenario.cluster_tol)
    shocks = detect_shocks(oracle.trajectory, cluster_tol=scenario.cluster_tol)
    checks = []
    for shock in shocks:
        if not shock.isolated:
            continue
        result = check_velocity_jump(oracle.trajectory, shock, lattice, tol=scenario.jump_tol)
        checks.append({
            "time": shock.time,
            "location": shock.location,
            "members": [int(i) for i in shock.members],
            "jump": result.jump,
            "alpha": result.alpha,
            "passed": result.passed,
            "conclusive": result.conclusive,
        })
    report = {
        "oracle_lambda_prime": oracle.value,
        "energy_max_deviation": profile.max_deviation,
        "oracle_momentum_residual": momentum_residual(oracle.trajectory, lattice),
        "shock_count": len(shocks),
        "jump_checks": checks,
    }
    if scenario.v0 is not None:
        traj, events = _sticky_run(scenario, theta_win)
        bundle.add("sticky.csv", trajectory_csv(traj))
        bundle.add("events.jsonl", events_jsonl(events))
        report["sticky_momentum_residual"] = momentum_residual(traj, lattice)
        report["sticky_event_count"] = len(events)
    bundle.manifest["invariants"] = report


_RUNNERS = {
    "minimize": _run_minimize,
    "gamma-sweep": _run_gamma_sweep,
    "sticky": _run_sticky,
    "heatwave": _run_heatwave,
    "check-invariants": _run_check_invariants,
}


def build_bundle(scenario: Scenario, overrides: dict | None = None) -> Bundle:
    bundle = Bundle(manifest={
        "package": f"magrav-{__version__}",
        "scenario": scenario.to_dict(),
        "overrides": dict(overrides or {}),
    })
    _RUNNERS[scenario.experiment](scenario, bundle)
    return bundle


def run_experiment(scenario: Scenario, out_dir, overrides: dict | None = None) -> Bundle:
    """Run one experiment and write its artifact bundle; fully deterministic."""
    bundle = build_bundle(scenario, overrides)
    write_outputs(bundle, out_dir)
    return bundle
