"""Scenario files: strict JSON key-value descriptions of runnable experiments.

Unknown keys are fatal (silent typos corrupt experiments), defaults are
filled explicitly so the run manifest can echo every resolved value, and
parse errors surface the line/column from the JSON decoder. The CLI surface
is one-dimensional; general-d functionality stays library-level.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .clouds import DEFAULT_CLUSTER_TOL, Lattice
from .errors import ScenarioError

__all__ = ["Scenario", "NoiseConfig", "load_scenario", "save_scenario"]

EXPERIMENTS = ("minimize", "gamma-sweep", "sticky", "heatwave", "check-invariants")

_DEFAULT_SCHEDULE = tuple(2.0 ** (-k) for k in range(8))


@dataclass(frozen=True)
class NoiseConfig:
    eta: float = 0.0
    alpha: str = "inv_sqrt_t"
    steps: int = 512


@dataclass(frozen=True)
class Scenario:
    name: str
    experiment: str
    lattice: tuple[float, ...]
    seed: int = 0
    p: tuple[float, ...] | None = None
    q: tuple[float, ...] | None = None
    v0: tuple[float, ...] | None = None
    gauge: str = "theta"
    window: tuple[float, float] = (0.0, 1.0)
    kind: str = "L_eps"
    eps: float | None = None
    eps_schedule: tuple[float, ...] = _DEFAULT_SCHEDULE
    grid_m: int = 512
    steps: int = 512
    cluster_tol: float = DEFAULT_CLUSTER_TOL
    jump_tol: float = 0.01
    pattern_budget: int = 2
    weight: str = "t"
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def lattice_obj(self) -> Lattice:
        return Lattice(np.asarray(self.lattice, dtype=float))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lattice"] = list(self.lattice)
        for key in ("p", "q", "v0"):
            if out[key] is not None:
                out[key] = list(out[key])
        out["window"] = list(self.window)
        out["eps_schedule"] = list(self.eps_schedule)
        return out


_KNOWN_KEYS = {
    "name", "experiment", "lattice", "seed", "p", "q", "v0", "gauge", "window",
    "kind", "eps", "eps_schedule", "grid_m", "steps", "cluster_tol", "jump_tol",
    "pattern_budget", "weight", "noise",
}
_KNOWN_NOISE_KEYS = {"eta", "alpha", "steps"}


def _fail(message: str, key: str | None = None) -> ScenarioError:
    return ScenarioError(message, field=key)


def _number_list(raw, key: str) -> tuple[float, ...]:
    if not isinstance(raw, (list, tuple)) or not raw:
        raise _fail(f"key {key!r} must be a nonempty flat list of numbers", key)
    out = []
    for item in raw:
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise _fail(f"key {key!r} must contain numbers only (this build rules run d = 1)", key)
        val = float(item)
        if not np.isfinite(val):
            raise _fail(f"key {key!r} must be finite", key)
        out.append(val)
    return tuple(out)


def _validate(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise _fail("scenario must be a JSON object")
    unknown = set(data) - _KNOWN_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise _fail(f"unknown key {key!r}", key)
    for key in ("name", "experiment", "lattice"):
        if key not in data:
            raise _fail(f"missing required key {key!r}", key)

    name = data["name"]
    if not isinstance(name, str) or not name:
        raise _fail("key 'name' must be a nonempty string", "name")
    experiment = data["experiment"]
    if experiment not in EXPERIMENTS:
        raise _fail(f"key 'experiment' must be one of {EXPERIMENTS}", "experiment")

    lattice = _number_list(data["lattice"], "lattice")

    kwargs: dict = {"name": name, "experiment": experiment, "lattice": lattice}

    for key in ("p", "q", "v0"):
        if key in data:
            vec = _number_list(data[key], key)
            if len(vec) != len(lattice):
                raise _fail(f"key {key!r} must have the same length as the lattice", key)
            kwargs[key] = vec

    if "gauge" in data:
        if data["gauge"] not in ("t", "theta"):
            raise _fail("key 'gauge' must be 't' or 'theta'", "gauge")
        kwargs["gauge"] = data["gauge"]

    if "window" in data:
        win = _number_list(data["window"], "window")
        if len(win) != 2 or not win[0] < win[1]:
            raise _fail("key 'window' must be an increasing pair", "window")
        kwargs["window"] = (win[0], win[1])

    if "kind" in data:
        if data["kind"] not in ("L_eps", "K_eps"):
            raise _fail("key 'kind' must be 'L_eps' or 'K_eps' (the smooth lanes)", "kind")
        kwargs["kind"] = data["kind"]

    if "eps" in data:
        eps = data["eps"]
        if isinstance(eps, bool) or not isinstance(eps, (int, float)) or not eps > 0:
            raise _fail("key 'eps' must be a positive number", "eps")
        kwargs["eps"] = float(eps)

    if "eps_schedule" in data:
        sched = _number_list(data["eps_schedule"], "eps_schedule")
        if any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise _fail("key 'eps_schedule' must be positive and strictly decreasing", "eps_schedule")
        kwargs["eps_schedule"] = sched

    for key, lo in (("grid_m", 2), ("steps", 1), ("pattern_budget", 0), ("seed", 0)):
        if key in data:
            val = data[key]
            if isinstance(val, bool) or not isinstance(val, int) or val < lo:
                raise _fail(f"key {key!r} must be an integer >= {lo}", key)
            kwargs[key] = val

    for key in ("cluster_tol", "jump_tol"):
        if key in data:
            val = data[key]
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not 0 <= val < 1:
                raise _fail(f"key {key!r} must be a number in [0, 1)", key)
            kwargs[key] = float(val)

    if "weight" in data:
        if data["weight"] not in ("t", "one"):
            raise _fail("key 'weight' must be 't' or 'one'", "weight")
        kwargs["weight"] = data["weight"]

    if "noise" in data:
        raw = data["noise"]
        if not isinstance(raw, dict):
            raise _fail("key 'noise' must be an object", "noise")
        unknown = set(raw) - _KNOWN_NOISE_KEYS
        if unknown:
            key = sorted(unknown)[0]
            raise _fail(f"unknown key 'noise.{key}'", f"noise.{key}")
        eta = raw.get("eta", 0.0)
        if isinstance(eta, bool) or not isinstance(eta, (int, float)) or eta < 0:
            raise _fail("key 'noise.eta' must be a number >= 0", "noise.eta")
        alpha = raw.get("alpha", "inv_sqrt_t")
        if alpha not in ("inv_sqrt_t", "one"):
            raise _fail("key 'noise.alpha' must be 'inv_sqrt_t' or 'one'", "noise.alpha")
        steps = raw.get("steps", 512)
        if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
            raise _fail("key 'noise.steps' must be an integer >= 1", "noise.steps")
        kwargs["noise"] = NoiseConfig(eta=float(eta), alpha=alpha, steps=steps)

    scenario = Scenario(**kwargs)
    _validate_semantics(scenario)
    return scenario


def _validate_semantics(s: Scenario) -> None:
    lat = np.asarray(s.lattice)
    needs_ordered = s.experiment in ("sticky", "check-invariants", "gamma-sweep")
    if needs_ordered and not np.all(np.diff(lat) > 0):
        raise _fail("this experiment needs a strictly ordered lattice", "lattice")
    t_gauge_run = s.gauge == "t" or s.experiment == "heatwave"
    if t_gauge_run and s.experiment != "heatwave" and s.window[0] <= 0:
        raise _fail("t-gauge windows need t0 > 0: heat kernel requires t>0", "window")
    if s.experiment == "heatwave" and s.window[0] <= 0:
        raise _fail("heatwave windows are in t and need t0 > 0: heat kernel requires t>0", "window")
    if s.experiment in ("minimize", "gamma-sweep", "check-invariants"):
        if s.p is None or s.q is None:
            raise _fail("this experiment needs endpoints 'p' and 'q'", "p")
    if s.experiment == "sticky":
        if s.p is None or s.v0 is None:
            raise _fail("the sticky experiment needs 'p' and 'v0'", "p")
        if np.any(np.diff(np.asarray(s.p)) < 0):
            raise _fail("sticky initial positions must be ordered", "p")
    if s.experiment == "heatwave":
        if s.p is None:
            raise _fail("the heatwave experiment needs the start state 'p'", "p")
        if s.eps is None:
            raise _fail("the heatwave experiment needs 'eps'", "eps")
    if s.experiment == "minimize" and s.eps is None:
        raise _fail("the minimize experiment needs 'eps'", "eps")


def load_scenario(path) -> Scenario:
    """Parse and fully validate a scenario file; defaults are filled in."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(
            f"scenario parse error at line {err.lineno}, column {err.colno}: {err.msg}",
            line=err.lineno, column=err.colno,
        ) from err
    return _validate(data)


def save_scenario(scenario: Scenario, path) -> None:
    """Canonical serialization; load -> save -> load is the identity."""
    payload = scenario.to_dict()
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
