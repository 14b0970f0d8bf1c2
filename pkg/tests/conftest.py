from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from stochuc.builder import ProblemKind, ProblemSpec, build_problem
from stochuc.config import load_bundled
from stochuc.scenarios import ScenarioSet
from stochuc.timegrid import DEFAULT_CLASSES, TimeGrid, UnitKind, UnitSpec

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

TINY_KINDS = (UnitKind.OCGT, UnitKind.CCGT, UnitKind.COAL)


def tiny_grid(n_steps: int) -> TimeGrid:
    return TimeGrid(0.0, float(n_steps), float(n_steps), 1.0, 1.0, {})


def random_unit(rng, uid: str, kinds=TINY_KINDS) -> UnitSpec:
    kind = kinds[int(rng.integers(0, len(kinds)))]
    p_min = float(rng.integers(50, 150))
    return UnitSpec(uid, DEFAULT_CLASSES[kind], p_min, p_min + float(rng.integers(20, 200)),
                    float(rng.integers(1, 20)), float(rng.integers(10, 200)),
                    initial_on=bool(rng.integers(0, 2)))


def tiny_instance(rng, *, max_units=3, max_steps=4, max_scenarios=2, budget=22, fixing_rate=0.5,
                  with_initial_power=True):
    """Random small commitment model with at most ``budget`` free binaries.

    Returns (model, fleet, n_steps).  Nuclear units are left out: their
    long duration windows alone exceed the budget."""
    while True:
        N = int(rng.integers(2, max_steps + 1))
        S = int(rng.integers(1, max_scenarios + 1))
        fleet = [random_unit(rng, f"G{i}") for i in range(int(rng.integers(1, max_units + 1)))]
        cap = sum(u.p_max for u in fleet)
        fixed = {(u.id, t): int(rng.integers(0, 2)) for u in fleet for t in range(N)
                 if rng.random() < fixing_rate}
        demand = rng.uniform(0.0, 1.1 * cap, (S, N))
        scen = ScenarioSet(-1.0, 0, demand, {}, np.full(S, 1.0 / S))
        ip = None
        if with_initial_power:
            ip = {u.id: float(rng.uniform(u.p_min, u.p_max)) if u.initial_on else 0.0 for u in fleet}
        kind = ProblemKind.DETERMINISTIC if S == 1 else ProblemKind.SINGLE_PHASE
        if kind is ProblemKind.SINGLE_PHASE:
            fixed = {}
        model = build_problem(ProblemSpec(kind, fleet, tiny_grid(N), scen, fixed_decisions=fixed,
                                          initial_power=ip))
        if len(model.free_binaries()) <= budget:
            return model, fleet, N


@pytest.fixture(scope="session")
def desk():
    return load_bundled("desk")


def collapse_instance(rng):
    """Small case whose study period is a single block, with a commitment
    plan taken from a deterministic solve on the base series and one
    evaluation forecast.  Returns (fleet, grid, plan, eval_set)."""
    from stochuc.builder import off_status
    from stochuc.solver import solve

    S = int(rng.integers(2, 4))
    N = S + int(rng.integers(1, 3))
    grid = TimeGrid(0.0, float(S), float(N), 1.0, float(S), {})
    fleet = [random_unit(rng, "C0", (UnitKind.CCGT,))]
    fleet += [random_unit(rng, f"G{i}", (UnitKind.OCGT,)) for i in range(int(rng.integers(1, 3)))]
    cap = sum(u.p_max for u in fleet)
    base = rng.uniform(0.2, 0.9, N) * cap
    mean = ScenarioSet(-1.0, 0, base[None, :], {}, np.ones(1))
    model = build_problem(ProblemSpec(ProblemKind.DETERMINISTIC, fleet, grid, mean))
    res = solve(model)
    committed = [u.id for u in fleet if u.kind is not UnitKind.OCGT]
    plan = off_status(model, res.x, committed)
    noise = base * (1.0 + rng.normal(0.0, 0.15, N))
    eval_set = ScenarioSet(grid.eval_issue_time(1), 0, np.maximum(noise, 0.0)[None, :], {}, np.ones(1))
    return fleet, grid, plan, eval_set


def monolithic_kpis(fleet, grid, plan, eval_set, costs=None):
    """Lost load, lost production and dispatch cost over the study period
    from one deterministic solve with the plan fixed, computed from the
    dispatch rather than from the objective."""
    from stochuc.builder import CostParams, K_CURRENCY, extract_dispatch, extract_plan
    from stochuc.solver import solve
    from stochuc.timegrid import StateId

    costs = costs or CostParams()
    S, dt = grid.study_steps, grid.delta_t
    fixed = {k: v for k, v in plan.items() if k[1] < S}
    model = build_problem(ProblemSpec(ProblemKind.DETERMINISTIC, fleet, grid, eval_set, costs, fixed))
    res = solve(model)
    d = extract_dispatch(model, res.x)
    states = extract_plan(model, res.x).states
    cost = 0.0
    for u in fleet:
        cost += u.pi_v * float(d["power"][u.id][0, :S].sum()) * dt
        for t in range(S):
            before = (StateId.OFL if u.initial_on else StateId.OFF) if t == 0 else states[u.id][t - 1]
            # start-ups of a fixed plan are sunk and carry no cost
            if before is StateId.OFF and states[u.id][t] is StateId.OU and (u.id, t) not in fixed:
                cost += u.pi_f * K_CURRENCY
    ll = float(d["dns"][0, :S].sum()) * dt
    lp = float(d["spill"][0, :S].sum()) * dt
    cost += K_CURRENCY * (costs.pi_dns * ll + costs.pi_spill * lp)
    return ll, lp, cost
