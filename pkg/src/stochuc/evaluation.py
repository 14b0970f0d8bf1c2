"""Ex-post evaluation of commitment plans against unseen scenarios.

For every study block j the plan is re-dispatched by a deterministic
problem whose window runs from the start of block j to the end of the
horizon, driven by one evaluation scenario issued just before the block.
Only the block itself is kept; the rest of the window is look-ahead.  The
power levels entering block j (j >= 2) come from the same rolling procedure
run on the base series, the best forecast available.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .builder import (CostParams, ProblemKind, ProblemSpec, build_evaluation, build_problem,
                      cost_breakdown, extract_dispatch, extract_plan)
from .errors import BlockInfeasible, ContractError, SolverFailure
from .model import MilpModel
from .scenarios import (NS_EVAL, BaseSeries, ErrorModelParams, ScenarioSet,
                        generate_scenario_set)
from .solver import STATUS_INFEASIBLE, SolveOptions, SolveResult, solve
from .timegrid import StageSets, StateId, TimeGrid, UnitKind, UnitSpec

Fixings = Mapping[tuple[str, int], int]
BALANCE_TOL = 1e-6


@dataclass
class EvalScenario:
    """Evaluation scenario i: one forecast per block, block j's issued at the
    block's evaluation time and covering [start of block j, horizon end)."""

    index: int
    m_eval: float
    per_block: dict[int, ScenarioSet]

    def __post_init__(self):
        starts = [self.per_block[j].start_step for j in sorted(self.per_block)]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ContractError("later evaluation scenarios must cover shorter windows")


@dataclass
class BlockTrace:
    steps: range
    power: dict[str, np.ndarray]
    dns: np.ndarray
    spill: np.ndarray
    residual: np.ndarray
    states: dict[str, list[StateId]]


@dataclass
class KpiRecord:
    plan_id: str
    m_eval: float
    scenario: int
    lost_load: list[float]
    lost_production: list[float]
    dispatch_cost: list[float]
    traces: list[BlockTrace] = field(default_factory=list, repr=False)

    @property
    def total_lost_load(self) -> float:
        return float(sum(self.lost_load))

    @property
    def total_lost_production(self) -> float:
        return float(sum(self.lost_production))

    @property
    def total_dispatch_cost(self) -> float:
        return float(sum(self.dispatch_cost))


@dataclass(frozen=True)
class InOutOfSample:
    kappa_in: float
    kappa_oos: float
    first_stage_cost: float
    mean_second_stage_oos: float

    @property
    def difference(self) -> float:
        return self.kappa_oos - self.kappa_in


# ---------------------------------------------------------------------------
# scenarios


def make_eval_scenario(base: BaseSeries, grid: TimeGrid, index: int, m_eval: float,
                       params: ErrorModelParams | Mapping[str, ErrorModelParams], seed: int) -> EvalScenario:
    """Scenario ``index`` of the evaluation stream; ``params`` supplies the
    persistence and lead, ``m_eval`` overrides the maximal deviation."""
    per_source = _with_dev(params, m_eval)
    blocks = {}
    for j in range(1, grid.n_blocks + 1):
        start = grid.block_range(j).start
        blocks[j] = generate_scenario_set(base, grid, grid.eval_issue_time(j), (start, grid.n_steps), 1,
                                          per_source, seed, NS_EVAL, scenario_ids=[index])
    return EvalScenario(index, m_eval, blocks)


def _with_dev(params, m):
    from dataclasses import replace
    if isinstance(params, ErrorModelParams):
        return replace(params, max_dev=m)
    return {k: replace(v, max_dev=m) for k, v in params.items()}


def mean_eval_scenario(base: BaseSeries, grid: TimeGrid) -> EvalScenario:
    blocks = {}
    for j in range(1, grid.n_blocks + 1):
        start = grid.block_range(j).start
        blocks[j] = ScenarioSet.from_base(base, grid.eval_issue_time(j), start)
    return EvalScenario(-1, 0.0, blocks)


# ---------------------------------------------------------------------------
# one block


def block_fixings(plan: Fixings, fleet: Sequence[UnitSpec], grid: TimeGrid, j: int) -> dict[tuple[str, int], int]:
    """The part of a plan that binds the evaluation of block j."""
    a = grid.block_range(j).start
    block = grid.block_range(j)
    kinds = {u.id: u.kind for u in fleet}
    out = {}
    for (u, t), v in plan.items():
        k = kinds.get(u)
        if k is UnitKind.NUC and t >= a:
            out[u, t] = v
        elif k is UnitKind.COAL and a <= t < grid.study_steps:
            out[u, t] = v
        elif k is UnitKind.CCGT and t in block:
            out[u, t] = v
    return out


def _block_spec(plan, fleet, grid, j, scen, costs, initial_power):
    kind = ProblemKind.EVAL_T32 if j == 1 else ProblemKind.EVAL_T3I
    return ProblemSpec(kind, fleet, grid, scen, costs, block_fixings(plan, fleet, grid, j),
                       index=None if j == 1 else j + 1, initial_power=initial_power)


def evaluate_block(plan: Fixings, fleet: Sequence[UnitSpec], grid: TimeGrid, j: int, scen: ScenarioSet,
                   costs: CostParams, options: SolveOptions,
                   initial_power: Mapping[str, float] | None = None):
    """Solve the block-j evaluation problem.  Returns (lost load, lost
    production, dispatch cost, trace, power at the last block step)."""
    model = build_evaluation(_block_spec(plan, fleet, grid, j, scen, costs, initial_power))
    res = solve(model, options)
    if not res.ok:
        if res.status == STATUS_INFEASIBLE:
            raise BlockInfeasible(j, res.status)
        raise SolverFailure(f"evaluation of block {j} ended with {res.status}")
    return _block_kpis(model, res, grid.block_range(j), grid.delta_t)


def _block_kpis(model: MilpModel, res: SolveResult, block: range, dt: float):
    a, _ = model.metadata["window"]
    x = res.x
    d = extract_dispatch(model, x)
    rel = slice(block.start - a, block.stop - a)
    dns = d["dns"][0, rel]
    spill = d["spill"][0, rel]
    cost = 0.0
    for jv, coef in model.objective.items():
        if _dest_step(model, jv) in block:
            cost += coef * x[jv]
    plan = extract_plan(model, x)
    residual = _residual(model, block)
    trace = BlockTrace(block, {u: p[0, rel].copy() for u, p in d["power"].items()}, dns.copy(), spill.copy(),
                       residual, {u: seq[rel] for u, seq in plan.states.items()})
    last = {u: float(p[0, block.stop - 1 - a]) for u, p in d["power"].items()}
    # bounds keep these nonnegative; clip the solver's round-off
    return max(0.0, float(dns.sum() * dt)), max(0.0, float(spill.sum() * dt)), max(0.0, float(cost)), trace, last


def _dest_step(model: MilpModel, j: int):
    tag = model.tags[j]
    if tag is None:
        return None
    if tag.role == "T0":
        return model.metadata["window"][0]
    if tag.role == "T":
        return tag.time + 1
    return tag.time


def _residual(model: MilpModel, block: range) -> np.ndarray:
    out = np.zeros(len(block))
    for con in model.constraints:
        if con.name.startswith("bal.t"):
            t = int(con.name.split(".")[1][1:])
            if t in block:
                out[t - block.start] = -con.rhs
    return out


# ---------------------------------------------------------------------------
# rolling protocol


def initial_power_chain(plan: Fixings, fleet: Sequence[UnitSpec], grid: TimeGrid, base: BaseSeries,
                        costs: CostParams, options: SolveOptions) -> dict[int, dict[str, float]]:
    """Power levels entering each block j >= 2, from rolling the plan on the
    base series."""
    mean = mean_eval_scenario(base, grid)
    chain: dict[int, dict[str, float]] = {}
    init = None
    for j in range(1, grid.n_blocks + 1):
        *_, last = evaluate_block(plan, fleet, grid, j, mean.per_block[j], costs, options, init)
        init = last
        chain[j + 1] = last
    return chain


def rolling_evaluate(plan: Fixings, eval_scn: EvalScenario, fleet: Sequence[UnitSpec], grid: TimeGrid,
                     costs: CostParams, options: SolveOptions,
                     chain: Mapping[int, Mapping[str, float]] | None = None,
                     base: BaseSeries | None = None, plan_id: str = "plan",
                     keep_traces: bool = False) -> KpiRecord:
    if chain is None:
        if grid.n_blocks > 1 and base is None:
            raise ContractError("need the base series (or a precomputed chain) for the initial conditions")
        chain = initial_power_chain(plan, fleet, grid, base, costs, options) if grid.n_blocks > 1 else {}
    rec = KpiRecord(plan_id, eval_scn.m_eval, eval_scn.index, [], [], [])
    for j in range(1, grid.n_blocks + 1):
        init = None if j == 1 else chain[j]
        ll, lp, cost, trace, _ = evaluate_block(plan, fleet, grid, j, eval_scn.per_block[j], costs,
                                                options, init)
        rec.lost_load.append(ll)
        rec.lost_production.append(lp)
        rec.dispatch_cost.append(cost)
        if keep_traces:
            rec.traces.append(trace)
    return rec


def evaluate_batch(plan: Fixings, fleet: Sequence[UnitSpec], grid: TimeGrid, base: BaseSeries, K: int,
                   m_eval: float, params, seed: int, costs: CostParams, options: SolveOptions,
                   plan_id: str = "plan", first_index: int = 0) -> list[KpiRecord]:
    if K < 1:
        raise ContractError("K must be at least 1")
    chain = initial_power_chain(plan, fleet, grid, base, costs, options) if grid.n_blocks > 1 else {}
    out = []
    for i in range(first_index, first_index + K):
        scn = make_eval_scenario(base, grid, i, m_eval, params, seed)
        out.append(rolling_evaluate(plan, scn, fleet, grid, costs, options, chain, plan_id=plan_id))
    return out


def summarize(records: Sequence[KpiRecord]) -> dict[str, dict[str, float]]:
    out = {}
    for name, attr in (("lost_load", "total_lost_load"), ("lost_production", "total_lost_production"),
                       ("dispatch_cost", "total_dispatch_cost")):
        v = np.array([getattr(r, attr) for r in records])
        out[name] = {"mean": float(v.mean()), "p10": float(np.percentile(v, 10)),
                     "p50": float(np.percentile(v, 50)), "p90": float(np.percentile(v, 90))}
    return out


# ---------------------------------------------------------------------------
# in-sample / out-of-sample


def compute_in_out_of_sample(spec: ProblemSpec, model: MilpModel, x, test: ScenarioSet,
                             options: SolveOptions, allow_overlap: bool = False) -> InOutOfSample:
    """kappa_in from the training solution; kappa_oos re-solves the second
    stage of every test scenario with the first-stage states pinned."""
    train = spec.scenarios
    if not allow_overlap and train.seed == test.seed and train.namespace == test.namespace \
            and train.issue_time == test.issue_time and set(train.scenario_ids) & set(test.scenario_ids):
        raise ContractError("test scenarios overlap the training scenarios")
    a, b = model.metadata["window"]
    if a != 0:
        raise ContractError("out-of-sample values are defined for problems starting at the first step")
    br = cost_breakdown(model, x)
    first = br["first_stage"]
    kappa_in = br["expected"]

    x = np.asarray(x, dtype=float)
    first_units = set(model.metadata["first_stage_units"])
    first_steps = set(model.metadata["first_stage_steps"])
    states: dict[tuple[str, int], StateId] = {}
    for j, tag in enumerate(model.tags):
        if tag is not None and tag.role == "E" and tag.scenario is None and x[j] > 0.5 \
                and tag.unit in first_units and tag.time in first_steps:
            states[tag.unit, tag.time] = StateId[tag.state]
    fixed = {k: v for k, v in spec.fixed_decisions.items() if a <= k[1] < b}
    stage = StageSets(frozenset(first_units), frozenset(u.id for u in spec.fleet) - frozenset(first_units))
    values = []
    for s in range(test.n_scenarios):
        one = test.subset([s])
        det = ProblemSpec(ProblemKind.DETERMINISTIC, spec.fleet, spec.grid, one, spec.costs, fixed,
                          stage_sets=stage, initial_power=spec.initial_power, initial_on=spec.initial_on,
                          fixed_states=states)
        m = build_problem(det)
        r = solve(m, options)
        if not r.ok:
            raise SolverFailure(f"second-stage re-solve of test scenario {s} ended with {r.status}")
        values.append(r.objective)
    mean = float(np.mean(values))
    return InOutOfSample(kappa_in, first + mean, first, mean)


# ---------------------------------------------------------------------------
# reports

def kpi_rows(records: Sequence[KpiRecord], extra: Mapping[str, object] | None = None) -> list[dict]:
    rows = []
    for r in records:
        row = dict(extra or {})
        row.update({"plan": r.plan_id, "m_eval": fmt_number(r.m_eval), "scenario": r.scenario,
                    "lost_load_mwh": fmt_number(r.total_lost_load),
                    "lost_production_mwh": fmt_number(r.total_lost_production),
                    "dispatch_cost": fmt_number(r.total_dispatch_cost)})
        for j, (ll, lp, c) in enumerate(zip(r.lost_load, r.lost_production, r.dispatch_cost), start=1):
            row[f"block{j}_lost_load_mwh"] = fmt_number(ll)
            row[f"block{j}_lost_production_mwh"] = fmt_number(lp)
            row[f"block{j}_dispatch_cost"] = fmt_number(c)
        rows.append(row)
    return rows


def write_csv(path: str | Path, rows: Sequence[Mapping[str, object]]) -> None:
    Path(path).write_text(csv_text(rows))


def csv_text(rows: Sequence[Mapping[str, object]]) -> str:
    if not rows:
        return ""
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def fmt_number(v) -> str:
    """Fixed rounding keeps reports stable against last-bit noise."""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if abs(v) < 5e-7:
        v = 0.0
    return f"{v:.6f}"
