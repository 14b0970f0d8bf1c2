"""Training sets built from the worst scenarios of the deterministic plan.

The deterministic plan is evaluated once per candidate scenario, every
candidate issued at the first decision time and solved in one shot over the
whole horizon.  Candidates are ranked by lost load and by lost production;
the union of the two top-M prefixes becomes the training set.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .builder import CostParams, ProblemKind, ProblemSpec, build_problem, extract_dispatch
from .errors import BlockInfeasible, ContractError, SolverFailure
from .scenarios import NS_SELECT, BaseSeries, ErrorModelParams, ScenarioSet, generate_scenario_set
from .solver import STATUS_INFEASIBLE, SolveOptions, solve
from .timegrid import TimeGrid, UnitKind, UnitSpec


@dataclass(frozen=True)
class Screening:
    """Study-period lost load and lost production of one candidate."""

    scenario: int
    lost_load: float
    lost_production: float


@dataclass(frozen=True)
class WorstSets:
    by_lost_load: tuple[int, ...]
    by_lost_production: tuple[int, ...]
    selected: tuple[int, ...]
    M: int


def _ranking(rows, key) -> tuple[int, ...]:
    # descending volume, lower scenario index first on ties
    return tuple(r.scenario for r in sorted(rows, key=lambda r: (-getattr(r, key), r.scenario)))


def select_worst(kpis: Sequence, M: int) -> WorstSets:
    """``kpis`` holds one row per scenario with ``scenario``, ``lost_load``
    and ``lost_production`` attributes (Screening or KpiRecord totals)."""
    rows = [_as_screening(k) for k in kpis]
    if len({r.scenario for r in rows}) != len(rows):
        raise ContractError("one KPI row per scenario")
    if M < 1:
        raise ContractError("M must be at least 1")
    if M > len(rows):
        raise ContractError(f"cannot select {M} scenarios out of {len(rows)}")
    ll = _ranking(rows, "lost_load")
    lp = _ranking(rows, "lost_production")
    chosen = sorted(set(ll[:M]) | set(lp[:M]))
    return WorstSets(ll, lp, tuple(chosen), M)


def _as_screening(k) -> Screening:
    if isinstance(k, Screening):
        return k
    ll = getattr(k, "total_lost_load", None)
    if ll is not None:
        return Screening(k.scenario, ll, k.total_lost_production)
    return Screening(k.scenario, k.lost_load, k.lost_production)


# ---------------------------------------------------------------------------
# screening the deterministic plan


def screening_fixings(plan: Mapping[tuple[str, int], int], fleet: Sequence[UnitSpec],
                      grid: TimeGrid) -> dict[tuple[str, int], int]:
    """Nuclear over the horizon, coal and combined-cycle over the study period."""
    kinds = {u.id: u.kind for u in fleet}
    out = {}
    for (u, t), v in plan.items():
        k = kinds.get(u)
        if k is UnitKind.NUC or (k in (UnitKind.COAL, UnitKind.CCGT) and t < grid.study_steps):
            out[u, t] = v
    return out


def candidate_scenarios(base: BaseSeries, grid: TimeGrid, K: int, m_eval: float,
                        params: ErrorModelParams | Mapping[str, ErrorModelParams], seed: int,
                        ids: Sequence[int] | None = None) -> ScenarioSet:
    from dataclasses import replace
    if isinstance(params, ErrorModelParams):
        per = replace(params, max_dev=m_eval)
    else:
        per = {k: replace(v, max_dev=m_eval) for k, v in params.items()}
    ids = list(range(K)) if ids is None else list(ids)
    return generate_scenario_set(base, grid, grid.lttd_times["t1"], (0, grid.n_steps), len(ids), per, seed,
                                 NS_SELECT, scenario_ids=ids)


def screen(plan, fleet: Sequence[UnitSpec], grid: TimeGrid, candidates: ScenarioSet, costs: CostParams,
           options: SolveOptions) -> list[Screening]:
    fixed = screening_fixings(plan, fleet, grid)
    study = grid.study_steps
    out = []
    for s in range(candidates.n_scenarios):
        spec = ProblemSpec(ProblemKind.DETERMINISTIC, fleet, grid, candidates.subset([s]), costs, fixed)
        model = build_problem(spec)
        res = solve(model, options)
        if not res.ok:
            if res.status == STATUS_INFEASIBLE:
                raise BlockInfeasible(0, res.status)
            raise SolverFailure(f"screening of candidate {candidates.scenario_ids[s]} ended with {res.status}")
        d = extract_dispatch(model, res.x)
        ll = max(0.0, float(d["dns"][0, :study].sum() * grid.delta_t))
        lp = max(0.0, float(d["spill"][0, :study].sum() * grid.delta_t))
        out.append(Screening(candidates.scenario_ids[s], ll, lp))
    return out


@dataclass
class Selection:
    worst: WorstSets
    screening: list[Screening]
    training: ScenarioSet
    m_eval: float
    seed: int

    def manifest(self) -> dict:
        return {"M": self.worst.M, "m_eval": self.m_eval, "seed": self.seed, "namespace": NS_SELECT,
                "pool": len(self.screening), "selected": list(self.worst.selected),
                "by_lost_load": list(self.worst.by_lost_load[:self.worst.M]),
                "by_lost_production": list(self.worst.by_lost_production[:self.worst.M])}


def pipeline_select(fleet: Sequence[UnitSpec], grid: TimeGrid, base: BaseSeries, K: int, M: int,
                    m_eval: float, seed: int, params, det_plan, costs: CostParams,
                    options: SolveOptions, screening: Sequence[Screening] | None = None) -> Selection:
    """Screen K candidates against ``det_plan`` and return the training set
    made of the selected ones, with uniform probabilities.  A screening
    table from an earlier call with the same pool can be passed back in."""
    if screening is None:
        pool = candidate_scenarios(base, grid, K, m_eval, params, seed)
        rows = screen(det_plan, fleet, grid, pool, costs, options)
    else:
        rows = list(screening)
        if len(rows) != K:
            raise ContractError("the screening table does not match the pool size")
    worst = select_worst(rows, M)
    training = candidate_scenarios(base, grid, len(worst.selected), m_eval, params, seed, worst.selected)
    return Selection(worst, rows, training, m_eval, seed)


def random_training(base: BaseSeries, grid: TimeGrid, K: int, size: int, m_eval: float, seed: int,
                    params) -> ScenarioSet:
    """The comparison set: ``size`` candidates of the same pool drawn at random."""
    if size > K:
        raise ContractError(f"cannot draw {size} scenarios out of {K}")
    rng = np.random.default_rng([seed, NS_SELECT, K, size])
    ids = sorted(int(i) for i in rng.choice(K, size=size, replace=False))
    return candidate_scenarios(base, grid, K, m_eval, params, seed, ids)


def write_manifest(path: str | Path, selection: Selection, extra: Mapping | None = None) -> None:
    data = dict(extra or {})
    data.update(selection.manifest())
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
