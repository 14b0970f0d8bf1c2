"""Run configurations end to end: commitment, evaluation, selection, grids.

Everything here is sequential and seeded, so a run directory can be
regenerated byte for byte from its manifest.
"""
from __future__ import annotations

import json
import logging
import platform
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .builder import (ProblemKind, ProblemSpec, build_problem, extract_plan, off_status,
                      relax_second_stage)
from .config import Case, ConfigError
from .errors import ContractError, SolverFailure
from .evaluation import (KpiRecord, csv_text, evaluate_batch, kpi_rows, summarize, fmt_number)
from .model import MilpModel
from .scenarios import NS_TRAIN, ScenarioSet, generate_scenario_set
from .selection import Selection, pipeline_select, random_training
from .solver import STATUS_INFEASIBLE, SolveOptions, SolveResult, solve
from .timegrid import StageSets, StatePlan, UnitKind, validate_plan

log = logging.getLogger(__name__)

OPTIMIZERS = ("det", "sto", "sto_relaxed")
FRAMEWORKS = ("single", "multi")


class NoSolution(SolverFailure):
    """A solve ended without incumbent; no plan is emitted."""


class Infeasible(SolverFailure):
    """A commitment problem has no feasible point."""


@dataclass(frozen=True)
class RunConfig:
    case: Case
    optimizer: str = "sto"
    framework: str = "single"
    scenarios: int = 5
    max_dev: float = 0.10
    eval_dev: float = 0.25
    eval_count: int = 50
    select: int = 0
    select_pool: int = 100
    gap: float = 0.10
    eval_gap: float = 1e-3
    seed: int = 2024
    time_limit: float | None = None
    grid_dev: tuple[float, ...] = (0.05, 0.10, 0.25)
    grid_select: tuple[int, ...] = (2, 5, 10)

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}")
        if self.framework not in FRAMEWORKS:
            raise ConfigError(f"framework must be one of {FRAMEWORKS}")
        if self.scenarios < 1 or self.eval_count < 1 or self.select < 0 or self.select_pool < 1:
            raise ConfigError("scenario counts must be positive")
        if self.select > self.select_pool:
            raise ConfigError("cannot select more scenarios than the pool holds")
        for m in (self.max_dev, self.eval_dev, *self.grid_dev):
            if not 0 < m < 1:
                raise ConfigError("deviations must lie in (0, 1)")
        if not 0 <= self.gap < 1 or not 0 <= self.eval_gap < 1:
            raise ConfigError("gaps must lie in [0, 1)")

    @classmethod
    def from_case(cls, case: Case, **overrides) -> "RunConfig":
        base = {k: getattr(case.run, k) for k in case.run.__dataclass_fields__}
        for k, v in overrides.items():
            if v is None:
                continue
            if k in base and base[k] != v:
                log.info("command line sets %s=%r over the case value %r", k, v, base[k])
            base[k] = v
        return cls(case=case, **base)

    def commit_options(self) -> SolveOptions:
        return SolveOptions(rel_gap=self.gap, time_limit=self.time_limit)

    def eval_options(self) -> SolveOptions:
        return SolveOptions(rel_gap=self.eval_gap)

    def describe(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "case"}
        d["grid_dev"] = list(self.grid_dev)
        d["grid_select"] = list(self.grid_select)
        d["case"] = self.case.name
        d["config_hash"] = self.case.source_hash
        return d


# ---------------------------------------------------------------------------
# commitment


@dataclass
class SolveRecord:
    phase: str
    status: str
    objective: float | None
    bound: float | None
    gap: float | None
    nodes: int
    elapsed: float
    backend: str
    variables: int
    free_binaries: int
    constraints: int


@dataclass
class CommitResult:
    label: str
    plan: dict[tuple[str, int], int]
    units: list[str]
    reports: list[SolveRecord]
    objective: float | None
    chained: list[dict] = field(default_factory=list)
    spec: ProblemSpec | None = None
    model: MilpModel | None = None
    x: np.ndarray | None = None
    selection: Selection | None = None
    training_ids: list[int] = field(default_factory=list)


def committed_units(case: Case) -> list[str]:
    """Units whose ON/OFF schedule is a commitment decision (not OCGT)."""
    return [u.id for u in case.fleet if u.kind is not UnitKind.OCGT]


def _run_solve(model: MilpModel, options: SolveOptions, phase: str) -> tuple[SolveResult, SolveRecord]:
    res = solve(model, options)
    rec = SolveRecord(phase, res.status, res.objective, res.bound, res.gap, res.nodes, res.elapsed,
                      res.backend, len(model.names), len(model.free_binaries()), len(model.constraints))
    log.info("%s: %s objective=%s gap=%s nodes=%d %.1fs", phase, res.status, res.objective, res.gap,
             res.nodes, res.elapsed)
    if not res.ok:
        if res.status == STATUS_INFEASIBLE:
            raise Infeasible(f"{phase}: the commitment problem is infeasible")
        raise NoSolution(f"{phase}: no solution retrieved ({res.status})")
    return res, rec


def _training(cfg: RunConfig, issue: float, start: int, det: bool, training: ScenarioSet | None) -> ScenarioSet:
    case = cfg.case
    if det:
        return ScenarioSet.from_base(case.base, issue, start)
    if training is not None:
        return training
    return generate_scenario_set(case.base, case.grid, issue, (start, case.grid.n_steps), cfg.scenarios,
                                 case.errors_with(cfg.max_dev), cfg.seed, NS_TRAIN)


def _finish(model: MilpModel, cfg: RunConfig) -> MilpModel:
    return relax_second_stage(model) if cfg.optimizer == "sto_relaxed" else model


def run_commit(cfg: RunConfig, training: ScenarioSet | None = None, label: str | None = None) -> CommitResult:
    """Commit with ``cfg``; ``training`` replaces the generated training
    scenarios (single-phase only).  With ``cfg.select`` > 0 a stochastic run
    first selects its training set against the deterministic plan."""
    case = cfg.case
    label = label or cfg.optimizer
    selection = None
    if cfg.select and cfg.optimizer != "det" and training is None:
        det = run_commit(replace(cfg, optimizer="det", select=0, framework="single"))
        selection = pipeline_select(case.fleet, case.grid, case.base, cfg.select_pool, cfg.select, cfg.eval_dev,
                                    cfg.seed, case.error_params, det.plan, case.costs, cfg.eval_options())
        training = selection.training
    if cfg.framework == "single":
        out = _commit_single(cfg, training, label)
    else:
        if training is not None:
            raise ContractError("a given training set only applies to the single-phase framework")
        out = _commit_multi(cfg, label)
    out.selection = selection
    return out


def _commit_single(cfg: RunConfig, training: ScenarioSet | None, label: str) -> CommitResult:
    case = cfg.case
    det = cfg.optimizer == "det"
    scen = _training(cfg, case.grid.lttd_times["t1"], 0, det, training)
    kind = ProblemKind.DETERMINISTIC if det else ProblemKind.SINGLE_PHASE
    spec = ProblemSpec(kind, case.fleet, case.grid, scen, case.costs,
                       stage_sets=StageSets.single_phase(case.fleet))
    model = _finish(build_problem(spec), cfg)
    res, rec = _run_solve(model, cfg.commit_options(), "single")
    units = committed_units(case)
    plan = off_status(model, res.x, units)
    return CommitResult(label, plan, units, [rec], res.objective, spec=spec, model=model, x=res.x,
                        training_ids=list(scen.scenario_ids) if not det else [])


def _commit_multi(cfg: RunConfig, label: str) -> CommitResult:
    case, grid = cfg.case, cfg.case.grid
    det = cfg.optimizer == "det"
    kinds = {u.id: u.kind for u in case.fleet}
    fixed: dict[tuple[str, int], int] = {}
    reports, chained = [], []
    phases = [(ProblemKind.PHASE_NUCLEAR, None, "t1", UnitKind.NUC),
              (ProblemKind.PHASE_COAL, None, "t2", UnitKind.COAL),
              (ProblemKind.PHASE_CCGT_FIRST, None, "t31", UnitKind.CCGT)]
    phases += [(ProblemKind.PHASE_CCGT_ROLLING, i, f"t3{i}", UnitKind.CCGT) for i in range(2, grid.n_blocks + 1)]
    last = None
    for kind, index, lttd, unit_kind in phases:
        units = [u for u, k in kinds.items() if k is unit_kind]
        if not units:
            continue
        start = grid.block_range(index).start if index else 0
        scen = _training(cfg, grid.lttd_times[lttd], start, det, None)
        spec = ProblemSpec(kind, case.fleet, grid, scen, case.costs, dict(fixed), index=index)
        model = _finish(build_problem(spec), cfg)
        name = kind.value if index is None else f"{kind.value}_{index}"
        res, rec = _run_solve(model, cfg.commit_options(), name)
        reports.append(rec)
        if kind is ProblemKind.PHASE_NUCLEAR:
            steps = range(grid.n_steps)
        elif kind is ProblemKind.PHASE_COAL:
            steps = range(grid.study_steps)
        else:
            steps = grid.block_range(index or 1)
        new = {k: v for k, v in off_status(model, res.x, units).items() if k[1] in steps}
        fixed.update(new)
        chained.append({"phase": name, "units": units, "steps": [steps.start, steps.stop],
                        "fixed": sorted(f"{u}@{t}={v}" for (u, t), v in new.items())})
        last = (spec, model, res)
    if last is None:
        raise ContractError("the fleet has no unit to commit")
    spec, model, res = last
    units = committed_units(case)
    return CommitResult(label, fixed, units, reports, res.objective, chained, spec, model, res.x)


# ---------------------------------------------------------------------------
# artifacts


def plan_matrix(result: CommitResult, case: Case) -> StatePlan | None:
    return None if result.model is None else extract_plan(result.model, result.x)


def plan_csv(result: CommitResult, case: Case, tag: dict | None = None) -> str:
    """Rows are hours, columns are units, 0 = ON and 1 = OFF."""
    grid = case.grid
    lines = []
    for k, v in (tag or {}).items():
        lines.append(f"# {k}={v}")
    lines.append(",".join(["hour", *result.units]))
    for t in range(grid.n_steps):
        row = [format(grid.time_of(t), "g")]
        for u in result.units:
            v = result.plan.get((u, t))
            row.append("" if v is None else str(v))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def report_json(result: CommitResult) -> dict:
    return {"label": result.label, "objective": result.objective,
            "solves": [asdict(r) for r in result.reports], "chained_fixings": result.chained,
            "training_scenarios": result.training_ids}


def validate_commit(result: CommitResult, case: Case):
    """Rule check of the committed states (whole window of the last model)."""
    plan = plan_matrix(result, case)
    if plan is None or plan.start_step != 0:
        return []
    return validate_plan(plan, case.fleet, case.grid)


# ---------------------------------------------------------------------------
# evaluation and grids


def run_evaluate(cfg: RunConfig, result: CommitResult, m_eval: float | None = None,
                 K: int | None = None) -> list[KpiRecord]:
    case = cfg.case
    m_eval = cfg.eval_dev if m_eval is None else m_eval
    K = cfg.eval_count if K is None else K
    return evaluate_batch(result.plan, case.fleet, case.grid, case.base, K, m_eval, case.error_params,
                          cfg.seed, case.costs, cfg.eval_options(), plan_id=result.label)


@dataclass
class GridCell:
    label: str
    optimizer: str
    training: str
    M: int
    m: float
    m_eval: float
    records: list[KpiRecord] = field(default_factory=list)
    error: str = ""


def run_experiment_grid(cfg: RunConfig) -> list[GridCell]:
    """Default grid: the deterministic plan, the stochastic plan of ``cfg``
    and, for every (M, m_eval) of ``grid_select`` x ``grid_dev``, a plan
    trained on the selected worst scenarios and one trained on as many
    randomly drawn ones.  Every plan is evaluated at its m_eval (the fixed
    plans at every m_eval).  A failing cell is recorded and skipped."""
    case = cfg.case
    out: list[GridCell] = []

    def evaluate(cell: GridCell, res: CommitResult):
        try:
            cell.records = run_evaluate(cfg, res, cell.m_eval)
        except (SolverFailure, ContractError) as exc:
            cell.error = str(exc)
        out.append(cell)

    def commit(label, c, training=None):
        try:
            return run_commit(c, training, label), ""
        except (SolverFailure, ContractError) as exc:
            return None, str(exc)

    screened: dict = {}
    det, err = commit("det", replace(cfg, optimizer="det", select=0, framework="single"))
    sto, err_sto = commit("sto", replace(cfg, optimizer="sto", select=0, framework="single"))
    for m_eval in cfg.grid_dev:
        for label, res, opt, M, m, e in (("det", det, "det", 1, 0.0, err),
                                         ("sto", sto, "sto", cfg.scenarios, cfg.max_dev, err_sto)):
            cell = GridCell(label, opt, "mean" if opt == "det" else "random", M, m, m_eval)
            if res is None:
                cell.error = e
                out.append(cell)
            else:
                evaluate(cell, res)
        if det is None:
            continue
        for M in cfg.grid_select:
            label = f"sel_M{M}_me{fmt_number(m_eval)}"
            try:
                sel = pipeline_select(case.fleet, case.grid, case.base, cfg.select_pool, M, m_eval, cfg.seed,
                                      case.error_params, det.plan, case.costs, cfg.eval_options(),
                                      screening=screened.get(m_eval))
                screened[m_eval] = sel.screening
            except (SolverFailure, ContractError) as exc:
                out.append(GridCell(label, "sto", "selected", M, m_eval, m_eval, error=str(exc)))
                continue
            size = len(sel.worst.selected)
            rnd = random_training(case.base, case.grid, cfg.select_pool, size, m_eval, cfg.seed, case.error_params)
            for training, tset in (("selected", sel.training), ("random", rnd)):
                name = f"{training}_M{M}_me{fmt_number(m_eval)}"
                res, e = commit(name, replace(cfg, optimizer="sto", select=0, framework="single"), tset)
                cell = GridCell(name, "sto", training, M, m_eval, m_eval)
                if res is None:
                    cell.error = e
                    out.append(cell)
                else:
                    evaluate(cell, res)
    return out


def grid_tables(cells: Sequence[GridCell], cfg: RunConfig) -> tuple[list[dict], list[dict]]:
    """Tidy rows (one per plan, scenario, m_eval) and heatmap rows of mean
    KPIs, absolute and as a percentage of the deterministic plan's."""
    tag = {"config_hash": cfg.case.source_hash, "seed": cfg.seed}
    tidy, heat = [], []
    det_means = {}
    for c in cells:
        if c.optimizer == "det" and c.records:
            det_means[c.m_eval] = summarize(c.records)
    for c in cells:
        key = {"plan": c.label, "optimizer": c.optimizer, "training": c.training, "M": c.M,
               "m": fmt_number(c.m), "m_eval": fmt_number(c.m_eval)}
        if c.records:
            tidy.extend(kpi_rows(c.records, {**tag, **{k: v for k, v in key.items() if k != "plan"}}))
        row = {**tag, **key, "status": "ok" if c.records else "failed", "error": c.error}
        if c.records:
            s = summarize(c.records)
            ref = det_means.get(c.m_eval)
            for name in ("lost_load", "lost_production", "dispatch_cost"):
                row[f"mean_{name}"] = fmt_number(s[name]["mean"])
                if ref is not None and ref[name]["mean"] > 0:
                    row[f"pct_det_{name}"] = fmt_number(100.0 * s[name]["mean"] / ref[name]["mean"])
                else:
                    row[f"pct_det_{name}"] = ""
        heat.append(row)
    return tidy, heat


# ---------------------------------------------------------------------------
# manifests


def manifest(cfg: RunConfig, command: str, argv: Sequence[str], outputs: Sequence[str]) -> dict:
    return {"command": command, "argv": list(argv), "package_version": __version__,
            "python": platform.python_version(), "config_path": str(cfg.case.path or ""),
            "config_hash": cfg.case.source_hash, "settings": cfg.describe(),
            "seeds": {"master": cfg.seed, "train_namespace": NS_TRAIN},
            "outputs": sorted(outputs)}


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def write_json(path: Path, data) -> None:
    write_text(path, json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_rows(path: Path, rows: Sequence[dict]) -> None:
    write_text(path, csv_text(rows))
