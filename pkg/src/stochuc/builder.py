"""MILP assembly for the two-stage unit-commitment problems.

Every problem kind is an instance of one formulation over a window of
timesteps [a, b): state variables E, transitions T (from t to t + 1),
initial transitions T0 (into step a), power p, lost load ``dns`` and
spillage ``spill``.  The kinds differ only in

* which (unit, step) pairs are first-stage (one copy shared by all
  scenarios) and which are second-stage (one copy per scenario),
* which OFF statuses are fixed by earlier decisions,
* the window and the initial conditions.

A transition belongs to the stage of its destination step.  Start-up costs
are charged for every (unit, step) whose status is not fixed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ContractError
from .model import BINARY, CONTINUOUS, MilpModel, VarTag
from .scenarios import ScenarioSet
from .timegrid import (STATES, StageSets, StateId, StatePlan, TimeGrid, UnitKind, UnitSpec,
                       UnitSteps, transition_allowed, transition_usable)

OU, OD, OFL, OFF = StateId.OU, StateId.OD, StateId.OFL, StateId.OFF
K_CURRENCY = 1000.0


class ProblemKind(str, enum.Enum):
    SINGLE_PHASE = "single_phase"
    PHASE_NUCLEAR = "phase_nuclear"
    PHASE_COAL = "phase_coal"
    PHASE_CCGT_FIRST = "phase_ccgt_first"
    PHASE_CCGT_ROLLING = "phase_ccgt_rolling"
    EVAL_T32 = "eval_t32"
    EVAL_T3I = "eval_t3i"
    DETERMINISTIC = "deterministic"


PHASE_KINDS = {ProblemKind.PHASE_NUCLEAR, ProblemKind.PHASE_COAL,
               ProblemKind.PHASE_CCGT_FIRST, ProblemKind.PHASE_CCGT_ROLLING}
EVAL_KINDS = {ProblemKind.EVAL_T32, ProblemKind.EVAL_T3I}


@dataclass(frozen=True)
class CostParams:
    """Penalties in k-currency per MWh."""

    pi_dns: float = 10.0
    pi_spill: float = 3.0

    def __post_init__(self):
        if self.pi_dns < 0 or self.pi_spill < 0:
            raise ValueError("penalties must be nonnegative")


Fixings = Mapping[tuple[str, int], int]


@dataclass
class ProblemSpec:
    kind: ProblemKind
    fleet: Sequence[UnitSpec]
    grid: TimeGrid
    scenarios: ScenarioSet
    costs: CostParams = field(default_factory=CostParams)
    fixed_decisions: Fixings = field(default_factory=dict)
    stage_sets: StageSets | None = None
    index: int | None = None
    initial_power: Mapping[str, float] | None = None
    initial_on: Mapping[str, bool] | None = None
    # full states (not only OFF statuses) pinned in a deterministic problem,
    # used to re-solve the second stage of a two-stage solution
    fixed_states: Mapping[tuple[str, int], StateId] | None = None

    def __post_init__(self):
        self.kind = ProblemKind(self.kind)
        if self.fixed_states:
            if self.kind is not ProblemKind.DETERMINISTIC:
                raise ContractError("full-state fixings are only accepted by deterministic problems")
            self.fixed_states = {(u, int(t)): StateId(e) for (u, t), e in self.fixed_states.items()}
            merged = dict(self.fixed_decisions)
            for key, e in self.fixed_states.items():
                off = int(e is StateId.OFF)
                if merged.get(key, off) != off:
                    raise ContractError(f"state fixing of {key} contradicts its OFF status")
                merged[key] = off
            self.fixed_decisions = merged
        self.fixed_decisions = {(u, int(t)): int(v) for (u, t), v in self.fixed_decisions.items()}
        ids = {u.id for u in self.fleet}
        if len(ids) != len(self.fleet):
            raise ContractError("duplicate unit ids in fleet")
        for (u, t), v in self.fixed_decisions.items():
            if u not in ids:
                raise ContractError(f"fixed decision for unknown unit {u}")
            if v not in (0, 1):
                raise ContractError(f"OFF status must be 0 or 1, got {v} for {(u, t)}")
            if not 0 <= t < self.grid.n_steps:
                raise ContractError(f"fixed decision for {u} at step {t} outside the horizon")


# ---------------------------------------------------------------------------
# window sets


def duration_windows(t: int, steps: UnitSteps, a: int, b: int) -> dict[str, range]:
    """Steps constrained by a transition taken at index t (into step t + 1).

    Convention: a duration of n steps covers [t + 1, t + n].  The OFF window
    uses the same convention as the ON window so that a minimum OFF time of
    n steps keeps the unit OFF for exactly n steps.  Windows are truncated at
    the horizon end; step t + 1 itself is left out since the transition
    already fixes the state there.
    """
    lo = max(t + 2, a)

    def win(n):
        return range(lo, min(t + n, b - 1) + 1)

    return {"flat": win(steps.flat), "on_min": win(steps.on_min), "off_min": win(steps.off_min)}


# ---------------------------------------------------------------------------
# core assembly


@dataclass
class _Layout:
    """Which steps of which unit are shared (first-stage)."""

    shared: set[tuple[str, int]]
    fixed: dict[tuple[str, int], int]
    first_stage: set[tuple[str, int]]
    states: dict[tuple[str, int], StateId] = field(default_factory=dict)


def _assemble(fleet: Sequence[UnitSpec], grid: TimeGrid, a: int, b: int, scen: ScenarioSet,
              layout: _Layout, costs: CostParams, init_on: Mapping[str, bool],
              init_power: Mapping[str, float] | None, metadata: dict) -> MilpModel:
    if scen.n_scenarios == 0:
        raise ContractError("empty scenario set")
    if scen.start_step > a or scen.start_step + scen.n_steps < b:
        raise ContractError(f"scenarios cover steps {scen.steps}, model needs [{a}, {b})")
    if not 0 <= a < b <= grid.n_steps:
        raise ContractError(f"window [{a}, {b}) outside the horizon")

    m = MilpModel(metadata=dict(metadata))
    S = scen.n_scenarios
    probs = scen.probabilities
    dt = grid.delta_t
    residual = scen.residual
    scen_range = range(S)

    p_idx: dict[tuple[str, int, int], int] = {}
    for u in fleet:
        uid = u.id
        try:
            st = u.steps(dt)
        except ValueError as exc:
            raise ContractError(f"{uid}: {exc}") from exc

        def keys(t, _uid=uid):
            return [None] if (_uid, t) in layout.shared else list(scen_range)

        def key(t, s, _uid=uid):
            return None if (_uid, t) in layout.shared else s

        E: dict[tuple[int, int | None, StateId], int] = {}
        for t in range(a, b):
            for k in keys(t):
                # a fixed OFF status becomes variable bounds
                fixed = layout.fixed.get((uid, t))
                pinned = layout.states.get((uid, t))
                for e in STATES:
                    if pinned is not None:
                        lo = hi = int(e is pinned)
                    else:
                        lo = 1 if fixed == 1 and e is OFF else 0
                        hi = 0 if (fixed == 1 and e is not OFF) or (fixed == 0 and e is OFF) else 1
                    E[t, k, e] = m.add_var(kind=BINARY, lb=lo, ub=hi, tag=VarTag("E", uid, t, k, e.name))
                m.add_constraint({E[t, k, e]: 1.0 for e in STATES}, "=", 1.0, f"uniq.{uid}.t{t}.{_k(k)}")

        def possible(t, e):
            return m.ub[E[t, keys(t)[0], e]] > 0

        # transitions; index a - 1 stands for the initial transition into step a
        Tv: dict[tuple[int, int | None, StateId, StateId], int] = {}
        on0 = bool(init_on[uid])
        for k in keys(a):
            for ei in STATES:
                for ef in STATES:
                    ok = transition_allowed(ei, ef) and (ei is not OFF) == on0 and possible(a, ef)
                    Tv[a - 1, k, ei, ef] = m.add_var(kind=BINARY, lb=0, ub=1 if ok else 0,
                                                     tag=VarTag("T0", uid, None, k, f"{ei.name}_{ef.name}"))
            for ef in STATES:
                m.add_constraint({**{Tv[a - 1, k, ei, ef]: 1.0 for ei in STATES}, E[a, k, ef]: -1.0},
                                 "=", 0.0, f"def0.{uid}.{ef.name}.{_k(k)}")
        for t in range(a, b - 1):
            for k in keys(t + 1):
                for ei in STATES:
                    for ef in STATES:
                        Tv[t, k, ei, ef] = m.add_var(kind=BINARY, lb=0, ub=1 if transition_usable(ei, ef) and possible(t, ei)
                                                     and possible(t + 1, ef) else 0,
                                                     tag=VarTag("T", uid, t, k, f"{ei.name}_{ef.name}"))
                for ef in STATES:
                    m.add_constraint({**{Tv[t, k, ei, ef]: 1.0 for ei in STATES}, E[t + 1, k, ef]: -1.0},
                                     "=", 0.0, f"defin.{uid}.t{t}.{ef.name}.{_k(k)}")
            for k0, k1 in sorted({(key(t, s), key(t + 1, s)) for s in scen_range}, key=_pair_key):
                for ei in STATES:
                    m.add_constraint({**{Tv[t, k1, ei, ef]: 1.0 for ef in STATES}, E[t, k0, ei]: -1.0},
                                     "=", 0.0, f"defout.{uid}.t{t}.{ei.name}.{_k(k0)}.{_k(k1)}")

        def live(j):
            return m.ub[j] > 0

        # durations
        for t in range(a - 1, b - 1):
            win = duration_windows(t, st, a, b)
            for rule, tps in win.items():
                for tp in tps:
                    for k1, k2 in sorted({(key(t + 1, s), key(tp, s)) for s in scen_range}, key=_pair_key):
                        tag = f"{uid}.{_step(t)}.t{tp}.{_k(k1)}.{_k(k2)}"
                        if rule == "flat":
                            src = [Tv[t, k1, OU, OFL], Tv[t, k1, OD, OFL]]
                            if any(live(j) for j in src):
                                m.add_constraint({**{j: 1.0 for j in src}, E[tp, k2, OFL]: -1.0}, "<=", 0.0,
                                                 f"flat.{tag}")
                        elif rule == "on_min":
                            start = Tv[t, k1, OFF, OU]
                            if live(start):
                                m.add_constraint({start: 1.0, E[tp, k2, OFF]: 1.0}, "<=", 1.0, f"onmin.{tag}")
                        else:
                            src = [Tv[t, k1, OFL, OFF], Tv[t, k1, OD, OFF]]
                            if any(live(j) for j in src):
                                m.add_constraint({**{j: 1.0 for j in src}, E[tp, k2, OFF]: -1.0}, "<=", 0.0,
                                                 f"offmin.{tag}")
        # A variation is followed by `flat` OFL steps (OU -> OFL, OD -> OFL) or
        # by at least off_min OFF steps (OD -> OFF), so while flat <= off_min no
        # two variations fit in flat + 1 consecutive steps.  Redundant for
        # integer points, but it removes the half-OU/half-OD relaxations.
        if st.flat >= 1 and st.flat <= st.off_min:
            span = st.flat + 1
            for w in range(a, b - 1):
                last = min(w + span, b)
                for combo in sorted({tuple(key(tp, s) for tp in range(w, last)) for s in scen_range},
                                    key=_pair_key):
                    terms = {}
                    for i, tp in enumerate(range(w, last)):
                        terms[E[tp, combo[i], OU]] = 1.0
                        terms[E[tp, combo[i], OD]] = 1.0
                    m.add_constraint(terms, "<=", 1.0, f"onevar.{uid}.t{w}.{'.'.join(_k(x) for x in combo)}")
        if st.on_max is not None:
            span = st.on_max + 1
            for w in range(a, b - span + 1):
                for combo in sorted({tuple(key(tp, s) for tp in range(w, w + span)) for s in scen_range},
                                    key=_pair_key):
                    m.add_constraint({E[w + i, combo[i], OFF]: 1.0 for i in range(span)}, ">=", 1.0,
                                     f"onmax.{uid}.t{w}.{'.'.join(_k(x) for x in combo[:1])}")
        if st.n_on_max is not None:
            for combo in sorted({tuple(key(t + 1, s) for t in range(a - 1, b - 1)) for s in scen_range},
                                key=_pair_key):
                terms = {Tv[t, combo[t - a + 1], OFF, OU]: 1.0 for t in range(a - 1, b - 1)}
                m.add_constraint(terms, "<=", float(st.n_on_max), f"nstart.{uid}.{_k(combo[-1])}")

        # power, bounds and minimal variation
        for s in scen_range:
            for t in range(a, b):
                j = m.add_var(kind=CONTINUOUS, lb=0.0, ub=u.p_max, tag=VarTag("p", uid, t, s))
                p_idx[uid, t, s] = j
                k = key(t, s)
                m.add_constraint({j: 1.0, E[t, k, OFF]: u.p_max}, "<=", u.p_max, f"pmax.{uid}.t{t}.s{s}")
                m.add_constraint({j: 1.0, E[t, k, OFF]: u.p_min}, ">=", u.p_min, f"pmin.{uid}.t{t}.s{s}")
            for t in range(a, b):
                k = key(t, s)
                cur = p_idx[uid, t, s]
                if t > a:
                    prev, const = p_idx[uid, t - 1, s], 0.0
                elif init_power is not None and uid in init_power:
                    prev, const = None, float(init_power[uid])
                else:
                    continue
                # Big-M values are the largest jump each transition can produce,
                # which keeps the rows exact on integer points but much tighter
                # in the relaxation than a uniform p_max.
                span = u.p_max - u.p_min
                start, stops = Tv[t - 1, k, OFF, OU], (Tv[t - 1, k, OFL, OFF], Tv[t - 1, k, OD, OFF])
                up = {cur: 1.0, E[t, k, OU]: -u.dp_min, E[t, k, OD]: span}
                for j in stops:
                    up[j] = up.get(j, 0.0) + u.p_max
                down = {cur: 1.0, E[t, k, OD]: u.dp_min, E[t, k, OU]: -span, start: -u.p_min}
                if prev is not None:
                    up[prev] = -1.0
                    down[prev] = -1.0
                m.add_constraint(up, ">=", const, f"rampup.{uid}.t{t}.s{s}")
                m.add_constraint(down, "<=", const, f"rampdn.{uid}.t{t}.s{s}")

        # start-up costs
        for t in range(a - 1, b - 1):
            if (uid, t + 1) in layout.fixed:
                continue
            for k in keys(t + 1):
                weight = 1.0 if k is None else float(probs[k])
                m.add_objective(Tv[t, k, OFF, OU], u.pi_f * K_CURRENCY * weight)

    # balance and variable costs
    for s in scen_range:
        for t in range(a, b):
            d = m.add_var(kind=CONTINUOUS, lb=0.0, tag=VarTag("dns", None, t, s))
            sp = m.add_var(kind=CONTINUOUS, lb=0.0, tag=VarTag("spill", None, t, s))
            terms = {p_idx[u.id, t, s]: -1.0 for u in fleet}
            terms[d] = -1.0
            terms[sp] = 1.0
            m.add_constraint(terms, "=", -float(residual[s, t - scen.start_step]), f"bal.t{t}.s{s}")
            w = float(probs[s]) * dt
            for u in fleet:
                m.add_objective(p_idx[u.id, t, s], w * u.pi_v)
            m.add_objective(d, w * costs.pi_dns * K_CURRENCY)
            m.add_objective(sp, w * costs.pi_spill * K_CURRENCY)

    m.metadata.update({
        "window": (a, b),
        "n_scenarios": S,
        "probabilities": [float(p) for p in probs],
        "scenario_ids": list(scen.scenario_ids),
        "issue_time": scen.issue_time,
        "delta_t": dt,
    })
    return m


def _k(k):
    return "f" if k is None else f"s{k}"


def _step(t):
    # LP readers choke on a minus sign inside a name; the initial transition is index -1
    return f"t{t}" if t >= 0 else f"tm{-t}"


def _pair_key(pair):
    return tuple(-1 if x is None else x for x in pair)


# ---------------------------------------------------------------------------
# problem kinds


def _units_of(fleet, *kinds):
    return [u.id for u in fleet if u.kind in kinds]


def _initial_on(spec: ProblemSpec, a: int) -> dict[str, bool]:
    out = {u.id: bool(u.initial_on) for u in spec.fleet}
    if a > 0:
        # carry ON/OFF status from fixed decisions just before the window
        for u in spec.fleet:
            if (u.id, a - 1) in spec.fixed_decisions:
                out[u.id] = spec.fixed_decisions[u.id, a - 1] == 0
    if spec.initial_power is not None:
        for uid, p in spec.initial_power.items():
            out[uid] = p > 0
    if spec.initial_on is not None:
        out.update(spec.initial_on)
    return out


def _require(spec: ProblemSpec, required: set[tuple[str, int]], allowed: set[tuple[str, int]]):
    have = set(spec.fixed_decisions)
    missing = required - have
    if missing:
        sample = sorted(missing)[:3]
        raise ContractError(f"{spec.kind.value}: missing fixed decisions, e.g. {sample}")
    extra = have - allowed
    if extra:
        sample = sorted(extra)[:3]
        raise ContractError(f"{spec.kind.value}: fixed decisions not valid for this kind, e.g. {sample}")


def _layout_for(spec: ProblemSpec) -> tuple[int, int, _Layout, dict]:
    fleet, grid = spec.fleet, spec.grid
    N = grid.n_steps
    T2 = grid.study_steps
    nuc = _units_of(fleet, UnitKind.NUC)
    coal = _units_of(fleet, UnitKind.COAL)
    ccgt = _units_of(fleet, UnitKind.CCGT)
    kind = spec.kind
    lttd = grid.lttd_times.get
    a, b = 0, N
    first: set[tuple[str, int]] = set()

    def cover(units, steps):
        return {(u, t) for u in units for t in steps}

    if kind in (ProblemKind.SINGLE_PHASE, ProblemKind.DETERMINISTIC):
        sets = spec.stage_sets or StageSets.single_phase(fleet)
        first = cover(sets.omega_ft, range(N))
        if kind is ProblemKind.SINGLE_PHASE:
            _require(spec, set(), set())
        else:
            if spec.scenarios.n_scenarios != 1:
                raise ContractError("deterministic problems take exactly one scenario")
        issue = lttd("t1")
    elif kind is ProblemKind.PHASE_NUCLEAR:
        _require(spec, set(), set())
        first = cover(nuc, range(N))
        issue = lttd("t1")
    elif kind is ProblemKind.PHASE_COAL:
        need = cover(nuc, range(N))
        _require(spec, need, need)
        first = cover(coal, range(T2))
        issue = lttd("t2")
    elif kind is ProblemKind.PHASE_CCGT_FIRST:
        need = cover(nuc, range(N)) | cover(coal, range(T2))
        _require(spec, need, need)
        first = cover(ccgt, grid.block_range(1))
        issue = lttd("t31")
    elif kind is ProblemKind.PHASE_CCGT_ROLLING:
        i = spec.index
        if i is None or not 2 <= i <= grid.n_blocks:
            raise ContractError(f"rolling phase index must lie in 2..{grid.n_blocks}")
        a = grid.block_range(i).start
        need = cover(nuc, range(N)) | cover(coal, range(T2))
        allowed = need | cover(ccgt, range(a))
        _require(spec, need, allowed)
        first = cover(ccgt, grid.block_range(i))
        issue = lttd(f"t3{i}")
    elif kind in EVAL_KINDS:
        if spec.scenarios.n_scenarios != 1:
            raise ContractError("evaluation problems take exactly one scenario")
        if kind is ProblemKind.EVAL_T32:
            j = 1
        else:
            i = spec.index
            if i is None or not 3 <= i <= grid.n_blocks + 1:
                raise ContractError(f"evaluation index must lie in 3..{grid.n_blocks + 1}")
            j = i - 1
            if spec.initial_power is None or set(spec.initial_power) != {u.id for u in fleet}:
                raise ContractError("evaluation after the first block needs initial power levels of every unit")
        a = grid.block_range(j).start
        need = cover(nuc, range(a, N)) | cover(coal, range(a, T2)) | cover(ccgt, grid.block_range(j))
        allowed = cover(nuc, range(N)) | cover(coal, range(T2)) | cover(ccgt, range(grid.block_range(j).stop))
        _require(spec, need, allowed)
        issue = grid.eval_issue_time(j)
    else:  # pragma: no cover
        raise ContractError(f"unsupported kind {kind}")

    fixed = {k: v for k, v in spec.fixed_decisions.items() if a <= k[1] < b}
    shared = first | set(fixed)
    if kind in EVAL_KINDS or kind is ProblemKind.DETERMINISTIC:
        shared = set(fixed) | (first if kind is ProblemKind.DETERMINISTIC else set())
    ft_units = sorted({u for u, _ in first})
    meta = {"kind": kind.value, "index": spec.index, "lttd_issue": issue,
            "first_stage_units": ft_units,
            "first_stage_steps": sorted({t for _, t in first})}
    states = {k: v for k, v in (spec.fixed_states or {}).items() if a <= k[1] < b}
    return a, b, _Layout(shared, fixed, first, states), meta


def build_problem(spec: ProblemSpec) -> MilpModel:
    a, b, layout, meta = _layout_for(spec)
    scen = spec.scenarios
    if scen.start_step > a:
        raise ContractError(f"scenarios start at step {scen.start_step}, after the window start {a}")
    init_on = _initial_on(spec, a)
    return _assemble(spec.fleet, spec.grid, a, b, scen, layout, spec.costs, init_on,
                     spec.initial_power, meta)


def build_single_phase(spec: ProblemSpec) -> MilpModel:
    if spec.kind not in (ProblemKind.SINGLE_PHASE, ProblemKind.DETERMINISTIC):
        raise ContractError(f"build_single_phase cannot build {spec.kind.value}")
    return build_problem(spec)


def build_phase(spec: ProblemSpec) -> MilpModel:
    if spec.kind not in PHASE_KINDS:
        raise ContractError(f"build_phase cannot build {spec.kind.value}")
    return build_problem(spec)


def build_evaluation(spec: ProblemSpec) -> MilpModel:
    if spec.kind not in EVAL_KINDS and spec.kind is not ProblemKind.DETERMINISTIC:
        raise ContractError(f"build_evaluation cannot build {spec.kind.value}")
    if spec.scenarios.n_scenarios != 1:
        raise ContractError("evaluation problems take exactly one scenario")
    return build_problem(spec)


def relax_second_stage(model: MilpModel) -> MilpModel:
    """Scenario-indexed binaries become continuous in [0, 1]."""
    out = model.copy()
    for j, tag in enumerate(out.tags):
        if out.kinds[j] == BINARY and tag is not None and tag.scenario is not None:
            out.kinds[j] = CONTINUOUS
    out.metadata["relaxed"] = True
    return out


# ---------------------------------------------------------------------------
# reading solutions back


def extract_plan(model: MilpModel, x, scenario: int = 0) -> StatePlan:
    """States of every unit over the model window, seen from one scenario."""
    a, b = model.metadata["window"]
    x = np.asarray(x, dtype=float)
    best: dict[tuple[str, int], tuple[float, StateId]] = {}
    for j, tag in enumerate(model.tags):
        if tag is None or tag.role != "E" or tag.scenario not in (None, scenario):
            continue
        e = StateId[tag.state]
        cur = best.get((tag.unit, tag.time))
        if cur is None or x[j] > cur[0]:
            best[tag.unit, tag.time] = (x[j], e)
    units = list(dict.fromkeys(u for u, _ in best))
    return StatePlan({u: [best[u, t][1] for t in range(a, b)] for u in units}, start_step=a)


def extract_dispatch(model: MilpModel, x) -> dict:
    """Power per unit, dns and spill as arrays indexed [scenario, step - a]."""
    a, b = model.metadata["window"]
    S = model.metadata["n_scenarios"]
    x = np.asarray(x, dtype=float)
    power: dict[str, np.ndarray] = {}
    dns = np.zeros((S, b - a))
    spill = np.zeros((S, b - a))
    for j, tag in enumerate(model.tags):
        if tag is None:
            continue
        if tag.role == "p":
            power.setdefault(tag.unit, np.zeros((S, b - a)))[tag.scenario, tag.time - a] = x[j]
        elif tag.role == "dns":
            dns[tag.scenario, tag.time - a] = x[j]
        elif tag.role == "spill":
            spill[tag.scenario, tag.time - a] = x[j]
    return {"power": power, "dns": dns, "spill": spill, "start": a}


def off_status(model: MilpModel, x, units: Sequence[str] | None = None,
               scenario: int | None = None) -> dict[tuple[str, int], int]:
    """Rounded OFF statuses (unit, step) -> 0/1 read from the shared copies
    (or from ``scenario`` for second-stage steps when given)."""
    x = np.asarray(x, dtype=float)
    out = {}
    for j, tag in enumerate(model.tags):
        if tag is None or tag.role != "E" or tag.state != "OFF":
            continue
        if units is not None and tag.unit not in units:
            continue
        if tag.scenario is None or tag.scenario == scenario:
            out[tag.unit, tag.time] = int(round(x[j]))
    return out


def cost_breakdown(model: MilpModel, x) -> dict:
    """First-stage cost and the unweighted second-stage cost of each scenario."""
    x = np.asarray(x, dtype=float)
    probs = model.metadata["probabilities"]
    first = 0.0
    per = np.zeros(len(probs))
    for j, c in model.objective.items():
        tag = model.tags[j]
        s = None if tag is None else tag.scenario
        if s is None:
            first += c * x[j]
        else:
            per[s] += c * x[j] / probs[s] if probs[s] > 0 else 0.0
    return {"first_stage": first, "second_stage": per,
            "expected": first + float(np.dot(probs, per))}
