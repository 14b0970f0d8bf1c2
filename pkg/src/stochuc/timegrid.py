"""Timeline, unit fleet and the four-state unit automaton.

Times are expressed in hours relative to the start of the optimization
horizon (``horizon_start`` is usually 0.0).  Durations of the technical
constraints are given in minutes and converted to whole timesteps by
ceiling.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

UNIT_ID_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*$")


class StructuralError(ValueError):
    """Plan and grid (or fleet) disagree on their dimensions."""


class StateId(enum.IntEnum):
    OU = 0
    OD = 1
    OFL = 2
    OFF = 3

    @property
    def is_on(self) -> bool:
        return self is not StateId.OFF


STATES: tuple[StateId, ...] = tuple(StateId)

# Rows are the state at t, columns the state at t + 1.
_ALLOWED = {
    StateId.OU: {StateId.OU, StateId.OFL},
    StateId.OD: {StateId.OD, StateId.OFL, StateId.OFF},
    StateId.OFL: {StateId.OU, StateId.OD, StateId.OFL, StateId.OFF},
    StateId.OFF: {StateId.OU, StateId.OFF},
}

# Two power variations in the same direction on consecutive steps are not
# allowed even though the transition matrix itself permits them.
NO_REPEAT_VARIATION = frozenset({StateId.OU, StateId.OD})


def transition_allowed(e_i: StateId, e_f: StateId) -> bool:
    """Legality of the transition ``e_i`` (at t) -> ``e_f`` (at t + 1)."""
    return StateId(e_f) in _ALLOWED[StateId(e_i)]


def transition_usable(e_i: StateId, e_f: StateId) -> bool:
    """Allowed by the matrix and not a repeated OU/OD variation."""
    return transition_allowed(e_i, e_f) and not (e_i == e_f and e_i in NO_REPEAT_VARIATION)


def minutes_to_steps(minutes: float, delta_t: float) -> int:
    """Ceiling conversion: a physical minimum duration is never shortened."""
    if minutes < 0:
        raise ValueError(f"negative duration: {minutes}")
    steps = minutes / (60.0 * delta_t)
    # tolerate float noise such as 2.0000000001
    return int(math.ceil(steps - 1e-9))


class UnitKind(str, enum.Enum):
    NUC = "NUC"
    COAL = "COAL"
    CCGT = "CCGT"
    OCGT = "OCGT"


@dataclass(frozen=True)
class UnitClass:
    name: UnitKind
    dt_on_min: float
    dt_off_min: float
    t_on_min: float
    t_off_min: float
    t_flat: float
    t_on_max: float | None = None
    n_on_max: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "name", UnitKind(self.name))
        for attr in ("dt_on_min", "dt_off_min", "t_on_min", "t_off_min", "t_flat"):
            if getattr(self, attr) < 0:
                raise ValueError(f"{self.name.value}.{attr} must be >= 0")
        has_max = self.t_on_max is not None or self.n_on_max is not None
        if (self.name is UnitKind.OCGT) != has_max:
            raise ValueError("t_on_max / n_on_max are defined for OCGT units only")
        if self.name is UnitKind.OCGT and (self.t_on_max is None or self.n_on_max is None):
            raise ValueError("OCGT needs both t_on_max and n_on_max")
        if self.t_on_max is not None and self.t_on_max < 0:
            raise ValueError("t_on_max must be >= 0")
        if self.n_on_max is not None and self.n_on_max < 0:
            raise ValueError("n_on_max must be >= 0")


# Technical constraints per class, minutes.
DEFAULT_CLASSES: dict[UnitKind, UnitClass] = {
    UnitKind.NUC: UnitClass(UnitKind.NUC, 600, 60, 1440, 1440, 90),
    UnitKind.COAL: UnitClass(UnitKind.COAL, 480, 15, 480, 480, 15),
    UnitKind.CCGT: UnitClass(UnitKind.CCGT, 180, 15, 180, 120, 15),
    UnitKind.OCGT: UnitClass(UnitKind.OCGT, 15, 15, 60, 30, 15, t_on_max=480, n_on_max=2),
}


@dataclass(frozen=True)
class UnitSpec:
    id: str
    unit_class: UnitClass
    p_min: float
    p_max: float
    pi_f: float  # k-currency per start-up
    pi_v: float  # currency per MWh
    dp_min: float = 1.0
    initial_on: bool | None = None

    def __post_init__(self):
        if not UNIT_ID_RE.match(self.id):
            raise ValueError(f"unit id {self.id!r} must be alphanumeric and start with a letter")
        if not 0 <= self.p_min <= self.p_max:
            raise ValueError(f"{self.id}: need 0 <= p_min <= p_max")
        if self.pi_f < 0 or self.pi_v < 0:
            raise ValueError(f"{self.id}: costs must be nonnegative")
        if not 0 < self.dp_min <= self.p_max:
            raise ValueError(f"{self.id}: need 0 < dp_min <= p_max")
        if self.initial_on is None:
            object.__setattr__(self, "initial_on", self.kind is UnitKind.NUC)
        if self.kind is UnitKind.NUC and not self.initial_on:
            raise ValueError(f"{self.id}: nuclear units start ON")

    @property
    def kind(self) -> UnitKind:
        return self.unit_class.name

    def steps(self, delta_t: float) -> "UnitSteps":
        c = self.unit_class
        return UnitSteps(
            on_min=minutes_to_steps(c.t_on_min, delta_t),
            off_min=minutes_to_steps(c.t_off_min, delta_t),
            flat=minutes_to_steps(c.t_flat, delta_t),
            on_max=None if c.t_on_max is None else minutes_to_steps(c.t_on_max, delta_t),
            n_on_max=c.n_on_max,
        )


@dataclass(frozen=True)
class UnitSteps:
    """Duration constraints of one unit, in timesteps."""

    on_min: int
    off_min: int
    flat: int
    on_max: int | None = None
    n_on_max: int | None = None


@dataclass(frozen=True)
class TimeGrid:
    horizon_start: float = 0.0
    study_end: float = 10.0
    horizon_end: float = 24.0
    delta_t: float = 1.0
    block_length: float = 2.0
    lttd_times: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        t1, t2, t3 = self.horizon_start, self.study_end, self.horizon_end
        if not t1 < t2 <= t3:
            raise ValueError("need horizon_start < study_end <= horizon_end")
        if self.delta_t <= 0 or self.block_length <= 0:
            raise ValueError("delta_t and block_length must be positive")
        if not _is_multiple(t2 - t1, self.block_length):
            raise ValueError("study period must be a whole number of blocks")
        if not _is_multiple(t3 - t1, self.delta_t) or not _is_multiple(self.block_length, self.delta_t):
            raise ValueError("horizon and blocks must be whole numbers of timesteps")
        object.__setattr__(self, "lttd_times", dict(self.lttd_times))
        values = list(self.lttd_times.values())
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("lttd_times must be strictly increasing")
        for name, when in self.lttd_times.items():
            if when >= self.committed_from(name):
                raise ValueError(f"LTTD {name} at {when} does not precede the period it commits")

    @property
    def n_steps(self) -> int:
        return int(round((self.horizon_end - self.horizon_start) / self.delta_t))

    @property
    def block_steps(self) -> int:
        return int(round(self.block_length / self.delta_t))

    @property
    def n_blocks(self) -> int:
        return int(round((self.study_end - self.horizon_start) / self.block_length))

    @property
    def study_steps(self) -> int:
        return self.n_blocks * self.block_steps

    def step_of(self, when: float) -> int:
        """Index of the timestep starting at time ``when``."""
        return int(round((when - self.horizon_start) / self.delta_t))

    def time_of(self, step: int) -> float:
        return self.horizon_start + step * self.delta_t

    def block_range(self, j: int) -> range:
        """Steps of the j-th study block, 1-based."""
        if not 1 <= j <= self.n_blocks:
            raise ValueError(f"block {j} outside 1..{self.n_blocks}")
        b = self.block_steps
        return range((j - 1) * b, j * b)

    def committed_from(self, lttd_name: str) -> float:
        """Start of the period a decision taken at ``lttd_name`` commits."""
        if lttd_name in ("t1", "t2"):
            return self.horizon_start
        m = re.fullmatch(r"t3(\d+)", lttd_name)
        if m:
            j = int(m.group(1))
            # t3j commits block j; evaluation issue times go one past the last block
            return self.horizon_start + (min(j, self.n_blocks + 1) - 1) * self.block_length
        raise ValueError(f"unknown LTTD name {lttd_name!r}")

    def lttd(self, name: str) -> float:
        try:
            return self.lttd_times[name]
        except KeyError:
            raise KeyError(f"LTTD {name!r} not configured") from None

    def eval_issue_time(self, j: int) -> float:
        """Issue time of the evaluation scenario used for block j (1-based)."""
        name = f"t3{j + 1}"
        if name in self.lttd_times:
            return self.lttd_times[name]
        # default: one timestep before the block starts
        return self.horizon_start + (j - 1) * self.block_length - self.delta_t


def _is_multiple(x: float, unit: float) -> bool:
    q = x / unit
    return abs(q - round(q)) < 1e-9


def default_grid(n_blocks: int = 5) -> TimeGrid:
    """24 hourly steps from 6 a.m.; LTTDs at 10 p.m., midnight, 3 a.m., then 5 a.m., 7 a.m., ..."""
    lttd = {"t1": -8.0, "t2": -6.0, "t31": -3.0}
    for j in range(2, n_blocks + 2):
        lttd[f"t3{j}"] = (j - 2) * 2.0 - 1.0
    return TimeGrid(0.0, 2.0 * n_blocks, 24.0, 1.0, 2.0, lttd)


@dataclass(frozen=True)
class StageSets:
    omega_ft: frozenset[str]
    omega_st: frozenset[str]
    omega_n: frozenset[str] = frozenset()
    omega_nr: frozenset[str] = frozenset()
    first_stage_window: tuple[int, int] | None = None

    def __post_init__(self):
        for name in ("omega_ft", "omega_st", "omega_n", "omega_nr"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if self.omega_ft & self.omega_st:
            raise ValueError("first- and second-stage unit sets overlap")

    @property
    def omega_t(self) -> frozenset[str]:
        return self.omega_ft | self.omega_st

    @classmethod
    def single_phase(cls, fleet: Sequence[UnitSpec], renewables: Sequence[str] = ()) -> "StageSets":
        ft = {u.id for u in fleet if u.kind is not UnitKind.OCGT}
        st = {u.id for u in fleet if u.kind is UnitKind.OCGT}
        nuc = {u.id for u in fleet if u.kind is UnitKind.NUC}
        return cls(frozenset(ft), frozenset(st), frozenset(nuc), frozenset(renewables))


# --------------------------------------------------------------------------
# plans


@dataclass
class StatePlan:
    """One state per unit and timestep; transitions are derived."""

    states: dict[str, list[StateId]]
    start_step: int = 0

    def __post_init__(self):
        self.states = {u: [StateId(s) for s in seq] for u, seq in self.states.items()}
        lengths = {len(seq) for seq in self.states.values()}
        if len(lengths) > 1:
            raise StructuralError("all units need the same number of timesteps")

    @property
    def n_steps(self) -> int:
        return len(next(iter(self.states.values()), []))

    def transitions(self, unit: str) -> list[tuple[StateId, StateId]]:
        seq = self.states[unit]
        return list(zip(seq, seq[1:]))

    def off_matrix(self, units: Sequence[str] | None = None) -> dict[str, list[int]]:
        units = list(self.states) if units is None else units
        return {u: [int(s is StateId.OFF) for s in self.states[u]] for u in units}

    @classmethod
    def from_strings(cls, states: Mapping[str, Sequence[str]], start_step: int = 0) -> "StatePlan":
        return cls({u: [StateId[s] for s in seq] for u, seq in states.items()}, start_step)


@dataclass(frozen=True)
class Violation:
    unit: str
    step: int
    rule: str

    def __str__(self) -> str:
        return f"{self.unit}@{self.step}: {self.rule}"


def validate_plan(plan: StatePlan, fleet: Sequence[UnitSpec], grid: TimeGrid | None = None,
                  n_steps: int | None = None,
                  initial_on: Mapping[str, bool] | None = None) -> list[Violation]:
    """Check a plan against the transition table and every duration rule.

    Independent of the MILP: works directly on state sequences.  Windows
    are truncated at the end of the plan.  ``initial_on`` overrides the
    state each unit had just before the first step.
    """
    expected = n_steps if n_steps is not None else (grid.n_steps - plan.start_step if grid else plan.n_steps)
    delta_t = grid.delta_t if grid is not None else 1.0
    by_id = {u.id: u for u in fleet}
    missing = set(by_id) - set(plan.states)
    if missing:
        raise StructuralError(f"plan lacks units {sorted(missing)}")
    if set(plan.states) - set(by_id):
        raise StructuralError(f"plan has unknown units {sorted(set(plan.states) - set(by_id))}")
    if plan.n_steps != expected:
        raise StructuralError(f"plan covers {plan.n_steps} steps, expected {expected}")

    out: list[Violation] = []
    for uid, unit in by_id.items():
        seq = plan.states[uid]
        steps = unit.steps(delta_t)
        init_on = unit.initial_on if initial_on is None else initial_on.get(uid, unit.initial_on)
        out.extend(_check_unit(uid, seq, steps, init_on, plan.start_step))
    return out


def _check_unit(uid: str, seq: list[StateId], st: UnitSteps, init_on: bool, t0: int) -> list[Violation]:
    out = []
    n = len(seq)
    off = StateId.OFF

    def v(i, rule):
        out.append(Violation(uid, t0 + i, rule))

    if not init_on and seq and seq[0] not in (StateId.OU, off):
        v(0, "unit initially OFF must start in OU or stay OFF")

    for i in range(n - 1):
        a, b = seq[i], seq[i + 1]
        if not transition_allowed(a, b):
            v(i + 1, f"forbidden transition {a.name}->{b.name}")
        elif a == b and a in NO_REPEAT_VARIATION:
            v(i + 1, f"consecutive {a.name} forbidden")

    # (index where the event's new state first holds)
    starts = [i + 1 for i in range(n - 1) if seq[i] is off and seq[i + 1] is not off]
    stops = [i + 1 for i in range(n - 1) if seq[i] is not off and seq[i + 1] is off]
    if n and not init_on and seq[0] is not off:
        starts.insert(0, 0)
    if n and init_on and seq[0] is off:
        stops.insert(0, 0)

    for i in range(n - 1):
        if seq[i] in NO_REPEAT_VARIATION and seq[i + 1] is StateId.OFL:
            for k in range(i + 1, min(n, i + 1 + st.flat)):
                if seq[k] is not StateId.OFL:
                    v(k, f"flat duration: OFL required for {st.flat} steps after a variation")
                    break
    for s in starts:
        for k in range(s, min(n, s + st.on_min)):
            if seq[k] is off:
                v(k, f"minimum ON duration {st.on_min} steps")
                break
    for s in stops:
        for k in range(s, min(n, s + st.off_min)):
            if seq[k] is not off:
                v(k, f"minimum OFF duration {st.off_min} steps")
                break
    if st.on_max is not None:
        run = 0
        for k in range(n):
            run = run + 1 if seq[k] is not off else 0
            if run == st.on_max + 1:
                v(k, f"maximum ON duration {st.on_max} steps")
    if st.n_on_max is not None and len(starts) > st.n_on_max:
        v(starts[st.n_on_max], f"more than {st.n_on_max} start-ups")
    return out
