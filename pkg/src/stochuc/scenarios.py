"""Unbiased consumption / renewable scenarios with lead-time-stabilized errors.

A forecast of ``y`` issued at time ``t`` for lead ``k`` is ``y * (1 + eps_k)``
where ``eps`` follows a moving average of i.i.d. normal shocks with
geometric coefficients ``phi**i``.  The shock standard deviation is chosen
so that ``3 * std(eps_k)`` tends to the maximal deviation ``m``.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .timegrid import TimeGrid

# Seed namespaces keep training, evaluation and pre-evaluation draws disjoint.
NS_TRAIN = 1
NS_EVAL = 2
NS_SELECT = 3

CONSUMPTION = "consumption"


def ma_coefficient(phi: float, i: int) -> float:
    if not 0 <= phi < 1:
        raise ValueError("persistence must lie in [0, 1)")
    if i < 1:
        raise ValueError("moving-average coefficients start at i = 1")
    return phi ** i


def variance_factor(phi: float, k: int) -> float:
    """Var(eps_k) / sigma**2 = 1 + phi**2 + ... + phi**(2(k-1))."""
    if not 0 <= phi < 1:
        raise ValueError("persistence must lie in [0, 1)")
    if k < 1:
        raise ValueError("lead must be >= 1")
    r = phi * phi
    if r == 0.0:
        return 1.0
    return (1.0 - r ** k) / (1.0 - r)


def asymptotic_variance_factor(phi: float) -> float:
    if not 0 <= phi < 1:
        raise ValueError("persistence must lie in [0, 1)")
    return 1.0 / (1.0 - phi * phi)


def calibrate_sigma(m: float, phi: float) -> float:
    """Shock std such that ``m`` is the three-sigma bound of the stabilized error."""
    if m < 0:
        raise ValueError("max deviation must be >= 0")
    return m / (3.0 * math.sqrt(asymptotic_variance_factor(phi)))


@dataclass(frozen=True)
class ErrorModelParams:
    persistence: float = 0.9
    max_dev: float = 0.1
    max_lead: int = 34

    def __post_init__(self):
        if not 0 <= self.persistence < 1:
            raise ValueError("persistence must lie in [0, 1)")
        if self.max_dev < 0:
            raise ValueError("max_dev must be >= 0")
        if self.max_lead < 1:
            raise ValueError("max_lead must be >= 1")

    @property
    def sigma(self) -> float:
        return calibrate_sigma(self.max_dev, self.persistence)


def _ma_matrix(phi: float, K: int) -> np.ndarray:
    """Lower-triangular C with C[k, j] = phi**(k - j): eps = C @ eta."""
    idx = np.arange(K)
    lag = idx[:, None] - idx[None, :]
    C = np.where(lag >= 0, float(phi) ** np.maximum(lag, 0), 0.0)
    return C


def generate_errors(params: ErrorModelParams, K: int | None = None, seed=None,
                    size: int | None = None) -> np.ndarray:
    """Draw eps_1..eps_K; shape (K,) or (size, K).

    ``seed`` may be an int, a ``np.random.SeedSequence`` or a ``Generator``.
    """
    K = params.max_lead if K is None else K
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = (K,) if size is None else (size, K)
    sigma = params.sigma
    if sigma == 0.0:
        return np.zeros(shape)
    eta = rng.normal(0.0, sigma, size=shape)
    C = _ma_matrix(params.persistence, K)
    return eta @ C.T


@dataclass
class BaseSeries:
    """True trajectories over the whole horizon, one value per timestep (MW)."""

    consumption: np.ndarray
    renewables: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.consumption = np.asarray(self.consumption, dtype=float)
        self.renewables = {k: np.asarray(v, dtype=float) for k, v in self.renewables.items()}
        n = len(self.consumption)
        for name, values in self.renewables.items():
            if len(values) != n:
                raise ValueError(f"series {name} has {len(values)} values, expected {n}")
            if (values < 0).any():
                raise ValueError(f"renewable series {name} has negative values")
        if (self.consumption < 0).any():
            raise ValueError("consumption has negative values")

    @property
    def n_steps(self) -> int:
        return len(self.consumption)

    @property
    def sources(self) -> list[str]:
        return [CONSUMPTION, *self.renewables]

    def series(self, source: str) -> np.ndarray:
        return self.consumption if source == CONSUMPTION else self.renewables[source]

    @property
    def residual(self) -> np.ndarray:
        return self.consumption - sum(self.renewables.values(), np.zeros(self.n_steps))

    def to_csv(self, path: str | Path, grid: TimeGrid | None = None) -> None:
        cols = self.sources
        lines = ["step,time," + ",".join(cols)]
        for t in range(self.n_steps):
            when = grid.time_of(t) if grid else float(t)
            vals = ",".join(repr(float(self.series(c)[t])) for c in cols)
            lines.append(f"{t},{when!r},{vals}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "BaseSeries":
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=float, encoding="utf-8")
        names = [n for n in data.dtype.names if n not in ("step", "time")]
        if CONSUMPTION not in names:
            raise ValueError(f"{path}: missing consumption column")
        return cls(np.atleast_1d(data[CONSUMPTION]),
                   {n: np.atleast_1d(data[n]) for n in names if n != CONSUMPTION})


@dataclass
class ScenarioSet:
    issue_time: float
    start_step: int
    consumption: np.ndarray            # (M, W)
    renewables: dict[str, np.ndarray]  # name -> (M, W)
    probabilities: np.ndarray          # (M,)
    seed: int | None = None
    namespace: int | None = None
    scenario_ids: list[int] = field(default_factory=list)
    params: dict[str, ErrorModelParams] = field(default_factory=dict)

    def __post_init__(self):
        self.consumption = np.atleast_2d(np.asarray(self.consumption, dtype=float))
        self.renewables = {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in self.renewables.items()}
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        M, W = self.consumption.shape
        if self.probabilities.shape != (M,):
            raise ValueError("one probability per scenario")
        if M == 0:
            raise ValueError("empty scenario set")
        if abs(self.probabilities.sum() - 1.0) > 1e-9 or (self.probabilities < 0).any():
            raise ValueError("scenario probabilities must be nonnegative and sum to 1")
        for name, v in self.renewables.items():
            if v.shape != (M, W):
                raise ValueError(f"renewable {name} has shape {v.shape}, expected {(M, W)}")
        if not self.scenario_ids:
            self.scenario_ids = list(range(M))

    @property
    def n_scenarios(self) -> int:
        return self.consumption.shape[0]

    @property
    def n_steps(self) -> int:
        return self.consumption.shape[1]

    @property
    def steps(self) -> range:
        return range(self.start_step, self.start_step + self.n_steps)

    @property
    def residual(self) -> np.ndarray:
        total = np.zeros_like(self.consumption)
        for v in self.renewables.values():
            total = total + v
        return self.consumption - total

    def residual_at(self, s: int, step: int) -> float:
        return float(self.residual[s, step - self.start_step])

    def restrict(self, start_step: int) -> "ScenarioSet":
        """Drop the steps before ``start_step``."""
        off = start_step - self.start_step
        if off < 0 or off >= self.n_steps:
            raise ValueError("restriction outside the covered window")
        return ScenarioSet(self.issue_time, start_step, self.consumption[:, off:],
                           {k: v[:, off:] for k, v in self.renewables.items()},
                           self.probabilities.copy(), self.seed, self.namespace,
                           list(self.scenario_ids), dict(self.params))

    def subset(self, indices: Sequence[int]) -> "ScenarioSet":
        """Keep the listed scenarios with uniform probabilities."""
        idx = list(indices)
        if not idx:
            raise ValueError("empty scenario selection")
        probs = np.full(len(idx), 1.0 / len(idx))
        return ScenarioSet(self.issue_time, self.start_step, self.consumption[idx],
                           {k: v[idx] for k, v in self.renewables.items()}, probs,
                           self.seed, self.namespace, [self.scenario_ids[i] for i in idx],
                           dict(self.params))

    @classmethod
    def from_base(cls, base: BaseSeries, issue_time: float, start_step: int,
                  end_step: int | None = None) -> "ScenarioSet":
        """Single scenario equal to the base series (the mean of the unbiased model)."""
        end = base.n_steps if end_step is None else end_step
        return cls(issue_time, start_step, base.consumption[None, start_step:end],
                   {k: v[None, start_step:end] for k, v in base.renewables.items()},
                   np.ones(1))

    # -- columnar text files -------------------------------------------
    def to_text(self) -> str:
        header = {
            "issue_time": self.issue_time,
            "start_step": self.start_step,
            "seed": self.seed,
            "namespace": self.namespace,
            "scenario_ids": self.scenario_ids,
            "probabilities": [float(p) for p in self.probabilities],
            "params": {k: [p.persistence, p.max_dev, p.max_lead] for k, p in sorted(self.params.items())},
        }
        quantities = [(CONSUMPTION, self.consumption), *sorted(self.renewables.items())]
        cols = ["step"] + [f"{q}:s{i}" for q, _ in quantities for i in range(self.n_scenarios)]
        buf = io.StringIO()
        buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
        buf.write(",".join(cols) + "\n")
        for w in range(self.n_steps):
            row = [str(self.start_step + w)]
            row += [repr(float(arr[i, w])) for _, arr in quantities for i in range(self.n_scenarios)]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "ScenarioSet":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ValueError("missing scenario-set header")
        header = json.loads(lines[0][2:])
        cols = lines[1].split(",")
        rows = [list(map(float, ln.split(","))) for ln in lines[2:] if ln.strip()]
        table = np.array(rows, dtype=float).reshape(len(rows), len(cols))
        series: dict[str, dict[int, np.ndarray]] = {}
        for j, c in enumerate(cols[1:], start=1):
            q, s = c.rsplit(":s", 1)
            series.setdefault(q, {})[int(s)] = table[:, j]

        def stack(q):
            return np.array([series[q][i] for i in sorted(series[q])])

        params = {k: ErrorModelParams(*v) for k, v in header["params"].items()}
        return cls(header["issue_time"], header["start_step"], stack(CONSUMPTION),
                   {q: stack(q) for q in series if q != CONSUMPTION},
                   np.array(header["probabilities"]), header["seed"], header["namespace"],
                   header["scenario_ids"], params)

    @classmethod
    def read(cls, path: str | Path) -> "ScenarioSet":
        return cls.from_text(Path(path).read_text())


def _seed_sequence(seed: int, namespace: int, issue_key: int, scenario: int, source: int):
    return np.random.SeedSequence([int(seed), int(namespace), int(issue_key), int(scenario), int(source)])


def _issue_key(issue_time: float) -> int:
    # issue times are multiples of minutes; shift to keep the entropy word nonnegative
    return int(round(issue_time * 60)) + 10 ** 6


def generate_scenario_set(base: BaseSeries, grid: TimeGrid, issue_time: float,
                          window: tuple[int, int], M: int,
                          params: ErrorModelParams | Mapping[str, ErrorModelParams],
                          seed: int, namespace: int = NS_TRAIN,
                          scenario_ids: Sequence[int] | None = None) -> ScenarioSet:
    """Perturb every source of ``base`` over the steps ``window`` = [start, end).

    Scenario ``i`` uses its own seed substream derived from (seed, namespace,
    issue time, i, source), so any scenario can be regenerated alone.
    """
    start, end = window
    if not 0 <= start < end <= base.n_steps:
        raise ValueError(f"window {window} outside the horizon [0, {base.n_steps})")
    first_lead = (grid.time_of(start) - issue_time) / grid.delta_t
    if first_lead < 1 - 1e-9:
        raise ValueError("scenario window must start after its issue time")
    ids = list(range(M)) if scenario_ids is None else list(scenario_ids)
    if len(ids) != M:
        raise ValueError("need one scenario id per scenario")
    per_source = _per_source_params(params, base.sources)

    leads = np.array([int(round((grid.time_of(t) - issue_time) / grid.delta_t))
                      for t in range(start, end)])
    K = int(leads.max())
    data = {src: np.empty((M, end - start)) for src in base.sources}
    for row, sid in enumerate(ids):
        for j, src in enumerate(base.sources):
            p = per_source[src]
            eps = generate_errors(p, K, _seed_sequence(seed, namespace, _issue_key(issue_time), sid, j))
            y = base.series(src)[start:end]
            data[src][row] = np.maximum(y * (1.0 + eps[leads - 1]), 0.0)
    probs = np.full(M, 1.0 / M)
    return ScenarioSet(issue_time, start, data[CONSUMPTION],
                       {k: v for k, v in data.items() if k != CONSUMPTION}, probs,
                       seed, namespace, ids, {k: per_source[k] for k in base.sources})


def _per_source_params(params, sources) -> dict[str, ErrorModelParams]:
    if isinstance(params, ErrorModelParams):
        return {s: params for s in sources}
    out = dict(params)
    default = out.get("default")
    for s in sources:
        if s not in out:
            if default is None:
                raise ValueError(f"no error-model parameters for source {s}")
            out[s] = default
    return {s: out[s] for s in sources}


def synthetic_base_series(grid: TimeGrid, seed: int = 7, *, consumption_level: float = 5600.0,
                          pv_peak: float = 3400.0, wind_level: float = 900.0) -> BaseSeries:
    """Low-demand / high-renewable day starting at 6 a.m.

    Consumption has a morning and an evening peak, PV is bell-shaped around
    1 p.m., wind is a slowly varying positive signal.
    """
    n = grid.n_steps
    hours = (6.0 + np.array([grid.time_of(t) for t in range(n)])) % 24.0
    cons = consumption_level * (
        1.0
        - 0.16 * np.cos(2 * np.pi * (hours - 4.0) / 24.0)
        + 0.06 * np.exp(-0.5 * ((hours - 9.0) / 1.6) ** 2)
        + 0.14 * np.exp(-0.5 * ((hours - 20.5) / 1.8) ** 2)
    )
    pv = pv_peak * np.exp(-0.5 * ((hours - 13.0) / 2.6) ** 2)
    pv[(hours < 6.5) | (hours > 20.5)] = 0.0
    rng = np.random.default_rng(seed)
    wind = np.empty(n)
    level = 0.0
    for t in range(n):
        level = 0.85 * level + rng.normal(0.0, 0.08)
        wind[t] = wind_level * max(0.2, 1.0 + level)
    return BaseSeries(np.round(cons, 3), {"pv": np.round(pv, 3), "wind": np.round(wind, 3)})
