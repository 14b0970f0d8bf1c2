"""Case files: fleet, timeline, costs, error model and run defaults in TOML.

A case file looks like::

    [grid]
    horizon_start = 0.0      # hours; 0 is 6 a.m. of the operating day
    study_end = 10.0
    horizon_end = 24.0
    delta_t = 1.0
    block_length = 2.0
    # [grid.lttd] t1 = -8.0 ... (defaults: see timegrid.default_grid)

    [costs]
    pi_dns = 10.0            # k-currency / MWh
    pi_spill = 3.0

    [series]
    file = "base_series.csv" # relative to the case file; or synthetic_seed = 7

    [errors]
    persistence = 0.9
    max_lead = 34
    [errors.sources.pv]      # optional per-source overrides
    persistence = 0.85

    [[units]]
    id = "NUC1"
    class = "NUC"
    p_min = 180.0
    p_max = 915.0
    pi_f = 25.0              # k-currency per start-up
    pi_v = 10.0              # currency per MWh

    [run]                    # defaults the command line can override
    scenarios = 5
    ...

Unit classes default to the built-in technical constraints and can be
overridden per class in ``[classes.NUC]`` (minutes).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import tomli

from .builder import CostParams
from .scenarios import BaseSeries, ErrorModelParams, synthetic_base_series
from .timegrid import DEFAULT_CLASSES, TimeGrid, UnitClass, UnitKind, UnitSpec, default_grid


class ConfigError(ValueError):
    """The case file is malformed or inconsistent."""


@dataclass(frozen=True)
class RunDefaults:
    scenarios: int = 5
    max_dev: float = 0.10
    eval_dev: float = 0.25
    eval_count: int = 50
    select: int = 0
    select_pool: int = 100
    gap: float = 0.10
    eval_gap: float = 1e-3
    seed: int = 2024
    optimizer: str = "sto"
    framework: str = "single"
    grid_dev: tuple[float, ...] = (0.05, 0.10, 0.25)
    grid_select: tuple[int, ...] = (2, 5, 10)


@dataclass
class Case:
    name: str
    grid: TimeGrid
    fleet: list[UnitSpec]
    costs: CostParams
    base: BaseSeries
    error_params: dict[str, ErrorModelParams]
    run: RunDefaults
    source_hash: str = ""
    path: Path | None = None
    extra: dict = field(default_factory=dict)

    def errors_with(self, max_dev: float) -> dict[str, ErrorModelParams]:
        """Same persistence and lead, new maximal deviation for every source."""
        return {k: replace(v, max_dev=max_dev) for k, v in self.error_params.items()}


_KNOWN_TOP = {"name", "grid", "costs", "series", "errors", "units", "classes", "run"}


def load_case(path: str | Path) -> Case:
    path = Path(path)
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = tomli.loads(raw_bytes.decode("utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    case = parse_case(data, base_dir=path.parent)
    case.source_hash = _hash_case(raw_bytes, case)
    case.path = path
    return case


def bundled_case_path(name: str = "fleet12") -> Path:
    ref = resources.files("stochuc") / "data" / f"{name}.toml"
    return Path(str(ref))


def load_bundled(name: str = "fleet12") -> Case:
    return load_case(bundled_case_path(name))


def _hash_case(raw: bytes, case: Case) -> str:
    h = hashlib.sha256(raw)
    # the base series file is part of the case
    h.update(case.base.consumption.tobytes())
    for k in sorted(case.base.renewables):
        h.update(k.encode())
        h.update(case.base.renewables[k].tobytes())
    return h.hexdigest()


def parse_case(data: dict[str, Any], base_dir: Path = Path(".")) -> Case:
    unknown = set(data) - _KNOWN_TOP
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    try:
        grid = _parse_grid(data.get("grid", {}))
        classes = _parse_classes(data.get("classes", {}))
        fleet = _parse_units(data.get("units", []), classes)
        costs = CostParams(**_only(data.get("costs", {}), {"pi_dns", "pi_spill"}, "costs"))
        base = _parse_series(data.get("series", {}), grid, base_dir)
        errors = _parse_errors(data.get("errors", {}), base.sources)
        run = _parse_run(data.get("run", {}))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    if base.n_steps != grid.n_steps:
        raise ConfigError(f"base series has {base.n_steps} steps, grid has {grid.n_steps}")
    return Case(str(data.get("name", "case")), grid, fleet, costs, base, errors, run)


def _only(section: dict, allowed: set[str], where: str) -> dict:
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"[{where}] unknown keys {sorted(extra)}")
    return dict(section)


def _parse_grid(sec: dict) -> TimeGrid:
    sec = _only(sec, {"horizon_start", "study_end", "horizon_end", "delta_t", "block_length", "lttd"}, "grid")
    lttd = sec.pop("lttd", None)
    grid = TimeGrid(**{k: float(v) for k, v in sec.items()})
    if lttd is None:
        if grid.horizon_start == 0.0 and grid.block_length == 2.0 and grid.delta_t == 1.0:
            lttd = default_grid(grid.n_blocks).lttd_times
        else:
            lttd = _generic_lttd(grid)
    return replace(grid, lttd_times={k: float(v) for k, v in lttd.items()})


def _generic_lttd(grid: TimeGrid) -> dict[str, float]:
    L, d, t0 = grid.block_length, grid.delta_t, grid.horizon_start
    out = {"t1": t0 - 4 * L, "t2": t0 - 3 * L, "t31": t0 - 1.5 * L}
    for j in range(2, grid.n_blocks + 2):
        out[f"t3{j}"] = t0 + (j - 2) * L - d
    return out


def _parse_classes(sec: dict) -> dict[UnitKind, UnitClass]:
    out = dict(DEFAULT_CLASSES)
    for name, over in sec.items():
        kind = UnitKind(name)
        over = _only(over, {"dt_on_min", "dt_off_min", "t_on_min", "t_off_min", "t_flat", "t_on_max",
                            "n_on_max"}, f"classes.{name}")
        out[kind] = replace(out[kind], **over)
    return out


def _parse_units(rows: list, classes) -> list[UnitSpec]:
    if not rows:
        raise ConfigError("the case has no units")
    fleet = []
    for row in rows:
        row = _only(row, {"id", "class", "p_min", "p_max", "pi_f", "pi_v", "dp_min", "initial_on"}, "units")
        cls = classes[UnitKind(row.pop("class"))]
        fleet.append(UnitSpec(unit_class=cls, **row))
    ids = [u.id for u in fleet]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate unit ids")
    return fleet


def _parse_series(sec: dict, grid: TimeGrid, base_dir: Path) -> BaseSeries:
    sec = _only(sec, {"file", "synthetic_seed", "bundled"}, "series")
    if "file" in sec:
        return BaseSeries.from_csv(base_dir / sec["file"])
    if "bundled" in sec:
        return BaseSeries.from_csv(Path(str(resources.files("stochuc") / "data" / sec["bundled"])))
    return synthetic_base_series(grid, seed=int(sec.get("synthetic_seed", 7)))


def _parse_errors(sec: dict, sources: list[str]) -> dict[str, ErrorModelParams]:
    sec = dict(sec)
    per = sec.pop("sources", {})
    sec = _only(sec, {"persistence", "max_dev", "max_lead"}, "errors")
    default = ErrorModelParams(**sec)
    out = {}
    for s in sources:
        over = _only(per.get(s, {}), {"persistence", "max_dev", "max_lead"}, f"errors.sources.{s}")
        out[s] = replace(default, **over)
    unknown = set(per) - set(sources)
    if unknown:
        raise ConfigError(f"error parameters for unknown sources {sorted(unknown)}")
    return out


def _parse_run(sec: dict) -> RunDefaults:
    allowed = set(RunDefaults.__dataclass_fields__)
    sec = _only(sec, allowed, "run")
    for k in ("grid_dev", "grid_select"):
        if k in sec:
            sec[k] = tuple(sec[k])
    return RunDefaults(**sec)
