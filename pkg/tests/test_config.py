from pathlib import Path

import pytest
import tomli

from stochuc.config import ConfigError, load_bundled, load_case, parse_case
from stochuc.orchestrator import RunConfig
from stochuc.timegrid import UnitKind

MINI = Path(__file__).parent / "data" / "mini.toml"


def _mini() -> dict:
    data = tomli.loads(MINI.read_text())
    data["series"]["file"] = str(MINI.parent / "mini_series.csv")
    return data


def test_bundled_cases_load():
    t3 = load_bundled("fleet12")
    kinds = [u.kind for u in t3.fleet]
    assert (kinds.count(UnitKind.NUC), kinds.count(UnitKind.CCGT), kinds.count(UnitKind.OCGT)) == (6, 3, 3)
    assert t3.grid.n_steps == 24 and t3.grid.n_blocks == 5
    desk = load_bundled("desk")
    assert desk.grid.n_blocks == 4 and desk.base.n_steps == desk.grid.n_steps
    assert set(desk.error_params) == {"consumption", "pv", "wind"}


def test_generic_decision_times_precede_their_blocks():
    g = load_bundled("desk").grid
    assert g.lttd_times["t1"] < g.lttd_times["t2"] < g.lttd_times["t31"] < 0
    for j in range(1, g.n_blocks + 1):
        assert g.eval_issue_time(j) < g.time_of(g.block_range(j).start)


def test_hash_tracks_content(tmp_path):
    a = load_case(MINI)
    assert a.source_hash == load_case(MINI).source_hash
    copy = tmp_path / "m.toml"
    copy.write_text(MINI.read_text().replace("mini_series.csv", str(MINI.parent / "mini_series.csv")))
    assert load_case(copy).source_hash != a.source_hash


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra={}),
    lambda d: d["grid"].update(block_length=3.0),
    lambda d: d["units"][0].update(colour="red"),
    lambda d: d["units"].append(dict(d["units"][0])),
    lambda d: d["units"][1].update({"class": "STEAM"}),
    lambda d: d["errors"].update(persistence=1.2),
    lambda d: d["run"].update(unknown=1),
    lambda d: d.update(units=[]),
    lambda d: d["grid"].update(horizon_end=7.0),
])
def test_malformed_cases_are_rejected(mutate):
    data = _mini()
    mutate(data)
    with pytest.raises(ConfigError):
        parse_case(data)


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_case(tmp_path / "none.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid\n")
    with pytest.raises(ConfigError):
        load_case(bad)


def test_class_overrides():
    data = _mini()
    data["classes"] = {"CCGT": {"t_on_min": 120}}
    case = parse_case(data)
    ccgt = next(u for u in case.fleet if u.kind is UnitKind.CCGT)
    assert ccgt.unit_class.t_on_min == 120


def test_run_config_overrides_and_validation():
    case = load_case(MINI)
    cfg = RunConfig.from_case(case, scenarios=4, seed=None)
    assert cfg.scenarios == 4 and cfg.seed == 7
    with pytest.raises(ConfigError):
        RunConfig.from_case(case, scenarios=0)
    with pytest.raises(ConfigError):
        RunConfig.from_case(case, optimizer="best")
    with pytest.raises(ConfigError):
        RunConfig.from_case(case, select=7)
