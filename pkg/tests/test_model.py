import math

import highspy
import numpy as np
import pytest

from stochuc.builder import ProblemKind, ProblemSpec, build_problem
from stochuc.config import load_bundled
from stochuc.model import BINARY, MilpModel, VarTag, read_solution, write_solution
from stochuc.scenarios import ScenarioSet, generate_scenario_set
from stochuc.solver import solve
from stochuc.timegrid import DEFAULT_CLASSES, TimeGrid, UnitKind, UnitSpec

from conftest import tiny_grid


def _ocgt_model(n_steps=2):
    unit = UnitSpec("G1", DEFAULT_CLASSES[UnitKind.OCGT], 50, 150, 5, 40, initial_on=False)
    scen = ScenarioSet(-1.0, 0, np.full((1, n_steps), 100.0), {}, np.ones(1))
    return build_problem(ProblemSpec(ProblemKind.DETERMINISTIC, [unit], tiny_grid(n_steps), scen))


def _assert_same(a: MilpModel, b: MilpModel):
    assert a.names == b.names
    assert a.kinds == b.kinds
    assert a.lb == b.lb and a.ub == b.ub
    assert a.objective == b.objective
    assert a.n_constraints == b.n_constraints
    for ca, cb in zip(a.constraints, b.constraints):
        assert ca.name == cb.name and ca.sense == cb.sense and ca.rhs == cb.rhs
        assert dict(zip(ca.idx.tolist(), ca.coef.tolist())) == dict(zip(cb.idx.tolist(), cb.coef.tolist()))


def test_single_unit_variable_count():
    # 4 states x 2 steps, 16 transitions between the steps, 16 initial
    # transitions, then power, dns and spill per step
    m = _ocgt_model()
    assert m.n_vars == 4 * 2 + 16 + 16 + 2 + 2 + 2 == 46
    roles = [t.role for t in m.tags]
    assert roles.count("E") == 8 and roles.count("T") == 16 and roles.count("T0") == 16


def test_single_unit_free_binaries():
    # initially OFF: only OFF->OFF and OFF->OU can open the horizon, and only
    # 9 of the 16 transitions between steps are usable
    m = _ocgt_model()
    assert len(m.free_binaries()) == 8 + 9 + 2 == 19


def test_coordinate_names_round_trip():
    for tag in (VarTag("E", "N1", 3, None, "OFF"), VarTag("dns", None, 0, 2), VarTag("T0", "C1", None, 1, "OFF_OU")):
        assert VarTag.parse(tag.name) == tag
    with pytest.raises(ValueError):
        VarTag.parse("a.b")


def test_balance_row_shape():
    m = _ocgt_model()
    con = next(c for c in m.constraints if c.name == "bal.t1.s0")
    coef = {m.tags[j].role: v for j, v in zip(con.idx, con.coef)}
    assert coef == {"p": -1.0, "dns": -1.0, "spill": 1.0}
    assert con.sense == "=" and con.rhs == -100.0


def test_model_guards():
    m = MilpModel()
    x = m.add_var("x", BINARY, lb=-3, ub=7)
    assert (m.lb[x], m.ub[x]) == (0.0, 1.0)
    with pytest.raises(ValueError):
        m.add_var("x")
    with pytest.raises(ValueError):
        m.add_var("y", lb=2, ub=1)
    with pytest.raises(ValueError):
        m.add_constraint({x: 1.0}, "<", 1)
    with pytest.raises(IndexError):
        m.add_constraint({5: 1.0}, "<=", 1)


def test_max_violation():
    m = MilpModel()
    x = m.add_var("x", ub=4)
    y = m.add_var("y", lb=-math.inf)
    m.add_constraint({x: 1.0, y: 1.0}, "=", 3)
    assert m.max_violation([1.0, 2.0]) == 0.0
    assert m.max_violation([5.0, -2.0]) == pytest.approx(1.0)


def test_lp_round_trip_small():
    m = _ocgt_model(3)
    _assert_same(MilpModel.from_lp(m.to_lp()), m)


def test_lp_round_trip_preserves_infinite_bounds(tmp_path):
    m = MilpModel()
    a = m.add_var("a", lb=-math.inf)
    b = m.add_var("b", lb=-math.inf, ub=math.inf)
    c = m.add_var("c", lb=2.5, ub=2.5)
    m.add_constraint({a: 1e-7, b: -3.25, c: 1.0}, ">=", -1.5, "r1")
    m.add_objective(a, 1.0)
    m.write_lp(tmp_path / "m.lp")
    _assert_same(MilpModel.read_lp(tmp_path / "m.lp"), m)


def test_twelve_unit_model_round_trips():
    case = load_bundled("fleet12")
    scen = generate_scenario_set(case.base, case.grid, case.grid.lttd_times["t1"], (0, case.grid.n_steps), 5,
                                 case.errors_with(0.1), 1)
    m = build_problem(ProblemSpec(ProblemKind.SINGLE_PHASE, case.fleet, case.grid, scen, case.costs))
    m.check_integrity()
    _assert_same(MilpModel.from_lp(m.to_lp()), m)


def test_exported_file_is_readable_by_an_external_solver(tmp_path):
    fleet = [UnitSpec("G1", DEFAULT_CLASSES[UnitKind.OCGT], 50, 150, 5, 40, initial_on=False),
             UnitSpec("C1", DEFAULT_CLASSES[UnitKind.CCGT], 80, 200, 3, 20, initial_on=True)]
    scen = ScenarioSet(-1.0, 0, np.array([[150.0, 260.0, 300.0]]), {}, np.ones(1))
    m = build_problem(ProblemSpec(ProblemKind.DETERMINISTIC, fleet, TimeGrid(0, 3, 3, 1, 1, {}), scen))
    m.write_lp(tmp_path / "m.lp")
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(tmp_path / "m.lp")) == highspy.HighsStatus.kOk
    h.run()
    assert h.getInfo().objective_function_value == pytest.approx(solve(m).objective, rel=1e-9)


def test_solution_file_round_trip(tmp_path):
    m = _ocgt_model()
    res = solve(m)
    write_solution(tmp_path / "x.sol", m, res.x, res.status, res.objective)
    status, obj, x = read_solution(tmp_path / "x.sol", m)
    assert status == res.status and obj == res.objective
    assert np.array_equal(x, res.x)
    _, _, raw = read_solution(tmp_path / "x.sol")
    assert set(raw) == set(m.names)
