import numpy as np
import pytest

from stochuc.builder import CostParams, ProblemKind, ProblemSpec, build_problem
from stochuc.errors import ContractError
from stochuc.evaluation import (EvalScenario, block_fixings, compute_in_out_of_sample, csv_text,
                                evaluate_batch, fmt_number, initial_power_chain, kpi_rows, make_eval_scenario,
                                mean_eval_scenario, rolling_evaluate, summarize)
from stochuc.orchestrator import RunConfig, run_commit
from stochuc.scenarios import NS_EVAL, NS_TRAIN, generate_scenario_set
from stochuc.solver import SolveOptions, solve
from stochuc.timegrid import UnitKind

from conftest import collapse_instance, monolithic_kpis


@pytest.fixture(scope="module")
def det_plan(desk):
    return run_commit(RunConfig.from_case(desk, optimizer="det")).plan


@pytest.fixture(scope="module")
def opts(desk):
    return RunConfig.from_case(desk).eval_options()


def test_block_fixings_follow_the_unit_kinds(desk, det_plan):
    g = desk.grid
    kinds = {u.id: u.kind for u in desk.fleet}
    fx = block_fixings(det_plan, desk.fleet, g, 2)
    for (u, t) in fx:
        if kinds[u] is UnitKind.NUC:
            assert t >= g.block_range(2).start
        elif kinds[u] is UnitKind.CCGT:
            assert t in g.block_range(2)
    ccgt = [u.id for u in desk.fleet if u.kind is UnitKind.CCGT]
    assert all((c, t) in fx for c in ccgt for t in g.block_range(2))


def test_eval_scenarios_shrink_and_follow_the_block_issue_times(desk):
    g = desk.grid
    scn = make_eval_scenario(desk.base, g, 3, 0.1, desk.error_params, 7)
    assert sorted(scn.per_block) == list(range(1, g.n_blocks + 1))
    for j, s in scn.per_block.items():
        assert s.start_step == g.block_range(j).start
        assert s.issue_time == g.eval_issue_time(j)
        assert s.namespace == NS_EVAL and s.scenario_ids == [3]
    with pytest.raises(ContractError):
        EvalScenario(0, 0.1, {1: scn.per_block[2], 2: scn.per_block[1]})


def test_perfect_forecast_serves_everything(desk, det_plan, opts):
    # the plan was optimized on the base series, which brackets the fleet
    rec = rolling_evaluate(det_plan, mean_eval_scenario(desk.base, desk.grid), desk.fleet, desk.grid,
                           desk.costs, opts, base=desk.base, keep_traces=True)
    assert rec.total_lost_load == pytest.approx(0.0, abs=1e-6)
    assert rec.total_lost_production == pytest.approx(0.0, abs=1e-6)


def test_traces_balance_and_add_up(desk, det_plan, opts):
    scn = make_eval_scenario(desk.base, desk.grid, 0, 0.25, desk.error_params, 1)
    rec = rolling_evaluate(det_plan, scn, desk.fleet, desk.grid, desk.costs, opts, base=desk.base,
                           keep_traces=True)
    assert len(rec.traces) == desk.grid.n_blocks
    dt = desk.grid.delta_t
    pi_v = {u.id: u.pi_v for u in desk.fleet}
    for j, tr in enumerate(rec.traces):
        served = sum(tr.power.values()) + tr.dns - tr.spill
        np.testing.assert_allclose(served, tr.residual, atol=1e-6)
        assert rec.lost_load[j] == pytest.approx(tr.dns.sum() * dt, abs=1e-9)
        variable = sum(pi_v[u] * p.sum() * dt for u, p in tr.power.items())
        penalties = 1000.0 * (desk.costs.pi_dns * tr.dns.sum() + desk.costs.pi_spill * tr.spill.sum()) * dt
        # anything beyond this is start-up cost, which is never negative
        assert rec.dispatch_cost[j] >= variable + penalties - 1e-6
    assert rec.total_lost_load == pytest.approx(sum(rec.lost_load))


def test_all_units_off_loses_the_whole_residual():
    fleet, grid, plan, es = collapse_instance(np.random.default_rng(4))
    fleet = [u for u in fleet if u.kind is not UnitKind.OCGT]
    from dataclasses import replace
    fleet = [replace(u, initial_on=False) for u in fleet]
    plan = {(u.id, t): 1 for u in fleet for t in range(grid.n_steps)}
    rec = rolling_evaluate(plan, EvalScenario(0, 0.1, {1: es}), fleet, grid, CostParams(), SolveOptions())
    expected = es.residual[0, :grid.study_steps].sum() * grid.delta_t
    assert rec.total_lost_load == pytest.approx(expected)
    assert rec.total_dispatch_cost == pytest.approx(10.0 * 1000.0 * expected)


def test_single_block_equals_one_deterministic_solve():
    rng = np.random.default_rng(21)
    for i in range(6):
        fleet, grid, plan, es = collapse_instance(rng)
        rec = rolling_evaluate(plan, EvalScenario(i, 0.1, {1: es}), fleet, grid, CostParams(), SolveOptions())
        got = (rec.total_lost_load, rec.total_lost_production, rec.total_dispatch_cost)
        np.testing.assert_allclose(got, monolithic_kpis(fleet, grid, plan, es), rtol=1e-7, atol=1e-6)


def test_batch_of_one_equals_a_rolling_run(desk, det_plan, opts):
    g = desk.grid
    batch = evaluate_batch(det_plan, desk.fleet, g, desk.base, 1, 0.1, desk.error_params, 5, desk.costs, opts)
    chain = initial_power_chain(det_plan, desk.fleet, g, desk.base, desk.costs, opts)
    one = rolling_evaluate(det_plan, make_eval_scenario(desk.base, g, 0, 0.1, desk.error_params, 5), desk.fleet,
                           g, desk.costs, opts, chain)
    assert batch[0].lost_load == one.lost_load and batch[0].dispatch_cost == one.dispatch_cost
    again = evaluate_batch(det_plan, desk.fleet, g, desk.base, 1, 0.1, desk.error_params, 5, desk.costs, opts)
    assert csv_text(kpi_rows(batch)) == csv_text(kpi_rows(again))


def test_batch_needs_scenarios(desk, det_plan, opts):
    with pytest.raises(ContractError):
        evaluate_batch(det_plan, desk.fleet, desk.grid, desk.base, 0, 0.1, desk.error_params, 5, desk.costs, opts)


def _two_stage(desk, M=3, seed=2):
    g = desk.grid
    train = generate_scenario_set(desk.base, g, g.lttd_times["t1"], (0, g.n_steps), M, desk.errors_with(0.1), seed,
                                  NS_TRAIN)
    spec = ProblemSpec(ProblemKind.SINGLE_PHASE, desk.fleet, g, train, desk.costs)
    model = build_problem(spec)
    res = solve(model, SolveOptions(rel_gap=0.0))
    return spec, model, res.x, train


def test_out_of_sample_on_the_training_set_equals_in_sample(desk):
    spec, model, x, train = _two_stage(desk)
    v = compute_in_out_of_sample(spec, model, x, train, SolveOptions(rel_gap=0.0), allow_overlap=True)
    assert v.kappa_oos == pytest.approx(v.kappa_in, rel=1e-9)
    assert v.difference == pytest.approx(0.0, abs=1e-6 * abs(v.kappa_in))
    with pytest.raises(ContractError):
        compute_in_out_of_sample(spec, model, x, train, SolveOptions())


def test_out_of_sample_on_fresh_scenarios(desk):
    spec, model, x, train = _two_stage(desk, M=1)
    g = desk.grid
    test = generate_scenario_set(desk.base, g, g.lttd_times["t1"], (0, g.n_steps), 4, desk.errors_with(0.1), 2,
                                 NS_EVAL)
    v = compute_in_out_of_sample(spec, model, x, test, SolveOptions())
    assert v.first_stage_cost >= 0
    assert v.kappa_oos == pytest.approx(v.first_stage_cost + v.mean_second_stage_oos)


def test_summary_and_number_format():
    from stochuc.evaluation import KpiRecord
    recs = [KpiRecord("p", 0.1, i, [float(i)], [0.0], [10.0 * i]) for i in range(11)]
    s = summarize(recs)
    assert s["lost_load"]["mean"] == pytest.approx(5.0)
    assert s["lost_load"]["p10"] == pytest.approx(1.0)
    assert s["dispatch_cost"]["p90"] == pytest.approx(90.0)
    assert fmt_number(3) == "3"
    assert fmt_number(1e-9) == "0.000000"
    assert fmt_number(-2.5e-7) == "0.000000"
    assert fmt_number(1.23456789) == "1.234568"
    rows = kpi_rows(recs[:2], {"seed": 1})
    text = csv_text(rows)
    assert text.splitlines()[0].startswith("seed,plan,m_eval,scenario")
    assert "\r" not in text
