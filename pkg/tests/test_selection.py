import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochuc.errors import ContractError
from stochuc.evaluation import KpiRecord
from stochuc.orchestrator import RunConfig, run_commit
from stochuc.scenarios import NS_SELECT
from stochuc.selection import (Screening, candidate_scenarios, pipeline_select, random_training,
                               screening_fixings, select_worst, write_manifest)
from stochuc.timegrid import UnitKind


def brute_force(lost_load, lost_prod, M):
    """Full sort by volume (largest first), index order among equal volumes."""
    K = len(lost_load)
    by_ll = sorted(range(K), key=lambda i: (-lost_load[i], i))
    by_lp = sorted(range(K), key=lambda i: (-lost_prod[i], i))
    return sorted(set(by_ll[:M]) | set(by_lp[:M]))


def _rows(ll, lp):
    return [Screening(i, float(a), float(b)) for i, (a, b) in enumerate(zip(ll, lp))]


def test_argmax_of_each_list():
    assert select_worst(_rows([10, 0, 5], [0, 7, 0]), 1).selected == (0, 1)


def test_all_zero_ties_break_by_index():
    w = select_worst(_rows([0, 0, 0, 0], [0, 0, 0, 0]), 2)
    assert w.selected == (0, 1)


def test_everything_selected_when_M_equals_K():
    assert select_worst(_rows([3, 1, 2], [0, 0, 9]), 3).selected == (0, 1, 2)


def test_contract_errors():
    rows = _rows([1, 2], [0, 0])
    with pytest.raises(ContractError):
        select_worst(rows, 3)
    with pytest.raises(ContractError):
        select_worst(rows, 0)
    with pytest.raises(ContractError):
        select_worst(rows + rows[:1], 1)


volumes = st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), min_size=1, max_size=25)


@given(volumes, st.data())
def test_matches_brute_force(table, data):
    ll, lp = zip(*table)
    M = data.draw(st.integers(1, len(table)))
    assert list(select_worst(_rows(ll, lp), M).selected) == brute_force(ll, lp, M)


@given(volumes, st.data())
def test_invariant_under_row_order(table, data):
    ll, lp = zip(*table)
    M = data.draw(st.integers(1, len(table)))
    rows = _rows(ll, lp)
    perm = data.draw(st.permutations(rows))
    assert select_worst(perm, M).selected == select_worst(rows, M).selected


@given(volumes, st.data())
def test_nested_in_M(table, data):
    ll, lp = zip(*table)
    M = data.draw(st.integers(1, len(table)))
    small = set(select_worst(_rows(ll, lp), M).selected)
    bigger = set(select_worst(_rows(ll, lp), min(M + 1, len(table))).selected)
    assert small <= bigger
    assert M <= len(small) <= 2 * M


def test_accepts_kpi_records():
    recs = [KpiRecord("p", 0.1, i, [float(v), 1.0], [0.0, float(w)], [0.0, 0.0])
            for i, (v, w) in enumerate([(1, 0), (5, 2), (0, 9)])]
    assert select_worst(recs, 1).selected == (1, 2)


@pytest.fixture(scope="module")
def det_plan(desk):
    return run_commit(RunConfig.from_case(desk, optimizer="det")).plan


def test_screening_fixings(desk, det_plan):
    kinds = {u.id: u.kind for u in desk.fleet}
    fx = screening_fixings(det_plan, desk.fleet, desk.grid)
    assert all(t < desk.grid.study_steps for (u, t) in fx if kinds[u] is not UnitKind.NUC)
    nuc = [u for u in kinds if kinds[u] is UnitKind.NUC]
    assert all((u, t) in fx for u in nuc for t in range(desk.grid.n_steps))


def test_candidates_regenerate_by_id(desk):
    g = desk.grid
    pool = candidate_scenarios(desk.base, g, 6, 0.25, desk.error_params, 3)
    two = candidate_scenarios(desk.base, g, 6, 0.25, desk.error_params, 3, ids=[4, 1])
    assert pool.namespace == NS_SELECT and pool.issue_time == g.lttd_times["t1"]
    np.testing.assert_array_equal(two.consumption, pool.consumption[[4, 1]])


def test_pipeline_selects_the_worst_and_materializes_them(desk, det_plan, tmp_path):
    cfg = RunConfig.from_case(desk)
    sel = pipeline_select(desk.fleet, desk.grid, desk.base, 12, 2, 0.25, 3, desk.error_params, det_plan,
                          desk.costs, cfg.eval_options())
    ll = [r.lost_load for r in sel.screening]
    lp = [r.lost_production for r in sel.screening]
    assert list(sel.worst.selected) == brute_force(ll, lp, 2)
    assert sel.training.scenario_ids == list(sel.worst.selected)
    assert np.allclose(sel.training.probabilities, 1.0 / len(sel.worst.selected))
    # reusing the screening table gives the same selection
    again = pipeline_select(desk.fleet, desk.grid, desk.base, 12, 2, 0.25, 3, desk.error_params, det_plan,
                            desk.costs, cfg.eval_options(), screening=sel.screening)
    assert again.worst == sel.worst
    with pytest.raises(ContractError):
        pipeline_select(desk.fleet, desk.grid, desk.base, 13, 2, 0.25, 3, desk.error_params, det_plan,
                        desk.costs, cfg.eval_options(), screening=sel.screening)
    write_manifest(tmp_path / "sel.json", sel, {"case": "desk"})
    data = json.loads((tmp_path / "sel.json").read_text())
    assert data["selected"] == list(sel.worst.selected) and data["case"] == "desk"


def test_whole_pool_is_selected_when_M_is_K(desk, det_plan):
    cfg = RunConfig.from_case(desk)
    sel = pipeline_select(desk.fleet, desk.grid, desk.base, 4, 4, 0.1, 3, desk.error_params, det_plan,
                          desk.costs, cfg.eval_options())
    assert sel.worst.selected == (0, 1, 2, 3)


def test_random_training_is_reproducible(desk):
    a = random_training(desk.base, desk.grid, 50, 6, 0.1, 9, desk.error_params)
    b = random_training(desk.base, desk.grid, 50, 6, 0.1, 9, desk.error_params)
    assert a.scenario_ids == b.scenario_ids and len(set(a.scenario_ids)) == 6
    with pytest.raises(ContractError):
        random_training(desk.base, desk.grid, 5, 6, 0.1, 9, desk.error_params)
