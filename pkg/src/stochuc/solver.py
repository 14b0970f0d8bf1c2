"""MILP solution methods behind a single ``solve`` entry point.

* ``bnb``: best-bound branch-and-bound over the dense simplex of
  :mod:`stochuc.simplex`.  Most-fractional branching, ties to the lowest
  variable index.
* ``enumerate``: depth-first enumeration of every free binary with bound
  propagation, one LP per complete assignment.  Only for tiny models; it is
  the independent reference for branch-and-bound.
* ``highs``: HiGHS branch-and-cut through ``highspy``, single-threaded and
  without time limit by default, so that reruns are reproducible.
* ``auto``: ``bnb`` up to ``auto_bnb_max`` free binaries, ``highs`` above.
"""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np
import highspy
from scipy.optimize import linprog

from .errors import ContractError, SolverFailure
from .model import MilpModel
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED
from .simplex import solve_lp as _simplex

STATUS_OPTIMAL = "optimal"
STATUS_GAP = "gap_reached"
STATUS_TIME = "time_limit"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_FAILURE = "failure"
HAS_SOLUTION = (STATUS_OPTIMAL, STATUS_GAP, STATUS_TIME)



@dataclass(frozen=True)
class SolveOptions:
    backend: str = "auto"
    rel_gap: float = 1e-6
    time_limit: float | None = None
    node_limit: int = 200_000
    enumerate_budget: int = 22
    auto_bnb_max: int = 60
    int_tol: float = 1e-6

    def __post_init__(self):
        if self.backend not in ("auto", "bnb", "enumerate", "highs"):
            raise ContractError(f"unknown backend {self.backend!r}")
        if not 0 <= self.rel_gap < 1:
            raise ContractError("rel_gap must lie in [0, 1)")
        if not 0 < self.int_tol <= 1e-3:
            raise ContractError("int_tol must lie in (0, 1e-3]")


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    bound: float | None = None
    nodes: int = 0
    backend: str = ""
    elapsed: float = 0.0
    message: str = ""
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in HAS_SOLUTION and self.x is not None

    @property
    def gap(self) -> float | None:
        if self.objective is None or self.bound is None:
            return None
        return relative_gap(self.objective, self.bound)


def relative_gap(incumbent: float, bound: float) -> float:
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


def solve(model: MilpModel, options: SolveOptions | None = None) -> SolveResult:
    options = options or SolveOptions()
    backend = options.backend
    if backend == "auto":
        backend = "bnb" if len(model.free_binaries()) <= options.auto_bnb_max else "highs"
    fn = {"bnb": solve_bnb, "enumerate": solve_enumerate, "highs": solve_highs}[backend]
    return fn(model, options)


solve_milp = solve


def solve_lp(model: MilpModel, options: SolveOptions | None = None) -> SolveResult:
    """The continuous relaxation of ``model`` by the bounded-variable simplex
    (binaries are treated as variables in [lb, ub])."""
    t0 = time.monotonic()
    c, A, lo, hi, lb, ub, _ = model.arrays()
    r = _simplex(c, A, lo, hi, lb, ub)
    elapsed = time.monotonic() - t0
    st = {OPTIMAL: STATUS_OPTIMAL, INFEASIBLE: STATUS_INFEASIBLE, UNBOUNDED: STATUS_UNBOUNDED}.get(
        r.status, STATUS_FAILURE)
    if st != STATUS_OPTIMAL:
        return SolveResult(st, backend="simplex", elapsed=elapsed, message=r.status,
                           info={"iterations": r.iterations})
    obj = model.objective_value(r.x)
    return SolveResult(st, r.x, obj, obj, 0, "simplex", elapsed, info={"iterations": r.iterations})


# ---------------------------------------------------------------------------
# branch-and-bound


def solve_bnb(model: MilpModel, options: SolveOptions | None = None) -> SolveResult:
    options = options or SolveOptions(backend="bnb")
    t0 = time.monotonic()
    c, A, lo, hi, lb, ub, is_int = model.arrays()
    A = A.toarray()
    int_idx = np.flatnonzero(is_int)

    incumbent, inc_x = math.inf, None
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    counter = 0
    root = _simplex(c, A, lo, hi, lb, ub)
    if root.status == INFEASIBLE:
        return SolveResult(STATUS_INFEASIBLE, nodes=1, backend="bnb", elapsed=time.monotonic() - t0)
    if root.status == UNBOUNDED:
        return SolveResult(STATUS_UNBOUNDED, nodes=1, backend="bnb", elapsed=time.monotonic() - t0)
    if root.status != OPTIMAL:
        raise SolverFailure(f"root relaxation ended with {root.status}")
    heapq.heappush(heap, (root.objective, counter, lb.copy(), ub.copy(), root.x))
    nodes = 1
    status = STATUS_OPTIMAL
    global_bound = root.objective

    while heap:
        bound, _, nlb, nub, x = heapq.heappop(heap)
        global_bound = bound
        if inc_x is not None and relative_gap(incumbent, bound) <= options.rel_gap:
            global_bound = min(bound, incumbent)
            break
        if bound >= incumbent:
            continue
        frac = np.abs(x[int_idx] - np.round(x[int_idx]))
        k = int(np.argmax(frac)) if len(int_idx) else 0  # argmax returns the first (lowest) index on ties
        if not len(int_idx) or frac[k] <= options.int_tol:
            incumbent, inc_x = bound, x
            continue
        if nodes >= options.node_limit or (options.time_limit and time.monotonic() - t0 > options.time_limit):
            heapq.heappush(heap, (bound, 0, nlb, nub, x))
            status = STATUS_TIME
            break
        j = int_idx[k]
        for lo_j, hi_j in ((nlb[j], math.floor(x[j])), (math.ceil(x[j]), nub[j])):
            clb, cub = nlb.copy(), nub.copy()
            clb[j], cub[j] = lo_j, hi_j
            r = _simplex(c, A, lo, hi, clb, cub)
            nodes += 1
            if r.status == OPTIMAL and r.objective < incumbent:
                counter += 1
                heapq.heappush(heap, (r.objective, counter, clb, cub, r.x))
            elif r.status not in (OPTIMAL, INFEASIBLE):
                raise SolverFailure(f"node relaxation ended with {r.status}")
    else:
        global_bound = incumbent

    elapsed = time.monotonic() - t0
    if inc_x is None:
        st = STATUS_TIME if status == STATUS_TIME else STATUS_INFEASIBLE
        return SolveResult(st, nodes=nodes, backend="bnb", elapsed=elapsed, bound=global_bound)
    x = _snap(inc_x, is_int)
    obj = model.objective_value(x)
    if status != STATUS_TIME:
        status = STATUS_OPTIMAL if relative_gap(obj, global_bound) <= 1e-9 else STATUS_GAP
    elif relative_gap(obj, global_bound) <= options.rel_gap:
        status = STATUS_GAP
    return SolveResult(status, x, obj, min(global_bound, obj), nodes, "bnb", elapsed)


def _snap(x, is_int):
    x = np.array(x, dtype=float)
    x[is_int] = np.round(x[is_int])
    return x


# ---------------------------------------------------------------------------
# exhaustive enumeration


def solve_enumerate(model: MilpModel, options: SolveOptions | None = None) -> SolveResult:
    """Exact optimum by trying every binary assignment that survives bound
    propagation.  Raises ContractError beyond ``enumerate_budget`` free
    binaries.  Leaf LPs go through HiGHS so that this route shares no code
    with :func:`solve_bnb`."""
    options = options or SolveOptions(backend="enumerate")
    free = model.free_binaries()
    if len(free) > options.enumerate_budget:
        raise ContractError(f"{len(free)} free binaries exceed the enumeration budget "
                            f"{options.enumerate_budget}")
    t0 = time.monotonic()
    c, A, lo, hi, lb, ub, is_int = model.arrays()
    A = A.toarray()
    cont = np.flatnonzero(~is_int)
    best, best_x, leaves = math.inf, None, 0

    def leaf(vlb):
        nonlocal best, best_x, leaves
        leaves += 1
        xb = vlb.copy()
        fixed = is_int
        rlo = lo - A[:, fixed] @ xb[fixed]
        rhi = hi - A[:, fixed] @ xb[fixed]
        Ac = A[:, cont]
        if len(cont) == 0:
            if np.all(rlo <= 1e-7) and np.all(rhi >= -1e-7):
                val = float(c @ xb)
                if val < best:
                    best, best_x = val, xb
            return
        ub_rows = np.isfinite(rhi)
        lb_rows = np.isfinite(rlo)
        eq = ub_rows & lb_rows & (np.abs(rhi - rlo) <= 1e-12)
        A_ub = np.vstack([Ac[ub_rows & ~eq], -Ac[lb_rows & ~eq]])
        b_ub = np.concatenate([rhi[ub_rows & ~eq], -rlo[lb_rows & ~eq]])
        res = linprog(c[cont], A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                      A_eq=Ac[eq] if eq.any() else None, b_eq=rhi[eq] if eq.any() else None,
                      bounds=list(zip(lb[cont], ub[cont])), method="highs")
        if res.status == 0:
            val = float(c[fixed] @ xb[fixed] + res.fun)
            if val < best - 1e-12:
                xb[cont] = res.x
                best, best_x = val, xb
        elif res.status == 3:
            raise SolverFailure("unbounded leaf relaxation")

    def dfs(vlb, vub, depth):
        ok = _propagate(A, lo, hi, vlb, vub, is_int)
        if not ok:
            return
        open_ = [j for j in free if vlb[j] < vub[j]]
        if not open_:
            leaf(vlb)
            return
        j = open_[0]
        for v in (0.0, 1.0):
            nlb, nub = vlb.copy(), vub.copy()
            nlb[j] = nub[j] = v
            dfs(nlb, nub, depth + 1)

    dfs(lb.copy(), ub.copy(), 0)
    elapsed = time.monotonic() - t0
    if best_x is None:
        return SolveResult(STATUS_INFEASIBLE, nodes=leaves, backend="enumerate", elapsed=elapsed)
    return SolveResult(STATUS_OPTIMAL, best_x, model.objective_value(best_x), best, leaves,
                       "enumerate", elapsed)


def _propagate(A, lo, hi, vlb, vub, is_int, tol=1e-7) -> bool:
    """Activity-bound propagation; fixes binaries in place.  False if some
    row cannot be satisfied."""
    pos = np.maximum(A, 0.0)
    neg = np.minimum(A, 0.0)
    changed = True
    while changed:
        changed = False
        with np.errstate(invalid="ignore"):
            amin = _safe_dot(pos, vlb) + _safe_dot(neg, vub)
            amax = _safe_dot(pos, vub) + _safe_dot(neg, vlb)
        if np.any(amin > hi + tol) or np.any(amax < lo - tol):
            return False
        for j in np.flatnonzero(is_int & (vlb < vub)):
            col = A[:, j]
            rows = np.flatnonzero(col)
            cr = col[rows]
            own_min = np.where(cr > 0, cr * vlb[j], cr * vub[j])
            own_max = np.where(cr > 0, cr * vub[j], cr * vlb[j])
            for v in (0.0, 1.0):
                # activity range of each row once x_j = v
                lo_c = amin[rows] - own_min + cr * v
                hi_c = amax[rows] - own_max + cr * v
                if np.any(lo_c > hi[rows] + tol) or np.any(hi_c < lo[rows] - tol):
                    other = 1.0 - v
                    vlb[j] = vub[j] = other
                    changed = True
                    break
            if changed:
                break
    return True


def _safe_dot(M, v):
    # 0 * inf counts as 0
    out = np.zeros(M.shape[0])
    for j in np.flatnonzero(np.any(M != 0, axis=0)):
        col = M[:, j]
        out = out + np.where(col != 0, col * v[j], 0.0)
    return out


# ---------------------------------------------------------------------------
# HiGHS


@dataclass
class _HighsOut:
    status: int           # 0 optimal/gap met, 1 limit reached, 2 infeasible, 3 unbounded, 4 other
    x: np.ndarray | None
    fun: float | None
    mip_dual_bound: float | None
    mip_node_count: int
    message: str


def _milp(c, A, lo, hi, lb, ub, integrality, *, mip_rel_gap=1e-6, time_limit=None,
          node_limit=None) -> _HighsOut:
    """One HiGHS run, single-threaded and deterministic."""
    inf = highspy.kHighsInf
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("mip_rel_gap", float(mip_rel_gap))
    if time_limit is not None:
        h.setOptionValue("time_limit", float(time_limit))
    if node_limit is not None:
        h.setOptionValue("mip_max_nodes", int(node_limit))
    lp = highspy.HighsLp()
    lp.num_col_ = len(c)
    lp.num_row_ = A.shape[0]
    lp.col_cost_ = np.asarray(c, dtype=float)
    lp.col_lower_ = np.where(np.isfinite(lb), lb, -inf)
    lp.col_upper_ = np.where(np.isfinite(ub), ub, inf)
    lp.row_lower_ = np.where(np.isfinite(lo), lo, -inf)
    lp.row_upper_ = np.where(np.isfinite(hi), hi, inf)
    Ac = A.tocsc()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = Ac.indptr
    lp.a_matrix_.index_ = Ac.indices
    lp.a_matrix_.value_ = Ac.data
    if np.any(integrality):
        lp.integrality_ = [highspy.HighsVarType.kInteger if v else highspy.HighsVarType.kContinuous
                           for v in integrality]
    h.passModel(lp)
    h.run()
    ms = h.getModelStatus()
    info = h.getInfo()
    MS = highspy.HighsModelStatus
    has_x = info.primal_solution_status == 2
    x = np.array(h.getSolution().col_value) if has_x else None
    if ms == MS.kOptimal:
        code = 0
    elif ms in (MS.kInfeasible,):
        code = 2
    elif ms in (MS.kUnbounded, MS.kUnboundedOrInfeasible):
        code = 3 if ms == MS.kUnbounded else 2
    elif ms in (MS.kTimeLimit, MS.kSolutionLimit, MS.kIterationLimit, MS.kInterrupt) or \
            ms == getattr(MS, "kNodeLimit", None):
        code = 1
    else:
        code = 4
    is_mip = bool(np.any(integrality))
    bound = info.mip_dual_bound if is_mip else (info.objective_function_value if code == 0 else None)
    fun = info.objective_function_value if x is not None else None
    return _HighsOut(code, x, fun, bound, int(info.mip_node_count) if is_mip else 0,
                     h.modelStatusToString(ms))


def solve_highs(model: MilpModel, options: SolveOptions | None = None) -> SolveResult:
    options = options or SolveOptions(backend="highs")
    t0 = time.monotonic()
    c, A, lo, hi, lb, ub, is_int = model.arrays()
    integrality = is_int.astype(int)
    info: dict = {}
    remaining = None
    if options.time_limit is not None:
        remaining = max(1.0, options.time_limit - (time.monotonic() - t0))
    r = _milp(c, A, lo, hi, lb, ub, integrality, mip_rel_gap=options.rel_gap, time_limit=remaining,
              node_limit=options.node_limit)
    elapsed = time.monotonic() - t0
    if r.x is None:
        st = {2: STATUS_INFEASIBLE, 3: STATUS_UNBOUNDED, 1: STATUS_TIME}.get(r.status, STATUS_FAILURE)
        return SolveResult(st, backend="highs", elapsed=elapsed, message=r.message, info=info)
    x = _snap(r.x, is_int)
    obj = model.objective_value(x)
    bound = r.mip_dual_bound if np.any(is_int) else obj
    gap = relative_gap(obj, bound) if bound is not None and np.isfinite(bound) else None
    if gap is not None and gap <= 1e-9:
        st = STATUS_OPTIMAL
    elif r.status == 0 or (gap is not None and gap <= options.rel_gap + 1e-12):
        st = STATUS_GAP
    else:
        st = STATUS_TIME
    return SolveResult(st, x, obj, bound, r.mip_node_count, "highs", elapsed, r.message, info)
