"""Dense bounded-variable primal simplex.

Solves  min c.x  s.t.  row_lo <= A x <= row_hi,  lb <= x <= ub.

Rows get a logical variable s = A x carrying the row bounds, so the working
problem is  [A  -I] z = 0  with simple bounds on every column of z.  Rows
whose logical starts outside its bounds receive an artificial column and a
first phase drives those artificials to zero.  Pricing is Dantzig's rule
until the method stalls on degenerate pivots, then Bland's rule takes over
for the rest of the solve, which rules out cycling.

Meant for the small models of branch-and-bound and the tests; everything is
dense and the basis is refactorized at every iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
SINGULAR = "singular"

_PIVOT_TOL = 1e-9
_FEAS_TOL = 1e-7
_DJ_TOL = 1e-9


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float | None
    iterations: int


class _Tableau:
    def __init__(self, M: np.ndarray, c: np.ndarray, l: np.ndarray, u: np.ndarray,
                 basis: list[int], x: np.ndarray):
        self.M, self.c, self.l, self.u = M, c, l, u
        self.basis = basis
        self.x = x
        self.iterations = 0

    def _recompute_basics(self):
        B = self.M[:, self.basis]
        nb = np.ones(self.M.shape[1], dtype=bool)
        nb[self.basis] = False
        rhs = -self.M[:, nb] @ self.x[nb]
        self.x[self.basis] = linalg.solve(B, rhs) if len(self.basis) else rhs
        return B

    def run(self, cost: np.ndarray, max_iter: int) -> str:
        try:
            return self._run(cost, max_iter)
        except (linalg.LinAlgError, ValueError):
            # a numerically singular basis; callers report it, never hide it
            return SINGULAR

    def _run(self, cost: np.ndarray, max_iter: int) -> str:
        m, n = self.M.shape
        bland = False
        degenerate = 0
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            B = self._recompute_basics()
            lu = linalg.lu_factor(B)
            y = linalg.lu_solve(lu, cost[self.basis], trans=1)
            d = cost - self.M.T @ y
            in_basis = np.zeros(n, dtype=bool)
            in_basis[self.basis] = True

            entering, direction, best = -1, 0, 0.0
            for j in range(n):
                if in_basis[j] or self.l[j] == self.u[j]:
                    continue
                dj = d[j]
                at_lb = self.x[j] <= self.l[j] + _FEAS_TOL
                at_ub = self.x[j] >= self.u[j] - _FEAS_TOL
                if dj < -_DJ_TOL and not at_ub:
                    cand = 1
                elif dj > _DJ_TOL and not at_lb:
                    cand = -1
                else:
                    continue
                if bland:
                    entering, direction = j, cand
                    break
                if abs(dj) > best:
                    entering, direction, best = j, cand, abs(dj)
            if entering < 0:
                return OPTIMAL

            alpha = linalg.lu_solve(lu, self.M[:, entering])
            # basic x_B moves by -direction * theta * alpha
            theta = self.u[entering] - self.l[entering]
            tol = _PIVOT_TOL * max(1.0, float(np.abs(alpha).max(initial=0.0)))
            ratios = []
            for i in range(m):
                rate = -direction * alpha[i]
                if abs(rate) <= tol:
                    continue
                k = self.basis[i]
                if rate < 0:
                    room, bound = self.x[k] - self.l[k], self.l[k]
                else:
                    room, bound = self.u[k] - self.x[k], self.u[k]
                if np.isfinite(room):
                    ratios.append((max(room, 0.0) / abs(rate), abs(rate), i, bound))
            leave_pos, leave_to = -1, None
            if ratios:
                t_min = min(r[0] for r in ratios)
                if t_min < theta - 1e-12:
                    # among (near) ties prefer the largest pivot, or the
                    # lowest variable index under Bland's rule
                    ties = [r for r in ratios if r[0] <= t_min + 1e-12]
                    if bland:
                        pick = min(ties, key=lambda r: self.basis[r[2]])
                    else:
                        pick = max(ties, key=lambda r: r[1])
                    theta, leave_pos, leave_to = t_min, pick[2], pick[3]
            if not np.isfinite(theta):
                return UNBOUNDED

            self.iterations += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > 50:
                    bland = True
            else:
                degenerate = 0
            self.x[entering] += direction * theta
            if leave_pos < 0:
                continue  # bound flip, basis unchanged
            leaving = self.basis[leave_pos]
            self.basis[leave_pos] = entering
            self.x[leaving] = leave_to


def solve_lp(c, A, row_lo, row_hi, lb, ub, max_iter: int = 20000) -> LpResult:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A.toarray() if hasattr(A, "toarray") else A, dtype=float)
    row_lo = np.asarray(row_lo, dtype=float)
    row_hi = np.asarray(row_hi, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if (lb > ub + _FEAS_TOL).any() or (row_lo > row_hi + _FEAS_TOL).any():
        return LpResult(INFEASIBLE, None, None, 0)

    # nonbasic structurals start at a finite bound (0 if free)
    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    act = A @ x0
    s0 = np.clip(act, row_lo, row_hi)
    viol = act - s0
    art_rows = np.flatnonzero(np.abs(viol) > _FEAS_TOL)
    k = len(art_rows)

    # columns: x (n), s (m), artificials (k);  A x - s + sigma*a = 0
    M = np.zeros((m, n + m + k))
    M[:, :n] = A
    M[:, n:n + m] = -np.eye(m)
    for q, i in enumerate(art_rows):
        M[i, n + m + q] = -np.sign(viol[i])
    l = np.concatenate([lb, row_lo, np.zeros(k)])
    u = np.concatenate([ub, row_hi, np.full(k, np.inf)])
    z = np.concatenate([x0, s0, np.abs(viol[art_rows])])
    art_set = set(art_rows.tolist())
    basis_rows = {i: n + m + q for q, i in enumerate(art_rows)}
    for i in range(m):
        if i not in art_set:
            basis_rows[i] = n + i
    basis = [basis_rows[i] for i in range(m)]
    tab = _Tableau(M, c, l, u, basis, z)

    if k:
        phase1 = np.zeros(n + m + k)
        phase1[n + m:] = 1.0
        st = tab.run(phase1, max_iter)
        if st in (ITERATION_LIMIT, SINGULAR):
            return LpResult(st, None, None, tab.iterations)
        if tab.x[n + m:].sum() > _FEAS_TOL * max(1.0, m):
            return LpResult(INFEASIBLE, None, None, tab.iterations)
        tab.u[n + m:] = 0.0
        tab.x[n + m:] = np.minimum(tab.x[n + m:], 0.0)

    cost = np.concatenate([c, np.zeros(m + k)])
    st = tab.run(cost, max_iter)
    if st != OPTIMAL:
        return LpResult(st, None, None, tab.iterations)
    x = tab.x[:n].copy()
    # clean tiny bound overshoots from round-off
    x = np.minimum(np.maximum(x, lb), ub)
    return LpResult(OPTIMAL, x, float(c @ x), tab.iterations)
