"""Solver-agnostic MILP container, LP-format writer/reader and solution files.

Variable names encode their domain coordinates as five dot-separated fields::

    role.unit.tTIME.SCEN.STATE

``SCEN`` is ``f`` for first-stage (scenario-free) variables and ``sK`` for
scenario ``K``; missing fields are ``_``.  Examples: ``E.NUC1.t3.f.OFF``,
``T.OCGT2.t0.s1.OFF_OU``, ``T0.CCGT1._.f.OFL_OFF``, ``p.NUC4.t7.s0._``,
``dns._.t7.s0._``.  The scheme is stable: solution files produced by external
solvers are matched back by name.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

BINARY = "binary"
CONTINUOUS = "continuous"
SENSES = ("<=", ">=", "=")


@dataclass(frozen=True)
class VarTag:
    role: str
    unit: str | None = None
    time: int | None = None
    scenario: int | None = None
    state: str | None = None

    @property
    def name(self) -> str:
        t = "_" if self.time is None else f"t{self.time}"
        s = "f" if self.scenario is None else f"s{self.scenario}"
        return ".".join([self.role, self.unit or "_", t, s, self.state or "_"])

    @classmethod
    def parse(cls, name: str) -> "VarTag":
        parts = name.split(".")
        if len(parts) != 5:
            raise ValueError(f"not a coordinate name: {name!r}")
        role, unit, t, s, state = parts
        return cls(role,
                   None if unit == "_" else unit,
                   None if t == "_" else int(t[1:]),
                   None if s == "f" else int(s[1:]),
                   None if state == "_" else state)


@dataclass
class Constraint:
    idx: np.ndarray
    coef: np.ndarray
    sense: str
    rhs: float
    name: str


@dataclass
class MilpModel:
    names: list[str] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    tags: list[VarTag | None] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    # -- construction ---------------------------------------------------
    def add_var(self, name: str | None = None, kind: str = CONTINUOUS, lb: float = 0.0,
                ub: float = math.inf, tag: VarTag | None = None) -> int:
        if name is None:
            if tag is None:
                raise ValueError("variable needs a name or a tag")
            name = tag.name
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        if kind not in (BINARY, CONTINUOUS):
            raise ValueError(f"unknown variable kind {kind}")
        if kind == BINARY:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ValueError(f"{name}: empty bounds [{lb}, {ub}]")
        i = len(self.names)
        self.names.append(name)
        self.kinds.append(kind)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.tags.append(tag)
        self._index[name] = i
        return i

    def add_constraint(self, terms: Mapping[int, float] | Iterable[tuple[int, float]], sense: str,
                       rhs: float, name: str | None = None) -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense}")
        items = terms.items() if isinstance(terms, Mapping) else terms
        merged: dict[int, float] = {}
        for j, a in items:
            if not 0 <= j < len(self.names):
                raise IndexError(f"constraint references unknown variable {j}")
            merged[j] = merged.get(j, 0.0) + float(a)
        idx = np.fromiter(merged.keys(), dtype=np.int64, count=len(merged))
        coef = np.fromiter(merged.values(), dtype=float, count=len(merged))
        k = len(self.constraints)
        self.constraints.append(Constraint(idx, coef, sense, float(rhs), name or f"c{k}"))
        return k

    def add_objective(self, j: int, coef: float) -> None:
        if coef:
            self.objective[j] = self.objective.get(j, 0.0) + float(coef)

    # -- queries ----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def index(self, name: str) -> int:
        return self._index[name]

    def find(self, tag: VarTag) -> int | None:
        return self._index.get(tag.name)

    def binaries(self) -> list[int]:
        return [j for j, k in enumerate(self.kinds) if k == BINARY]

    def free_binaries(self) -> list[int]:
        return [j for j in self.binaries() if self.lb[j] < self.ub[j]]

    def copy(self) -> "MilpModel":
        return MilpModel(list(self.names), list(self.kinds), list(self.lb), list(self.ub),
                         list(self.tags), list(self.constraints), dict(self.objective),
                         dict(self.metadata), dict(self._index))

    def objective_value(self, x) -> float:
        return float(sum(c * x[j] for j, c in self.objective.items()))

    def arrays(self):
        """(c, A csr, row_lo, row_hi, lb, ub, is_int) for matrix-based solvers."""
        n = self.n_vars
        c = np.zeros(n)
        for j, v in self.objective.items():
            c[j] = v
        rows, cols, vals = [], [], []
        lo = np.empty(self.n_constraints)
        hi = np.empty(self.n_constraints)
        for i, con in enumerate(self.constraints):
            rows.append(np.full(len(con.idx), i))
            cols.append(con.idx)
            vals.append(con.coef)
            lo[i] = con.rhs if con.sense in (">=", "=") else -np.inf
            hi[i] = con.rhs if con.sense in ("<=", "=") else np.inf
        if self.constraints:
            A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(self.n_constraints, n))
        else:
            A = sparse.csr_matrix((0, n))
        is_int = np.array([k == BINARY for k in self.kinds], dtype=bool)
        return c, A, lo, hi, np.array(self.lb, dtype=float), np.array(self.ub, dtype=float), is_int

    def check_integrity(self) -> None:
        """Every constraint references existing variables; binaries live in [0, 1]; names unique."""
        n = self.n_vars
        for con in self.constraints:
            if len(con.idx) and (con.idx.min() < 0 or con.idx.max() >= n):
                raise ValueError(f"{con.name} references unknown variables")
        for j, k in enumerate(self.kinds):
            if k == BINARY and not (0.0 <= self.lb[j] <= self.ub[j] <= 1.0):
                raise ValueError(f"binary {self.names[j]} has bounds outside [0, 1]")
        if len(set(self.names)) != n:
            raise ValueError("duplicate variable names")
        tagged = [t for t in self.tags if t is not None]
        if len(set(tagged)) != len(tagged):
            raise ValueError("duplicate coordinate tags")

    def max_violation(self, x) -> float:
        """Largest bound or row violation of the point ``x``."""
        x = np.asarray(x, dtype=float)
        worst = float(np.max(np.maximum(np.array(self.lb) - x, x - np.array(self.ub)), initial=0.0))
        for con in self.constraints:
            act = float(con.coef @ x[con.idx])
            if con.sense == "<=":
                worst = max(worst, act - con.rhs)
            elif con.sense == ">=":
                worst = max(worst, con.rhs - act)
            else:
                worst = max(worst, abs(act - con.rhs))
        return worst

    # -- LP format ----------------------------------------------------------
    def to_lp(self) -> str:
        out = [f"\\ stochuc model kind={self.metadata.get('kind', 'unknown')}", "Minimize"]
        out += _wrap(" obj:", _terms(self.objective.items(), self.names) or ["0", self.names[0]] if self.names else [])
        out.append("Subject To")
        for con in self.constraints:
            sense = "=" if con.sense == "=" else con.sense
            body = _terms(zip(con.idx.tolist(), con.coef.tolist()), self.names) or ["0", self.names[0]]
            out += _wrap(f" {con.name}:", body + [sense, _num(con.rhs)])
        out.append("Bounds")
        for j, name in enumerate(self.names):
            lo, hi = self.lb[j], self.ub[j]
            if lo == -math.inf and hi == math.inf:
                out.append(f" {name} free")
            elif lo == hi:
                out.append(f" {name} = {_num(lo)}")
            else:
                left = "-inf" if lo == -math.inf else _num(lo)
                right = "+inf" if hi == math.inf else _num(hi)
                out.append(f" {left} <= {name} <= {right}")
        bins = [n for n, k in zip(self.names, self.kinds) if k == BINARY]
        if bins:
            out.append("Binaries")
            out += _wrap("", bins)
        out.append("End")
        return "\n".join(out) + "\n"

    def write_lp(self, path: str | Path) -> None:
        Path(path).write_text(self.to_lp())

    @classmethod
    def from_lp(cls, text: str) -> "MilpModel":
        return _parse_lp(text)

    @classmethod
    def read_lp(cls, path: str | Path) -> "MilpModel":
        return _parse_lp(Path(path).read_text())


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _terms(pairs, names) -> list[str]:
    out = []
    for j, a in pairs:
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        mag = abs(a)
        out += [sign, names[j]] if mag == 1 else [sign, _num(mag), names[j]]
    return out


def _wrap(head: str, tokens: list[str], width: int = 200) -> list[str]:
    lines, cur = [], head
    for tok in tokens:
        if len(cur) + len(tok) + 1 > width and cur.strip():
            lines.append(cur)
            cur = "   "
        cur += " " + tok
    if cur.strip():
        lines.append(cur)
    return lines


_SECTION = re.compile(r"^(minimize|minimum|min|subject to|such that|st|s\.t\.|bounds|bound|binaries|binary|bin|generals|general|end)$", re.I)
_NUM = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$|^[+-]?inf(inity)?$", re.I)


def _parse_lp(text: str) -> MilpModel:
    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if _SECTION.match(key):
            current = {"minimize": "obj", "minimum": "obj", "min": "obj", "subject to": "st",
                       "such that": "st", "st": "st", "s.t.": "st", "bounds": "bounds", "bound": "bounds",
                       "binaries": "bin", "binary": "bin", "bin": "bin", "generals": "gen",
                       "general": "gen", "end": "end"}[key]
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ValueError(f"content before the objective section: {raw!r}")
        sections[current].append(line)

    model = MilpModel()
    declared: list[str] = []

    def var(name):
        if name not in model._index:
            try:
                tag = VarTag.parse(name)
            except ValueError:
                tag = None
            model.add_var(name, CONTINUOUS, 0.0, math.inf, tag)
            declared.append(name)
        return model._index[name]

    def parse_expr(tokens):
        terms, sign, coef = [], 1.0, None
        for tok in tokens:
            if tok in "+-":
                sign = -1.0 if tok == "-" else 1.0
            elif _NUM.match(tok):
                coef = float(tok)
            else:
                terms.append((var(tok), sign * (1.0 if coef is None else coef)))
                sign, coef = 1.0, None
        return terms

    bounds = {}
    for line in sections.get("bounds", []):
        toks = line.split()
        if len(toks) == 2 and toks[1].lower() == "free":
            bounds[toks[0]] = (-math.inf, math.inf)
        elif len(toks) == 5:
            bounds[toks[2]] = (_bound(toks[0]), _bound(toks[4]))
        elif len(toks) == 3 and toks[1] == "=":
            v = _bound(toks[2])
            bounds[toks[0]] = (v, v)
        elif len(toks) == 3 and toks[1] in ("<=", ">="):
            lo, hi = bounds.get(toks[0], (0.0, math.inf))
            bounds[toks[0]] = (lo, _bound(toks[2])) if toks[1] == "<=" else (_bound(toks[2]), hi)
        else:
            raise ValueError(f"unsupported bound line: {line!r}")
    # the Bounds section lists every variable in its original order, so
    # declaring from it first keeps column indices stable across a round trip
    for name in bounds:
        var(name)

    obj_tokens = " ".join(sections.get("obj", [])).split()
    if obj_tokens and obj_tokens[0].endswith(":"):
        obj_tokens = obj_tokens[1:]
    obj_terms = parse_expr(obj_tokens)

    # constraints may span lines: a new one starts with "name:"
    stmts, cur = [], []
    for line in sections.get("st", []):
        if re.match(r"^[^\s:]+:", line) and cur:
            stmts.append(" ".join(cur))
            cur = []
        cur.append(line)
    if cur:
        stmts.append(" ".join(cur))
    rows = []
    for stmt in stmts:
        name, body = (stmt.split(":", 1) if ":" in stmt else (None, stmt))
        m = re.search(r"(<=|>=|=<|=>|=|<|>)", body)
        if not m:
            raise ValueError(f"constraint without sense: {stmt!r}")
        sense = {"<": "<=", "=<": "<=", ">": ">=", "=>": ">="}.get(m.group(1), m.group(1))
        lhs = body[:m.start()].split()
        rhs = float(body[m.end():].strip())
        rows.append(((name or "").strip() or None, parse_expr(lhs), sense, rhs))

    binaries = " ".join(sections.get("bin", [])).split()

    for name in binaries:
        var(name)
    for j, a in obj_terms:
        model.add_objective(j, a)
    for name, (lo, hi) in bounds.items():
        j = model._index[name]
        model.lb[j], model.ub[j] = lo, hi
    for name in binaries:
        j = model._index[name]
        model.kinds[j] = BINARY
        if name not in bounds:
            model.lb[j], model.ub[j] = 0.0, 1.0
    for name, terms, sense, rhs in rows:
        model.add_constraint(terms, sense, rhs, name)
    return model


def _bound(tok: str) -> float:
    t = tok.lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    return float(tok)


# -- solution files -----------------------------------------------------------

def write_solution(path: str | Path, model: MilpModel, values, status: str, objective: float | None) -> None:
    lines = [f"# status={status}", f"# objective={'' if objective is None else repr(float(objective))}"]
    if values is not None:
        lines += [f"{name} {float(v)!r}" for name, v in zip(model.names, values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path: str | Path, model: MilpModel | None = None):
    """Return (status, objective, values). ``values`` is a vector aligned with
    ``model`` when given, otherwise a name -> value dict."""
    status, objective, raw = None, None, {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key == "status":
                status = val
            elif key == "objective" and val:
                objective = float(val)
            continue
        name, val = line.split()[:2]
        raw[name] = float(val)
    if model is None:
        return status, objective, raw
    x = np.zeros(model.n_vars)
    for name, v in raw.items():
        if name not in model._index:
            raise KeyError(f"solution mentions unknown variable {name}")
        x[model._index[name]] = v
    return status, objective, x
