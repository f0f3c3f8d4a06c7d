"""Reference evaluator: the correctness oracle for the federated engine.

It knows nothing about storages, routing, star groups or indexes.  Every
pattern is matched by a full linear scan over the triples; pattern results
are joined in textual order on their shared variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..rdf import TripleSet, row_key
from .ast import Query, TriplePattern, Var
from .filters import compile_filter, row_accessor


@dataclass
class ResultSet:
    variables: list[Var]
    rows: list[tuple] = field(default_factory=list)

    def bindings(self) -> list[dict[Var, object]]:
        return [{v: t for v, t in zip(self.variables, row) if t is not None} for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


def _match_relation(pattern: TriplePattern, triples) -> tuple[list[Var], list[tuple]]:
    pvars: list[Var] = []
    for x in pattern:
        if isinstance(x, Var) and x not in pvars:
            pvars.append(x)
    out = []
    for triple in triples:
        binding: dict[Var, object] = {}
        ok = True
        for pos, term in zip(pattern, triple):
            if isinstance(pos, Var):
                prev = binding.get(pos)
                if prev is None:
                    binding[pos] = term
                elif prev != term:
                    ok = False
                    break
            elif pos != term:
                ok = False
                break
        if ok:
            out.append(tuple(binding[v] for v in pvars))
    return pvars, out


def solve_bgp(query: Query, data: TripleSet) -> tuple[list[Var], list[tuple]]:
    """All solutions of the query's patterns and filters, over all pattern variables."""
    triples = list(data.triples)
    cols: list[Var] = []
    rows: list[tuple] = [()]
    for pattern in query.patterns:
        pvars, matches = _match_relation(pattern, triples)
        shared = [v for v in pvars if v in cols]
        left_idx = [cols.index(v) for v in shared]
        right_idx = [pvars.index(v) for v in shared]
        new_idx = [i for i, v in enumerate(pvars) if v not in cols]
        table: dict[tuple, list[tuple]] = {}
        for m in matches:
            table.setdefault(tuple(m[i] for i in right_idx), []).append(tuple(m[i] for i in new_idx))
        joined = []
        for row in rows:
            for extra in table.get(tuple(row[i] for i in left_idx), ()):
                joined.append(row + extra)
        rows = joined
        cols.extend(pvars[i] for i in new_idx)
    index = {v.name: i for i, v in enumerate(cols)}
    for expr in query.filters:
        keep = compile_filter(expr, row_accessor(index))
        rows = [r for r in rows if keep(r)]
    return cols, rows


def eval_reference(query: Query, data: TripleSet) -> ResultSet:
    if query.form != "select":
        raise ValueError("the reference evaluator only handles SELECT queries")
    cols, rows = solve_bgp(query, data)
    out_vars = query.result_vars
    pick = [cols.index(v) for v in out_vars]
    projected = [tuple(r[i] for i in pick) for r in rows]
    projected.sort(key=row_key)
    end = None if query.limit is None else query.offset + query.limit
    return ResultSet(list(out_vars), projected[query.offset:end])
