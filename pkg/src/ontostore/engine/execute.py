"""Plan execution: fragment fetches, star expansion, hash joins, ordering."""
from __future__ import annotations

import heapq
from concurrent.futures import Executor
from typing import Iterable

from .. import kernels
from ..rdf import IRI_KIND, LITERAL_KIND, RDF_TYPE, Term, Triple, row_key
from ..sparql.ast import TriplePattern, Var, expr_vars
from ..sparql.filters import compile_filter, row_accessor
from ..sparql.reference import ResultSet
from ..storage import ObjectRecord, PatternQuery, TripleIndexStore, subject_key, subject_term, term_subject
from .plan import ExecutionPlan, Fragment

TYPE = Term(IRI_KIND, RDF_TYPE)


class _TypeValues:
    """Class terms of a record, superclasses included, cached per class set."""

    def __init__(self, tbox):
        self.tbox = tbox
        self.cache: dict[frozenset, list[Term]] = {}

    def __call__(self, rec: ObjectRecord) -> list[Term]:
        key = frozenset(rec.classes)
        hit = self.cache.get(key)
        if hit is None:
            hit = self.cache[key] = [Term(IRI_KIND, c) for c in sorted(self.tbox.expand(key))]
        return hit


def _first_wins(batches: Iterable[Iterable[ObjectRecord]]) -> dict[str, ObjectRecord]:
    out: dict[str, ObjectRecord] = {}
    for batch in batches:
        for rec in batch:
            out.setdefault(rec.subject, rec)
    return out


def _merge_windows(batches: list[list[ObjectRecord]], window: int | None) -> list[ObjectRecord]:
    """Merge subject-ordered batches, first batch wins on duplicates, keep ``window`` records."""
    keyed = [((subject_key(r.subject), i), r) for i, batch in enumerate(batches) for r in batch] if len(batches) > 1 else None
    if keyed is None:
        merged = batches[0] if batches else []
        return merged if window is None else merged[:window]
    streams = [[((subject_key(r.subject), i), r) for r in batch] for i, batch in enumerate(batches)]
    out: list[ObjectRecord] = []
    last = None
    for (_, _i), rec in heapq.merge(*streams, key=lambda e: e[0]):
        if rec.subject == last:
            continue
        last = rec.subject
        out.append(rec)
        if window is not None and len(out) >= window:
            break
    return out


class PlanRunner:
    def __init__(self, plan: ExecutionPlan, overlay: dict[str, ObjectRecord] | None = None, pool: Executor | None = None):
        self.plan = plan
        self.snapshot = plan.snapshot
        self.tbox = plan.snapshot.tbox
        self.overlay = overlay or {}
        self.pool = pool
        self.type_values = _TypeValues(self.tbox)
        self.skipped = 0  # leading result rows already dropped by a storage-level offset

    # -- record sources -----------------------------------------------------------
    def _window(self) -> int | None:
        q = self.plan.query
        return None if q.limit is None else q.offset + q.limit

    def _scan(self, frag: Fragment) -> list[ObjectRecord]:
        if self.plan.limit_placement == "pushed":
            window = self._window()
            if len(frag.targets) == 1:
                s, c = frag.targets[0]
                q = self.plan.query
                self.skipped = q.offset
                return s.scan(frag.pattern_query(c, q.offset, q.limit))
            batches = [s.scan(frag.pattern_query(c, 0, window)) for s, c in frag.targets]
            return _merge_windows(batches, window)
        return list(_first_wins(s.scan(frag.pattern_query(c)) for s, c in frag.targets).values())

    def _get(self, frag: Fragment) -> list[ObjectRecord]:
        subject = term_subject(frag.star.subject)
        for s, _ in frag.targets:
            rec = s.get(subject)
            if rec is not None:
                return [rec]
        return []

    def _fanout(self, frag: Fragment) -> list[ObjectRecord]:
        snap = self.snapshot
        batches = []
        const_preds = [p.predicate for p in frag.star.patterns if isinstance(p.predicate, Term) and p.predicate != TYPE]
        for storage, _ in frag.targets:
            if isinstance(storage, TripleIndexStore):
                if const_preds:
                    subjects = {term_subject(t.subject) for t in storage.match_pattern(None, const_preds[0], None)}
                    batches.append(storage.get_many(sorted(subjects)).values())
                else:
                    batches.append(storage.iter_records())
                continue
            for cls in sorted(c for c, ids in snap.assignments.items() if storage.id in ids):
                batches.append(storage.scan(PatternQuery(cls, frag.storage_filters)))
        return list(_first_wins(batches).values())

    def _bind(self, frag: Fragment, subjects: list[str]) -> list[ObjectRecord]:
        remaining = list(subjects)
        found: dict[str, ObjectRecord] = {}
        for storage in self.snapshot.all_storages():
            if not remaining:
                break
            got = storage.get_many(remaining)
            found.update(got)
            remaining = [s for s in remaining if s not in got]
        return list(found.values())

    def _apply_overlay(self, frag: Fragment, records: list[ObjectRecord]) -> list[ObjectRecord]:
        if not self.overlay:
            return records
        out = [r for r in records if r.subject not in self.overlay]
        star = frag.star
        for subject, rec in self.overlay.items():
            if isinstance(star.subject, Term) and term_subject(star.subject) != subject:
                continue
            if star.cls is not None and star.cls not in self.tbox.expand(rec.classes):
                continue
            out.append(rec)
        return out

    def fetch(self, frag: Fragment, bind_subjects: list[str] | None = None) -> list[ObjectRecord]:
        if frag.mode == "scan":
            records = self._scan(frag)
        elif frag.mode == "get":
            records = self._get(frag)
        elif frag.mode == "bind":
            records = self._bind(frag, bind_subjects or [])
        else:
            records = self._fanout(frag)
        return self._apply_overlay(frag, records)

    # -- rows ------------------------------------------------------------------------
    def rows(self, frag: Fragment, records: list[ObjectRecord]) -> tuple[list[Var], list[tuple]]:
        star = frag.star
        cols = star.variables
        index = {v: i for i, v in enumerate(cols)}
        pairs = [(r, subject_term(r.subject)) for r in records]
        subj_slot = index[star.subject] if isinstance(star.subject, Var) else -1
        if star.variable_predicates:
            rows = self._expand_generic(pairs, star.patterns, index, subj_slot, len(cols))
        else:
            steps = []
            for p in star.patterns:
                prop = None if p.predicate == TYPE else p.predicate.value
                if isinstance(p.object, Var):
                    steps.append((prop, None, index[p.object]))
                else:
                    steps.append((prop, p.object, -1))
            rows = kernels.expand_star(pairs, subj_slot, steps, len(cols), self.type_values)
        if star.filters:
            acc = row_accessor({v.name: i for v, i in index.items()})
            for f in star.filters:
                keep = compile_filter(f, acc)
                rows = [r for r in rows if keep(r)]
        return cols, rows

    def _expand_generic(self, pairs, patterns: list[TriplePattern], index, subj_slot: int, width: int) -> list[tuple]:
        out = []
        for rec, subj in pairs:
            statements = [(TYPE, t) for t in self.type_values(rec)]
            for prop, values in rec.properties.items():
                pt = Term(IRI_KIND, prop)
                statements.extend((pt, v) for v in values)
            base = [None] * width
            if subj_slot >= 0:
                base[subj_slot] = subj
            rows = [base]
            for p in patterns:
                grown = []
                for row in rows:
                    for pred, obj in statements:
                        new = None
                        ok = True
                        for pos, term in ((p.predicate, pred), (p.object, obj)):
                            if isinstance(pos, Var):
                                i = index[pos]
                                cur = (new or row)[i]
                                if cur is None:
                                    if new is None:
                                        new = list(row)
                                    new[i] = term
                                elif cur != term:
                                    ok = False
                                    break
                            elif pos != term:
                                ok = False
                                break
                        if ok:
                            grown.append(new if new is not None else row)
                rows = grown
                if not rows:
                    break
            out.extend(tuple(r) for r in rows)
        return out

    # -- whole plan ------------------------------------------------------------------
    def solutions(self) -> tuple[list[Var], list[tuple]]:
        plan = self.plan
        if not plan.fragments:
            return [], [()]
        eager = [f for f in plan.fragments if f.mode != "bind"]

        def run(frag):
            return self.rows(frag, self.fetch(frag))

        if self.pool is not None and len(eager) > 1:
            futures = {f.n: self.pool.submit(run, f) for f in eager}
            results = {n: fut.result() for n, fut in futures.items()}
        else:
            results = {f.n: run(f) for f in eager}

        pending = list(plan.residual)
        cols: list[Var] = []
        rows: list[tuple] = [()]
        for frag in plan.fragments:
            if frag.mode == "bind":
                col = cols.index(frag.star.subject)
                subjects = sorted({term_subject(r[col]) for r in rows if r[col] is not None and r[col].kind != LITERAL_KIND})
                fcols, frows = self.rows(frag, self.fetch(frag, subjects))
            else:
                fcols, frows = results[frag.n]
            shared = [v for v in fcols if v in cols]
            extra = [i for i, v in enumerate(fcols) if v not in cols]
            if not cols:
                rows = [tuple(r[i] for i in extra) for r in frows] if extra != list(range(len(fcols))) else frows
            else:
                rows = kernels.hash_join(
                    rows, frows, [cols.index(v) for v in shared], [fcols.index(v) for v in shared], extra
                )
            cols = cols + [fcols[i] for i in extra]
            ready = [f for f in pending if expr_vars(f) <= set(cols)]
            if ready:
                acc = row_accessor({v.name: i for i, v in enumerate(cols)})
                for f in ready:
                    keep = compile_filter(f, acc)
                    rows = [r for r in rows if keep(r)]
                pending = [f for f in pending if f not in ready]
            if not rows:
                break
        if pending:
            acc = row_accessor({v.name: i for i, v in enumerate(cols)})
            for f in pending:
                keep = compile_filter(f, acc)
                rows = [r for r in rows if keep(r)]
        return cols, rows

    def select(self) -> ResultSet:
        q = self.plan.query
        cols, rows = self.solutions()
        out_vars = q.result_vars
        if rows and cols:
            rows = kernels.project(rows, [cols.index(v) for v in out_vars])
        elif rows:
            rows = [()] * len(rows)
        rows.sort(key=row_key)
        offset = q.offset - self.skipped
        end = None if q.limit is None else offset + q.limit
        return ResultSet(list(out_vars), rows[offset:end])

    def construct(self) -> list[Triple]:
        q = self.plan.query
        cols, rows = self.solutions()
        rows.sort(key=row_key)
        offset = q.offset - self.skipped
        end = None if q.limit is None else offset + q.limit
        index = {v: i for i, v in enumerate(cols)}
        out: set[Triple] = set()
        for row in rows[offset:end]:
            for p in q.template:
                s, pr, o = (row[index[x]] if isinstance(x, Var) else x for x in p)
                if s is None or pr is None or o is None:
                    continue
                if s.kind == LITERAL_KIND or pr.kind != IRI_KIND:
                    continue
                out.add(Triple(s, pr, o))
        return sorted(out)


__all__ = ["PlanRunner"]
