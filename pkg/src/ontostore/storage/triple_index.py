"""In-memory triple store with SPO, POS and OSP permutation indexes."""
from __future__ import annotations

from typing import Iterable, Iterator

from .. import codec
from ..rdf import IRI_KIND, RDF_TYPE, RDFS_SUBCLASSOF, Term, Triple, iter_ntriples, row_key
from ..sparql.ast import Query, TriplePattern, Var, expr_vars
from ..sparql.filters import compile_filter, row_accessor
from ..sparql.reference import ResultSet
from .base import (
    ClassStats,
    ObjectRecord,
    PatternQuery,
    RWLock,
    Storage,
    StorageDescriptor,
    subject_term,
    term_subject,
)
from .persistence import OpLog

TYPE = Term(IRI_KIND, RDF_TYPE)
SUBCLASS = Term(IRI_KIND, RDFS_SUBCLASSOF)


def _add(index: dict, a, b, c) -> bool:
    inner = index.get(a)
    if inner is None:
        index[a] = {b: {c}}
        return True
    leaf = inner.get(b)
    if leaf is None:
        inner[b] = {c}
        return True
    if c in leaf:
        return False
    leaf.add(c)
    return True


def _remove(index: dict, a, b, c) -> None:
    inner = index[a]
    leaf = inner[b]
    leaf.discard(c)
    if not leaf:
        del inner[b]
        if not inner:
            del index[a]


def choose_index(s, p, o) -> str:
    """Permutation whose leading bound prefix is longest."""
    bound = (s is not None, p is not None, o is not None)
    if bound in ((True, True, True), (True, True, False), (True, False, False), (False, False, False)):
        return "spo"
    if bound in ((False, True, True), (False, True, False)):
        return "pos"
    return "osp"


class TripleIndexStore(Storage):
    """The default storage and the TBox home.

    Holds arbitrary triples; the record view groups them by subject.
    """

    def __init__(self, descriptor: StorageDescriptor | None = None, path=None):
        super().__init__(descriptor or StorageDescriptor("default", "triple-index"))
        self._spo: dict = {}
        self._pos: dict = {}
        self._osp: dict = {}
        self._size = 0
        self._rw = RWLock()
        self._version = 0
        self._stats_cache: dict[str, tuple[int, ClassStats]] = {}
        self._log = None
        if path is not None:
            self._log = OpLog(path)
            self._replay()

    # -- raw triples --------------------------------------------------------
    def _add_triple(self, t: Triple) -> bool:
        s, p, o = t
        if _add(self._spo, s, p, o):
            _add(self._pos, p, o, s)
            _add(self._osp, o, s, p)
            self._size += 1
            return True
        return False

    def _remove_triple(self, t: Triple) -> bool:
        s, p, o = t
        po = self._spo.get(s)
        if po is None or o not in po.get(p, ()):
            return False
        _remove(self._spo, s, p, o)
        _remove(self._pos, p, o, s)
        _remove(self._osp, o, s, p)
        self._size -= 1
        return True

    def add_triples(self, triples: Iterable[Triple]) -> int:
        added = 0
        with self._rw.write():
            batch = []
            for t in triples:
                if self._add_triple(t):
                    added += 1
                    if self._log is not None:
                        batch.append(t.n3())
            self._version += 1
        if batch and self._log is not None:
            self._log_op({"op": "add", "t": batch})
        return added

    def remove_triples(self, triples: Iterable[Triple]) -> int:
        removed = 0
        with self._rw.write():
            batch = []
            for t in triples:
                if self._remove_triple(t):
                    removed += 1
                    if self._log is not None:
                        batch.append(t.n3())
            self._version += 1
        if batch and self._log is not None:
            self._log_op({"op": "rm", "t": batch})
        return removed

    def __len__(self) -> int:
        return self._size

    def triples(self) -> Iterator[Triple]:
        with self._rw.read():
            out = [Triple(s, p, o) for s, po in self._spo.items() for p, os_ in po.items() for o in os_]
        return iter(out)

    def match_pattern(self, s: Term | None = None, p: Term | None = None, o: Term | None = None) -> list[Triple]:
        with self._rw.read():
            return self._match(s, p, o)

    def _match(self, s, p, o) -> list[Triple]:
        which = choose_index(s, p, o)
        if which == "spo":
            if s is None:
                return [Triple(a, b, c) for a, bc in self._spo.items() for b, cs in bc.items() for c in cs]
            po = self._spo.get(s)
            if not po:
                return []
            if p is None:
                return [Triple(s, b, c) for b, cs in po.items() for c in cs]
            os_ = po.get(p, ())
            if o is None:
                return [Triple(s, p, c) for c in os_]
            return [Triple(s, p, o)] if o in os_ else []
        if which == "pos":
            op = self._pos.get(p)
            if not op:
                return []
            if o is None:
                return [Triple(a, p, b) for b, ss in op.items() for a in ss]
            return [Triple(a, p, o) for a in op.get(o, ())]
        sp = self._osp.get(o)
        if not sp:
            return []
        if s is None:
            return [Triple(a, b, o) for a, ps in sp.items() for b in ps]
        return [Triple(s, b, o) for b in sp.get(s, ())]

    # -- record view --------------------------------------------------------
    def _record(self, s: Term) -> ObjectRecord | None:
        po = self._spo.get(s)
        if not po:
            return None
        rec = ObjectRecord(term_subject(s))
        for p, os_ in po.items():
            if p == TYPE:
                for o in os_:
                    if o.kind == IRI_KIND:
                        rec.classes.add(o.value)
                    else:
                        rec.properties.setdefault(RDF_TYPE, []).append(o)
            else:
                rec.properties[p.value] = sorted(os_)
        return rec

    def put(self, record: ObjectRecord) -> None:
        self.check_writable()
        s = subject_term(record.subject)
        with self._rw.write():
            old = self._match(s, None, None)
            for t in old:
                self._remove_triple(t)
            for t in record.triples():
                self._add_triple(t)
            self._version += 1
        if self._log is not None:
            self._log_op({"op": "put", "r": codec.record_to_doc(record)})

    def delete(self, subject: str) -> bool:
        self.check_writable()
        s = subject_term(subject)
        with self._rw.write():
            old = self._match(s, None, None)
            for t in old:
                self._remove_triple(t)
            self._version += 1
        if old and self._log is not None:
            self._log_op({"op": "del", "s": subject})
        return bool(old)

    def get(self, subject: str) -> ObjectRecord | None:
        self.check_readable()
        with self._rw.read():
            return self._record(subject_term(subject))

    def get_many(self, subjects: Iterable[str]) -> dict[str, ObjectRecord]:
        self.check_readable()
        out = {}
        with self._rw.read():
            for subj in subjects:
                rec = self._record(subject_term(subj))
                if rec is not None:
                    out[subj] = rec
        return out

    def _class_subjects(self, cls: str) -> list[Term]:
        members = self._pos.get(TYPE, {}).get(Term(IRI_KIND, cls), ())
        return sorted(members)

    def scan(self, q: PatternQuery) -> list[ObjectRecord]:
        self.check_readable()
        out = []
        with self._rw.read():
            subjects = self._class_subjects(q.cls)
            if not q.filters:
                end = None if q.limit is None else q.offset + q.limit
                return [self._record(s) for s in subjects[q.offset:end]]
            for s in subjects:
                po = self._spo[s]
                ok = True
                for f in q.filters:
                    values = po.get(Term(IRI_KIND, f.prop), ())
                    if not any(f.matches_value(v) for v in values):
                        ok = False
                        break
                if ok:
                    out.append(s)
            end = None if q.limit is None else q.offset + q.limit
            return [self._record(s) for s in out[q.offset:end]]

    def stats(self, cls: str) -> ClassStats:
        self.check_readable()
        with self._rw.read():
            cached = self._stats_cache.get(cls)
            if cached is not None and cached[0] == self._version:
                return cached[1]
            subjects = self._pos.get(TYPE, {}).get(Term(IRI_KIND, cls), ())
            single: set[Term] | None = None
            for s in subjects:
                po = self._spo[s]
                once = {p for p, os_ in po.items() if len(os_) == 1 and p != TYPE}
                single = once if single is None else single & once
            stats = ClassStats(len(subjects), {p.value for p in (single or ())})
            self._stats_cache[cls] = (self._version, stats)
            return stats

    def classes(self) -> list[str]:
        with self._rw.read():
            return sorted(o.value for o in self._pos.get(TYPE, {}) if o.kind == IRI_KIND)

    def subjects(self, cls: str) -> list[str]:
        with self._rw.read():
            return [term_subject(s) for s in self._class_subjects(cls)]

    def iter_records(self) -> Iterator[ObjectRecord]:
        with self._rw.read():
            records = [self._record(s) for s in sorted(self._spo)]
        return iter(records)

    def scan_strategy(self, q: PatternQuery) -> list[str]:
        return [f"pos-scan({RDF_TYPE})"] + [f"filter-scan({f.prop})" for f in q.filters]

    # -- persistence --------------------------------------------------------
    def _log_op(self, op: dict) -> None:
        if self._log.append(op):
            with self._rw.read():
                self._log.snapshot(self._state_ops)

    def _state_ops(self):
        lines = [Triple(s, p, o).n3() for s, po in self._spo.items() for p, os_ in po.items() for o in os_]
        for i in range(0, len(lines), 1000):
            yield {"op": "add", "t": lines[i:i + 1000]}

    def _replay(self) -> None:
        for op in self._log.recover():
            kind = op["op"]
            if kind == "add":
                for t in iter_ntriples(op["t"]):
                    self._add_triple(t)
            elif kind == "rm":
                for t in iter_ntriples(op["t"]):
                    self._remove_triple(t)
            elif kind == "put":
                rec = codec.record_from_doc(op["r"])
                s = subject_term(rec.subject)
                for t in self._match(s, None, None):
                    self._remove_triple(t)
                for t in rec.triples():
                    self._add_triple(t)
            elif kind == "del":
                for t in self._match(subject_term(op["s"]), None, None):
                    self._remove_triple(t)
        self._version += 1

    def close(self) -> None:
        if self._log is not None:
            self._log.close()

    # -- native SPARQL evaluation ---------------------------------------------
    def evaluate(self, query: Query) -> ResultSet:
        """Answer a SELECT directly from the permutation indexes.

        This is the plain triple-store path: index nested-loop joins, filters
        evaluated as soon as their variables are bound, and rdf:type answered
        under rdfs:subClassOf entailment.
        """
        with self._rw.read():
            return _NativeEvaluator(self, query).run()


class _NativeEvaluator:
    def __init__(self, store: TripleIndexStore, query: Query):
        self.store = store
        self.query = query
        self._sub: dict[Term, set[Term]] = {}
        self._super: dict[Term, set[Term]] = {}
        for t in store._match(None, SUBCLASS, None):
            self._super.setdefault(t.subject, set()).add(t.object)
            self._sub.setdefault(t.object, set()).add(t.subject)

    def _closure(self, start: Term, edges: dict) -> list[Term]:
        seen = {start}
        stack = [start]
        while stack:
            for nxt in edges.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return list(seen)

    def _match(self, s, p, o) -> Iterable[tuple]:
        """Matching (s, p, o) tuples, with entailed rdf:type answers."""
        store = self.store
        if p is None:
            for t in store._match(s, None, o):
                if t.predicate != TYPE:
                    yield t
            yield from self._match(s, TYPE, o)
            return
        if p != TYPE or (not self._sub and not self._super):
            yield from store._match(s, p, o)
            return
        if o is not None:
            seen = set()
            for cls in self._closure(o, self._sub):
                for t in store._match(s, TYPE, cls):
                    if t.subject not in seen:
                        seen.add(t.subject)
                        yield Triple(t.subject, TYPE, o)
            return
        seen = set()
        for t in store._match(s, TYPE, None):
            for cls in self._closure(t.object, self._super):
                key = (t.subject, cls)
                if key not in seen:
                    seen.add(key)
                    yield Triple(t.subject, TYPE, cls)

    def run(self) -> ResultSet:
        query = self.query
        all_vars = query.pattern_vars()
        index = {v: i for i, v in enumerate(all_vars)}
        width = len(all_vars)
        remaining = list(query.patterns)
        pending = [(expr_vars(f), f) for f in query.filters]
        filter_index = {v.name: i for v, i in index.items()}
        bound: set[Var] = set()
        rows = [(None,) * width]
        while remaining:
            best = max(
                range(len(remaining)),
                key=lambda i: (sum(1 for x in remaining[i] if not isinstance(x, Var) or x in bound), -i),
            )
            pattern = remaining.pop(best)
            rows = self._extend(rows, pattern, index, bound)
            bound.update(pattern.variables())
            ready = [f for vs, f in pending if vs <= bound]
            pending = [(vs, f) for vs, f in pending if not vs <= bound]
            for f in ready:
                keep = compile_filter(f, row_accessor(filter_index))
                rows = [r for r in rows if keep(r)]
            if not rows:
                break
        for _, f in pending:
            keep = compile_filter(f, row_accessor(filter_index))
            rows = [r for r in rows if keep(r)]
        out_vars = query.result_vars
        pick = [index[v] for v in out_vars]
        projected = sorted((tuple(r[i] for i in pick) for r in rows), key=row_key)
        end = None if query.limit is None else query.offset + query.limit
        return ResultSet(list(out_vars), projected[query.offset:end])

    def _extend(self, rows, pattern: TriplePattern, index, bound) -> list[tuple]:
        out = []
        slots = [index[x] if isinstance(x, Var) else None for x in pattern]
        for row in rows:
            key = [row[i] if i is not None else x for i, x in zip(slots, pattern)]
            for t in self._match(*key):
                new = list(row)
                ok = True
                for i, term in zip(slots, t):
                    if i is None:
                        continue
                    cur = new[i]
                    if cur is None:
                        new[i] = term
                    elif cur != term:
                        ok = False
                        break
                if ok:
                    out.append(tuple(new))
        return out


__all__ = ["TripleIndexStore", "choose_index"]
