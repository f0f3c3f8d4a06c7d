"""Indexed class-table storage: one partition per class, one column per property."""
from __future__ import annotations

import operator
from collections import Counter
from typing import Iterable, Iterator

from sortedcontainers import SortedKeyList

from .. import kernels
from .. import codec
from ..rdf import BLANK_KIND, LITERAL_KIND, Term, typed_key
from .base import (
    ClassStats,
    IndexSpec,
    IndexSpecError,
    ObjectRecord,
    PatternQuery,
    PropertyFilter,
    RWLock,
    Storage,
    StorageDescriptor,
    subject_key,
)
from .persistence import OpLog

_first = operator.itemgetter(0)


def _value_key(term: Term):
    """``(category, value)``, ``(None, None)`` for unordered terms, ``None`` if invalid."""
    try:
        k = typed_key(term)
    except ValueError:
        return None
    return k if k is not None else (None, None)


def eq_key(term: Term):
    """Hash key under which ``equals`` matches, or None when nothing can equal it."""
    k = _value_key(term)
    if k is None:
        return None
    cat, value = k
    if cat is None:
        return ("t", term)
    if value != value:
        return None
    return ("v", cat, value)


class _OrderedIndex:
    """Answers ``less``/``greater`` exactly as the FILTER comparison does.

    Values of the constant's category are ranged by value; everything else
    falls back to the lexical form, which is kept per category.
    """

    def __init__(self):
        self.by_value: dict[str, SortedKeyList] = {}
        self.lexical: dict[str | None, SortedKeyList] = {}

    def _entries(self, subject: str, term: Term):
        if term.kind == BLANK_KIND:
            return None
        k = _value_key(term)
        if k is None:
            return None
        cat, value = k
        return cat, (value if cat is not None and value == value else None), term.value

    def add(self, subject: str, term: Term) -> None:
        e = self._entries(subject, term)
        if e is None:
            return
        cat, value, lex = e
        if value is not None:
            self.by_value.setdefault(cat, SortedKeyList(key=_first)).add((value, subject))
        self.lexical.setdefault(cat, SortedKeyList(key=_first)).add((lex, subject))

    def remove(self, subject: str, term: Term) -> None:
        e = self._entries(subject, term)
        if e is None:
            return
        cat, value, lex = e
        if value is not None:
            self.by_value[cat].remove((value, subject))
        self.lexical[cat].remove((lex, subject))

    @staticmethod
    def _range(lst: SortedKeyList, op: str, bound) -> Iterator[str]:
        if op == "less":
            stop = lst.bisect_key_left(bound)
            return (lst[i][1] for i in range(stop))
        start = lst.bisect_key_right(bound)
        return (lst[i][1] for i in range(start, len(lst)))

    def query(self, op: str, const: Term) -> set[str]:
        if const.kind == BLANK_KIND:
            return set()
        k = _value_key(const)
        if k is None:
            return set()
        cat, value = k
        out: set[str] = set()
        if cat is not None and value == value and cat in self.by_value:
            out.update(self._range(self.by_value[cat], op, value))
        for other, lst in self.lexical.items():
            if cat is not None and other == cat:
                continue
            out.update(self._range(lst, op, const.value))
        return out


class _Partition:
    def __init__(self, cls: str):
        self.cls = cls
        self.subjects = SortedKeyList(key=subject_key)
        self.columns: dict[str, dict[str, list[Term]]] = {}
        self.present: Counter = Counter()
        self.multi: Counter = Counter()
        self.eq: dict[str, dict] = {}
        self.ordered: dict[str, _OrderedIndex] = {}

    def build_index(self, spec: IndexSpec) -> None:
        column = self.columns.get(spec.prop, {})
        if spec.kind == "equality":
            idx: dict = {}
            for s, values in column.items():
                for v in values:
                    k = eq_key(v)
                    if k is not None:
                        idx.setdefault(k, set()).add(s)
            self.eq[spec.prop] = idx
        elif spec.kind == "ordered":
            oi = _OrderedIndex()
            for s, values in column.items():
                for v in values:
                    oi.add(s, v)
            self.ordered[spec.prop] = oi

    def insert(self, rec: ObjectRecord) -> None:
        s = rec.subject
        self.subjects.add(s)
        for prop, values in rec.properties.items():
            self.columns.setdefault(prop, {})[s] = values
            self.present[prop] += 1
            if len(values) > 1:
                self.multi[prop] += 1
            idx = self.eq.get(prop)
            if idx is not None:
                for v in values:
                    k = eq_key(v)
                    if k is not None:
                        idx.setdefault(k, set()).add(s)
            oi = self.ordered.get(prop)
            if oi is not None:
                for v in values:
                    oi.add(s, v)

    def remove(self, rec: ObjectRecord) -> None:
        s = rec.subject
        self.subjects.remove(s)
        for prop, values in rec.properties.items():
            column = self.columns[prop]
            del column[s]
            if not column:
                del self.columns[prop]
            self.present[prop] -= 1
            if not self.present[prop]:
                del self.present[prop]
            if len(values) > 1:
                self.multi[prop] -= 1
                if not self.multi[prop]:
                    del self.multi[prop]
            idx = self.eq.get(prop)
            if idx is not None:
                for v in values:
                    k = eq_key(v)
                    if k is not None:
                        members = idx[k]
                        members.discard(s)
                        if not members:
                            del idx[k]
            oi = self.ordered.get(prop)
            if oi is not None:
                for v in values:
                    oi.remove(s, v)

    def indexed(self, f: PropertyFilter) -> set[str] | None:
        """Subjects matching ``f`` from an index, or None if no index serves it."""
        if f.op == "equals" and f.prop in self.eq:
            k = eq_key(f.value)
            return set(self.eq[f.prop].get(k, ())) if k is not None else set()
        if f.op in ("less", "greater") and f.prop in self.ordered:
            return self.ordered[f.prop].query(f.op, f.value)
        return None

    def strategy(self, f: PropertyFilter) -> str:
        if f.op == "equals" and f.prop in self.eq:
            return f"index-eq({f.prop})"
        if f.op in ("less", "greater") and f.prop in self.ordered:
            return f"index-range({f.prop})"
        return f"column-scan({f.prop})"


class ClassTableStore(Storage):
    def __init__(self, descriptor: StorageDescriptor, path=None):
        if descriptor.kind != "class-table":
            raise ValueError("ClassTableStore needs a class-table descriptor")
        super().__init__(descriptor)
        self._records: dict[str, ObjectRecord] = {}
        self._parts: dict[str, _Partition] = {}
        self._specs: dict[tuple[str, str], IndexSpec] = {}
        self._rw = RWLock()
        self._log = None
        if path is not None:
            self._log = OpLog(path)
            self._replay()

    # -- internal mutation (caller holds the write lock) ----------------------
    def _part(self, cls: str) -> _Partition:
        part = self._parts.get(cls)
        if part is None:
            part = self._parts[cls] = _Partition(cls)
            for spec in self._specs.values():
                part.build_index(spec)
        return part

    def _unlink(self, subject: str) -> ObjectRecord | None:
        old = self._records.pop(subject, None)
        if old is not None:
            for c in old.classes:
                part = self._parts[c]
                part.remove(old)
                if not part.subjects:
                    del self._parts[c]
        return old

    def _link(self, rec: ObjectRecord) -> None:
        self._records[rec.subject] = rec
        for c in rec.classes:
            self._part(c).insert(rec)

    def _add_spec(self, spec: IndexSpec) -> bool:
        key = (spec.prop, spec.kind)
        if key in self._specs:
            return False
        if spec.kind == "ordered":
            for part in self._parts.values():
                for values in part.columns.get(spec.prop, {}).values():
                    if any(v.kind != LITERAL_KIND for v in values):
                        raise IndexSpecError(self.id, f"ordered index needs comparable values; {spec.prop} holds IRIs")
        self._specs[key] = spec
        for part in self._parts.values():
            part.build_index(spec)
        return True

    # -- writes ---------------------------------------------------------------
    def put(self, record: ObjectRecord) -> None:
        self.check_writable()
        rec = record.normalized()
        with self._rw.write():
            self._unlink(rec.subject)
            self._link(rec)
        if self._log is not None:
            self._log_op({"op": "put", "r": codec.record_to_doc(rec)})

    def put_many(self, records: Iterable[ObjectRecord]) -> int:
        self.check_writable()
        n = 0
        docs = []
        with self._rw.write():
            for record in records:
                rec = record.normalized()
                self._unlink(rec.subject)
                self._link(rec)
                n += 1
                if self._log is not None:
                    docs.append(codec.record_to_doc(rec))
        if docs:
            for i in range(0, len(docs), 1000):
                self._log_op({"op": "putmany", "r": docs[i:i + 1000]})
        return n

    def delete(self, subject: str) -> bool:
        self.check_writable()
        with self._rw.write():
            old = self._unlink(subject)
        if old is not None and self._log is not None:
            self._log_op({"op": "del", "s": subject})
        return old is not None

    def ensure_index(self, spec: IndexSpec) -> bool:
        with self._rw.write():
            created = self._add_spec(spec)
        if created and self._log is not None:
            self._log_op({"op": "index", "p": spec.prop, "k": spec.kind})
        return created

    def indexes(self) -> list[IndexSpec]:
        return sorted(self._specs.values(), key=lambda s: (s.prop, s.kind))

    # -- reads ----------------------------------------------------------------
    def get(self, subject: str) -> ObjectRecord | None:
        self.check_readable()
        with self._rw.read():
            return self._records.get(subject)

    def get_many(self, subjects: Iterable[str]) -> dict[str, ObjectRecord]:
        self.check_readable()
        with self._rw.read():
            records = self._records
            return {s: records[s] for s in subjects if s in records}

    def scan(self, q: PatternQuery) -> list[ObjectRecord]:
        self.check_readable()
        with self._rw.read():
            part = self._parts.get(q.cls)
            if part is None:
                return []
            end = None if q.limit is None else q.offset + q.limit
            if not q.filters:
                return [self._records[s] for s in part.subjects[q.offset:end]]
            candidates: set[str] | None = None
            residual = []
            for f in q.filters:
                hit = part.indexed(f)
                if hit is None:
                    residual.append(f)
                else:
                    candidates = hit if candidates is None else candidates & hit
            if candidates is not None:
                order: Iterable[str] = sorted(candidates, key=subject_key)
            else:
                order = part.subjects
            for f in sorted(residual, key=lambda f: f.op != "contains"):
                column = part.columns.get(f.prop, {})
                if f.op == "contains":
                    order = kernels.contains_scan(order, column, f.value.value)
                else:
                    match = f.matches_value
                    order = [s for s in order if any(match(v) for v in column.get(s, ()))]
            if not isinstance(order, list):
                order = list(order)
            return [self._records[s] for s in order[q.offset:end]]

    def stats(self, cls: str) -> ClassStats:
        self.check_readable()
        with self._rw.read():
            part = self._parts.get(cls)
            if part is None:
                return ClassStats(0, set())
            n = len(part.subjects)
            single = {p for p, c in part.present.items() if c == n and not part.multi.get(p)}
            return ClassStats(n, single)

    def classes(self) -> list[str]:
        with self._rw.read():
            return sorted(self._parts)

    def subjects(self, cls: str) -> list[str]:
        with self._rw.read():
            part = self._parts.get(cls)
            return list(part.subjects) if part is not None else []

    def iter_records(self) -> Iterator[ObjectRecord]:
        with self._rw.read():
            records = [self._records[s] for s in sorted(self._records, key=subject_key)]
        return iter(records)

    def __len__(self) -> int:
        return len(self._records)

    def scan_strategy(self, q: PatternQuery) -> list[str]:
        with self._rw.read():
            part = self._parts.get(q.cls)
            if part is None:
                # an empty class still reports the indexes it would use
                part = _Partition(q.cls)
                for spec in self._specs.values():
                    part.build_index(spec)
            out = [part.strategy(f) for f in q.filters]
            return out or [f"partition-scan({q.cls})"]

    # -- persistence ----------------------------------------------------------
    def _log_op(self, op: dict) -> None:
        if self._log.append(op):
            with self._rw.read():
                self._log.snapshot(self._state_ops)

    def _state_ops(self):
        for spec in self._specs.values():
            yield {"op": "index", "p": spec.prop, "k": spec.kind}
        for rec in self._records.values():
            yield {"op": "put", "r": codec.record_to_doc(rec)}

    def _replay(self) -> None:
        for op in self._log.recover():
            kind = op["op"]
            if kind == "put":
                rec = codec.record_from_doc(op["r"])
                self._unlink(rec.subject)
                self._link(rec)
            elif kind == "putmany":
                for doc in op["r"]:
                    rec = codec.record_from_doc(doc)
                    self._unlink(rec.subject)
                    self._link(rec)
            elif kind == "del":
                self._unlink(op["s"])
            elif kind == "index":
                self._add_spec(IndexSpec(op["p"], op["k"]))

    def close(self) -> None:
        if self._log is not None:
            self._log.close()


__all__ = ["ClassTableStore", "eq_key"]
