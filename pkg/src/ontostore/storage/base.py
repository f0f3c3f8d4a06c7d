"""The storage adapter contract shared by every backend."""
from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from ..rdf import BLANK_KIND, IRI_KIND, LITERAL_KIND, RDF_TYPE, Term, Triple
from ..sparql.filters import FilterError, compare, string_form

KINDS = ("triple-index", "class-table", "remote")
MODES = ("materialized", "on-demand")
STATUSES = ("active", "draining", "offline")
FILTER_OPS = ("equals", "less", "greater", "contains")
INDEX_KINDS = ("equality", "ordered", "substring-scan")

_OP_SYMBOL = {"equals": "=", "less": "<", "greater": ">"}


class StorageError(Exception):
    """Base class for adapter failures."""

    def __init__(self, storage_id: str, message: str):
        super().__init__(f"storage {storage_id!r}: {message}")
        self.storage_id = storage_id


class StorageUnavailable(StorageError):
    """Offline storage, transport failure or timeout."""


class StorageDraining(StorageError):
    pass


class ReadOnlyStorage(StorageError):
    pass


class IndexSpecError(StorageError):
    """Index requested on a property that cannot support it."""


@dataclass(frozen=True)
class StorageDescriptor:
    id: str
    kind: str
    mode: str = "materialized"
    endpoint: str | None = None
    status: str = "active"
    timeout: float = 10.0

    def __post_init__(self):
        if not self.id or any(c.isspace() for c in self.id):
            raise ValueError(f"invalid storage id {self.id!r}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown storage kind {self.kind!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown storage mode {self.mode!r}")
        if self.status not in STATUSES:
            raise ValueError(f"unknown storage status {self.status!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote storages need an endpoint")
        if self.kind != "remote" and self.mode != "materialized":
            raise ValueError(f"{self.kind} storages are always materialized")

    def with_status(self, status: str) -> "StorageDescriptor":
        return replace(self, status=status)

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "mode": self.mode,
            "endpoint": self.endpoint,
            "status": self.status,
            "timeout": self.timeout,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "StorageDescriptor":
        return cls(
            id=doc["id"],
            kind=doc["kind"],
            mode=doc.get("mode", "materialized"),
            endpoint=doc.get("endpoint"),
            status=doc.get("status", "active"),
            timeout=float(doc.get("timeout", 10.0)),
        )


def subject_term(subject: str) -> Term:
    if subject.startswith("_:"):
        return Term(BLANK_KIND, subject[2:])
    return Term(IRI_KIND, subject)


def subject_key(subject: str):
    """Canonical sort key of a subject string (IRIs before blank nodes)."""
    if subject.startswith("_:"):
        return (BLANK_KIND, subject[2:])
    return (IRI_KIND, subject)


def term_subject(term: Term) -> str:
    return "_:" + term.value if term.kind == BLANK_KIND else term.value


@dataclass
class ObjectRecord:
    """Subject-centric view of one individual.

    ``rdf:type`` lives in ``classes`` and never inside ``properties``.
    Readers must treat records returned by a storage as immutable.
    """

    subject: str
    classes: set[str] = field(default_factory=set)
    properties: dict[str, list[Term]] = field(default_factory=dict)

    def normalized(self) -> "ObjectRecord":
        """Copy with duplicate values removed and ``rdf:type`` folded into classes."""
        classes = set(self.classes)
        props: dict[str, list[Term]] = {}
        for prop, values in self.properties.items():
            if prop == RDF_TYPE:
                for v in values:
                    if v.kind != IRI_KIND:
                        raise ValueError("rdf:type values must be IRIs")
                    classes.add(v.value)
                continue
            seen: dict[Term, None] = {}
            for v in values:
                seen.setdefault(v, None)
            if seen:
                props[prop] = list(seen)
        return ObjectRecord(self.subject, classes, props)

    def copy(self) -> "ObjectRecord":
        return ObjectRecord(self.subject, set(self.classes), {p: list(v) for p, v in self.properties.items()})

    def triples(self) -> Iterator[Triple]:
        s = subject_term(self.subject)
        rdf_type = Term(IRI_KIND, RDF_TYPE)
        for c in sorted(self.classes):
            yield Triple(s, rdf_type, Term(IRI_KIND, c))
        for p, values in self.properties.items():
            pt = Term(IRI_KIND, p)
            for v in values:
                yield Triple(s, pt, v)

    def same_content(self, other: "ObjectRecord") -> bool:
        if self.subject != other.subject or set(self.classes) != set(other.classes):
            return False
        mine = {p: sorted(v) for p, v in self.properties.items() if v}
        theirs = {p: sorted(v) for p, v in other.properties.items() if v}
        return mine == theirs

    @classmethod
    def from_triples(cls, subject: str, triples: Iterable[Triple]) -> "ObjectRecord":
        rec = cls(subject)
        for t in triples:
            if t.predicate.value == RDF_TYPE and t.object.kind == IRI_KIND:
                rec.classes.add(t.object.value)
            else:
                rec.properties.setdefault(t.predicate.value, []).append(t.object)
        return rec


@dataclass(frozen=True)
class PropertyFilter:
    prop: str
    op: str
    value: Term

    def __post_init__(self):
        if self.op not in FILTER_OPS:
            raise ValueError(f"unknown filter op {self.op!r}")
        if self.op == "contains" and self.value.kind != LITERAL_KIND:
            raise ValueError("contains needs a string literal")

    def matches_value(self, value: Term) -> bool:
        try:
            if self.op == "contains":
                return self.value.value in string_form(value)
            return compare(_OP_SYMBOL[self.op], value, self.value)
        except FilterError:
            return False

    def matches(self, record: ObjectRecord) -> bool:
        return any(self.matches_value(v) for v in record.properties.get(self.prop, ()))


@dataclass(frozen=True)
class PatternQuery:
    cls: str
    filters: tuple[PropertyFilter, ...] = ()
    offset: int = 0
    limit: int | None = None

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError("offset must be non-negative")
        if self.limit is not None and self.limit < 0:
            raise ValueError("limit must be non-negative")


@dataclass(frozen=True)
class IndexSpec:
    prop: str
    kind: str

    def __post_init__(self):
        if self.kind not in INDEX_KINDS:
            raise ValueError(f"unknown index kind {self.kind!r}")


@dataclass
class ClassStats:
    """Exact per-class counts; ``single_valued`` lists properties every record has exactly once."""

    count: int
    single_valued: set[str] = field(default_factory=set)


class Storage(ABC):
    """A unified way of working with the individuals held by one backend."""

    def __init__(self, descriptor: StorageDescriptor):
        self.descriptor = descriptor
        self._subject_locks = [threading.Lock() for _ in range(64)]

    @property
    def id(self) -> str:
        return self.descriptor.id

    def lock_for(self, subject: str) -> threading.Lock:
        return self._subject_locks[hash(subject) % len(self._subject_locks)]

    def check_readable(self) -> None:
        if self.descriptor.status == "offline":
            raise StorageUnavailable(self.id, "storage offline")

    def check_writable(self) -> None:
        status = self.descriptor.status
        if status == "offline":
            raise StorageUnavailable(self.id, "storage offline")
        if status == "draining":
            raise StorageDraining(self.id, "storage draining")
        if self.descriptor.mode != "materialized":
            raise ReadOnlyStorage(self.id, "on-demand storages are read-only")

    # writes
    @abstractmethod
    def put(self, record: ObjectRecord) -> None:
        """Insert or fully replace the record for ``record.subject``."""

    @abstractmethod
    def delete(self, subject: str) -> bool:
        ...

    # reads
    @abstractmethod
    def get(self, subject: str) -> ObjectRecord | None:
        ...

    def get_many(self, subjects: Iterable[str]) -> dict[str, ObjectRecord]:
        out = {}
        for s in subjects:
            rec = self.get(s)
            if rec is not None:
                out[s] = rec
        return out

    @abstractmethod
    def scan(self, q: PatternQuery) -> list[ObjectRecord]:
        """Records of ``q.cls`` matching every filter, in subject order, after offset/limit."""

    @abstractmethod
    def stats(self, cls: str) -> ClassStats:
        ...

    def count(self, cls: str) -> int:
        return self.stats(cls).count

    @abstractmethod
    def classes(self) -> list[str]:
        ...

    def subjects(self, cls: str) -> list[str]:
        return [r.subject for r in self.scan(PatternQuery(cls))]

    def iter_records(self) -> Iterator[ObjectRecord]:
        """Every record held, in subject order."""
        seen: dict[str, ObjectRecord] = {}
        for c in self.classes():
            for r in self.scan(PatternQuery(c)):
                seen.setdefault(r.subject, r)
        for s in sorted(seen, key=subject_key):
            yield seen[s]

    def ensure_index(self, spec: IndexSpec) -> bool:
        """Create an index; returns False when it already existed."""
        return False

    def indexes(self) -> list[IndexSpec]:
        return []

    def scan_strategy(self, q: PatternQuery) -> list[str]:
        """How ``scan(q)`` would run, e.g. ``["index-range(<p>)", "column-scan(<q>)"]``."""
        return ["scan"]

    def close(self) -> None:
        pass


class RWLock:
    """Many readers or one writer; waiting writers block new readers."""

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer = False
        self._waiting_writers = 0

    def acquire_read(self) -> None:
        with self._cond:
            while self._writer or self._waiting_writers:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        with self._cond:
            self._waiting_writers += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting_writers -= 1
            self._writer = True

    def release_write(self) -> None:
        with self._cond:
            self._writer = False
            self._cond.notify_all()

    class _Guard:
        __slots__ = ("acquire", "release")

        def __init__(self, acquire, release):
            self.acquire = acquire
            self.release = release

        def __enter__(self):
            self.acquire()

        def __exit__(self, *exc):
            self.release()

    def read(self):
        return self._Guard(self.acquire_read, self.release_read)

    def write(self):
        return self._Guard(self.acquire_write, self.release_write)
