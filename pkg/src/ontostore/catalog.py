"""Schema (TBox), storage registry, class assignments and live redistribution."""
from __future__ import annotations

import contextlib
import itertools
import json
import logging
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import (
    Conflict,
    DuplicateStorage,
    MalformedRequest,
    NotFound,
    SchemaError,
    StorageFailure,
    UnknownClass,
    UnknownStorage,
)
from .rdf import (
    IRI_KIND,
    LITERAL_KIND,
    OWL,
    RDF,
    RDF_TYPE,
    RDFS,
    RDFS_CLASS,
    RDFS_LABEL,
    RDFS_SUBCLASSOF,
    XSD_STRING,
    Term,
    Triple,
)
from .storage import ObjectRecord, Storage, StorageDescriptor, StorageError, TripleIndexStore, open_storage

log = logging.getLogger(__name__)

OWL_CLASS = OWL + "Class"
RDF_PROPERTY = RDF + "Property"
OWL_OBJECT_PROPERTY = OWL + "ObjectProperty"
OWL_DATATYPE_PROPERTY = OWL + "DatatypeProperty"
RDFS_RANGE = RDFS + "range"
RDFS_DOMAIN = RDFS + "domain"
CLASS_TYPES = (RDFS_CLASS, OWL_CLASS)
PROPERTY_TYPES = (RDF_PROPERTY, OWL_OBJECT_PROPERTY, OWL_DATATYPE_PROPERTY)
DEFAULT_STORAGE = "default"
CATALOG_HEADER = "# ontostore-catalog v1"


# -- TBox ------------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyDef:
    iri: str
    range: str | None = None
    domain: str | None = None
    label: str | None = None


@dataclass(frozen=True)
class TBox:
    classes: frozenset = frozenset()
    edges: frozenset = frozenset()
    properties: Mapping[str, PropertyDef] = field(default_factory=dict)
    labels: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        children: dict[str, set[str]] = {}
        parents: dict[str, set[str]] = {}
        for child, parent in self.edges:
            children.setdefault(parent, set()).add(child)
            parents.setdefault(child, set()).add(parent)
        object.__setattr__(self, "_children", children)
        object.__setattr__(self, "_parents", parents)
        object.__setattr__(self, "_down", {})
        object.__setattr__(self, "_up", {})

    @staticmethod
    def _reach(start: str, edges: dict[str, set[str]]) -> frozenset:
        seen = {start}
        stack = [start]
        while stack:
            for nxt in edges.get(stack.pop(), ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return frozenset(seen)

    def subclass_closure(self, cls: str) -> frozenset:
        """``cls`` and every class below it."""
        if cls not in self.classes:
            raise UnknownClass(f"unknown class {cls}")
        hit = self._down.get(cls)
        if hit is None:
            hit = self._down[cls] = self._reach(cls, self._children)
        return hit

    def closure_or_self(self, cls: str) -> frozenset:
        return self.subclass_closure(cls) if cls in self.classes else frozenset((cls,))

    def superclasses(self, cls: str) -> frozenset:
        """``cls`` and every class above it (just ``cls`` when undeclared)."""
        hit = self._up.get(cls)
        if hit is None:
            hit = self._up[cls] = self._reach(cls, self._parents)
        return hit

    def expand(self, classes: Iterable[str]) -> set[str]:
        out: set[str] = set()
        for c in classes:
            out |= self.superclasses(c)
        return out

    def triples(self) -> list[Triple]:
        def iri(v):
            return Term(IRI_KIND, v)

        rdf_type = iri(RDF_TYPE)
        out = [Triple(iri(c), rdf_type, iri(RDFS_CLASS)) for c in sorted(self.classes)]
        out += [Triple(iri(c), iri(RDFS_SUBCLASSOF), iri(p)) for c, p in sorted(self.edges)]
        for c, label in sorted(self.labels.items()):
            out.append(Triple(iri(c), iri(RDFS_LABEL), Term(LITERAL_KIND, label, XSD_STRING)))
        for p in sorted(self.properties):
            d = self.properties[p]
            out.append(Triple(iri(p), rdf_type, iri(RDF_PROPERTY)))
            if d.range:
                out.append(Triple(iri(p), iri(RDFS_RANGE), iri(d.range)))
            if d.domain:
                out.append(Triple(iri(p), iri(RDFS_DOMAIN), iri(d.domain)))
            if d.label:
                out.append(Triple(iri(p), iri(RDFS_LABEL), Term(LITERAL_KIND, d.label, XSD_STRING)))
        return out


SCHEMA_PREDICATES = (RDFS_SUBCLASSOF, RDFS_RANGE, RDFS_DOMAIN)


def schema_triples(triples: Iterable[Triple]) -> list[Triple]:
    """The subset of ``triples`` that :func:`load_tbox` reads."""
    triples = list(triples)
    declared = set()
    out = []
    for t in triples:
        p = t.predicate.value
        if p == RDF_TYPE and t.object.kind == IRI_KIND and t.object.value in CLASS_TYPES + PROPERTY_TYPES:
            declared.add(t.subject)
            out.append(t)
        elif p in SCHEMA_PREDICATES:
            declared.add(t.subject)
            out.append(t)
    out += [t for t in triples if t.predicate.value == RDFS_LABEL and t.subject in declared]
    return out


def load_tbox(schema: Iterable[Triple]) -> TBox:
    """Build a TBox; owl:Class is accepted as a synonym of rdfs:Class.

    Raises :class:`SchemaError` on subclass cycles and on edges naming
    undeclared classes.
    """
    classes: set[str] = set()
    edges: set[tuple[str, str]] = set()
    props: dict[str, dict] = {}
    labels: dict[str, str] = {}
    for t in schema:
        s, p, o = t
        if s.kind != IRI_KIND:
            continue
        pv = p.value
        if pv == RDF_TYPE and o.kind == IRI_KIND:
            if o.value in CLASS_TYPES:
                classes.add(s.value)
            elif o.value in PROPERTY_TYPES:
                props.setdefault(s.value, {})
        elif pv == RDFS_SUBCLASSOF:
            if o.kind != IRI_KIND:
                raise SchemaError(f"subClassOf object of {s.value} must be an IRI")
            edges.add((s.value, o.value))
        elif pv in (RDFS_RANGE, RDFS_DOMAIN) and o.kind == IRI_KIND:
            props.setdefault(s.value, {})["range" if pv == RDFS_RANGE else "domain"] = o.value
        elif pv == RDFS_LABEL and o.kind == LITERAL_KIND:
            labels[s.value] = o.value
    for child, parent in edges:
        for c in (child, parent):
            if c not in classes:
                raise SchemaError(f"subClassOf edge {child} -> {parent} references undeclared class {c}")
    _check_acyclic(classes, edges)
    pdefs = {p: PropertyDef(p, d.get("range"), d.get("domain"), labels.get(p)) for p, d in props.items()}
    class_labels = {c: label for c, label in labels.items() if c in classes}
    return TBox(frozenset(classes), frozenset(edges), MappingProxyType(pdefs), MappingProxyType(class_labels))


def _check_acyclic(classes: set[str], edges: set[tuple[str, str]]) -> None:
    parents: dict[str, list[str]] = {}
    for child, parent in edges:
        parents.setdefault(child, []).append(parent)
    state: dict[str, int] = {}
    for start in sorted(classes):
        if state.get(start):
            continue
        stack = [(start, iter(sorted(parents.get(start, ()))))]
        state[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
                continue
            st = state.get(nxt, 0)
            if st == 1:
                raise SchemaError(f"subclass cycle through {nxt}")
            if st == 0:
                state[nxt] = 1
                stack.append((nxt, iter(sorted(parents.get(nxt, ())))))


# -- snapshots -------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogSnapshot:
    """Immutable view of registry and assignments taken at plan time."""

    version: int
    tbox: TBox
    storages: Mapping[str, Storage]
    assignments: Mapping[str, tuple[str, ...]]
    migrations: Mapping[str, tuple[str, str]]

    @property
    def default(self) -> Storage:
        return self.storages[DEFAULT_STORAGE]

    def storage(self, storage_id: str) -> Storage:
        try:
            return self.storages[storage_id]
        except KeyError:
            raise UnknownStorage(f"unknown storage {storage_id!r}") from None

    def resolve(self, cls: str) -> list[Storage]:
        """Read targets: assigned storages in order (draining included), else the default."""
        ids = self.assignments.get(cls)
        if not ids:
            return [self.default]
        return [self.storages[i] for i in ids]

    def resolve_write(self, cls: str) -> list[Storage]:
        """Write targets: assigned minus draining, plus a migration target in its copy phase."""
        out = [s for s in self.resolve(cls) if s.descriptor.status != "draining"]
        mig = self.migrations.get(cls)
        if mig is not None:
            target = self.storages[mig[1]]
            if target not in out:
                out.append(target)
        return out

    def route_write(self, classes: Iterable[str]) -> list[Storage]:
        """Union of write targets over ``classes``, first-seen order."""
        out: list[Storage] = []
        for c in sorted(classes) or [None]:
            targets = [self.default] if c is None else self.resolve_write(c)
            for s in targets:
                if s not in out:
                    out.append(s)
        return out

    def read_targets(self, classes: Iterable[str]) -> list[tuple[Storage, str]]:
        """Distinct (storage, class) pairs serving the given classes."""
        out = []
        for c in classes:
            for s in self.resolve(c):
                if (s, c) not in out:
                    out.append((s, c))
        return out

    def all_storages(self) -> list[Storage]:
        return [self.storages[k] for k in sorted(self.storages, key=lambda k: (k != DEFAULT_STORAGE, k))]


# -- migration jobs --------------------------------------------------------------

PHASES = ("copying", "switching", "cleaning", "done", "failed")


@dataclass
class MigrationJob:
    id: str
    cls: str
    source: str
    target: str
    phase: str = "copying"
    copied: int = 0
    total: int = 0
    error: str | None = None
    history: list[str] = field(default_factory=lambda: ["copying"])
    started: float = field(default_factory=time.time)
    finished: float | None = None
    _done: threading.Event = field(default_factory=threading.Event, repr=False)

    def advance(self, phase: str) -> None:
        if PHASES.index(phase) < PHASES.index(self.phase):
            raise RuntimeError(f"phase {phase} after {self.phase}")
        self.phase = phase
        self.history.append(phase)
        if phase in ("done", "failed"):
            self.finished = time.time()
            self._done.set()

    def wait(self, timeout: float | None = None) -> bool:
        return self._done.wait(timeout)

    @property
    def running(self) -> bool:
        return self.phase not in ("done", "failed")

    def to_doc(self) -> dict:
        return {
            "id": self.id,
            "class": self.cls,
            "from": self.source,
            "to": self.target,
            "phase": self.phase,
            "copied": self.copied,
            "total": self.total,
            "error": self.error,
            "history": list(self.history),
        }


class StripedLocks:
    """Per-subject mutual exclusion over a fixed pool of re-entrant locks."""

    def __init__(self, n: int = 256):
        self._locks = [threading.RLock() for _ in range(n)]

    def __call__(self, subject: str) -> threading.RLock:
        return self._locks[hash(subject) % len(self._locks)]


# -- catalog ---------------------------------------------------------------------


class Catalog:
    """Registry, assignment and TBox holder.

    Mutations take one writer lock and publish a fresh snapshot; readers
    grab the current snapshot without locking.  ``reading()`` additionally
    records which snapshot version a reader (or writer) is using so that a
    migration can wait for everyone still on a pre-switch snapshot.
    """

    def __init__(self, data_dir: str | os.PathLike | None = None, http_client=None, retry_delay: float = 0.05):
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.http_client = http_client
        self.retry_delay = retry_delay
        self.subject_lock = StripedLocks()
        self._lock = threading.RLock()
        self._readers_cond = threading.Condition()
        self._readers: Counter = Counter()
        self._versions = itertools.count(1)
        self._job_ids = itertools.count(1)
        self.jobs: dict[str, MigrationJob] = {}
        default_path = self._storage_path(DEFAULT_STORAGE)
        default = TripleIndexStore(StorageDescriptor(DEFAULT_STORAGE, "triple-index"), default_path)
        self._storages: dict[str, Storage] = {DEFAULT_STORAGE: default}
        self._assignments: dict[str, tuple[str, ...]] = {}
        self._migrations: dict[str, tuple[str, str]] = {}
        self._tbox = self._tbox_from_store(default)
        if self.data_dir is not None:
            self._load_document()
        self._publish()

    # -- snapshot plumbing ------------------------------------------------------
    def _publish(self) -> None:
        self._snapshot = CatalogSnapshot(
            next(self._versions),
            self._tbox,
            MappingProxyType(dict(self._storages)),
            MappingProxyType(dict(self._assignments)),
            MappingProxyType(dict(self._migrations)),
        )

    def snapshot(self) -> CatalogSnapshot:
        return self._snapshot

    @property
    def tbox(self) -> TBox:
        return self._snapshot.tbox

    @property
    def default(self) -> TripleIndexStore:
        return self._storages[DEFAULT_STORAGE]

    @contextlib.contextmanager
    def reading(self):
        """Pin the current snapshot for the duration of a read or write."""
        with self._readers_cond:
            snap = self._snapshot
            self._readers[snap.version] += 1
        try:
            yield snap
        finally:
            with self._readers_cond:
                self._readers[snap.version] -= 1
                if not self._readers[snap.version]:
                    del self._readers[snap.version]
                self._readers_cond.notify_all()

    def wait_for_readers_before(self, version: int, timeout: float = 60.0) -> bool:
        deadline = time.monotonic() + timeout
        with self._readers_cond:
            while any(v < version for v in self._readers):
                left = deadline - time.monotonic()
                if left <= 0:
                    log.warning("grace period expired with readers still on old snapshots")
                    return False
                self._readers_cond.wait(left)
        return True

    # -- TBox -------------------------------------------------------------------
    @staticmethod
    def _schema_from_store(store: TripleIndexStore) -> list[Triple]:
        found: list[Triple] = []
        type_term = Term(IRI_KIND, RDF_TYPE)
        for t in CLASS_TYPES + PROPERTY_TYPES:
            found += store.match_pattern(None, type_term, Term(IRI_KIND, t))
        for p in SCHEMA_PREDICATES:
            found += store.match_pattern(None, Term(IRI_KIND, p), None)
        label = Term(IRI_KIND, RDFS_LABEL)
        for s in {t.subject for t in found}:
            found += store.match_pattern(s, label, None)
        return found

    def _tbox_from_store(self, store: TripleIndexStore) -> TBox:
        return load_tbox(self._schema_from_store(store))

    def load_schema(self, triples: Iterable[Triple]) -> TBox:
        """Merge schema triples into the TBox; they are also stored in the default store."""
        new = schema_triples(triples)
        with self._lock:
            merged = load_tbox(self._schema_from_store(self.default) + new)
            self.default.add_triples(new)
            self._tbox = merged
            self._publish()
            return merged

    # -- registry ---------------------------------------------------------------
    def _storage_path(self, storage_id: str):
        if self.data_dir is None:
            return None
        return self.data_dir / "storages" / storage_id

    def register_storage(self, desc: StorageDescriptor, adapter: Storage | None = None) -> str:
        with self._lock:
            if desc.id in self._storages:
                raise DuplicateStorage(f"duplicate storage id {desc.id!r}")
            if adapter is None:
                path = self._storage_path(desc.id) if desc.kind != "remote" else None
                adapter = open_storage(desc, path, self.http_client)
            if desc.kind == "remote":
                try:
                    adapter.probe()
                except StorageError as exc:
                    adapter.close()
                    raise StorageFailure(f"probe of {desc.endpoint} failed: {exc}") from None
            self._storages[desc.id] = adapter
            self._save()
            self._publish()
            return desc.id

    def deregister_storage(self, storage_id: str) -> None:
        with self._lock:
            if storage_id == DEFAULT_STORAGE:
                raise Conflict("the default storage cannot be deregistered")
            if storage_id not in self._storages:
                raise UnknownStorage(f"unknown storage {storage_id!r}")
            users = sorted(c for c, ids in self._assignments.items() if storage_id in ids)
            if users:
                raise Conflict(f"storage {storage_id!r} is still assigned to {', '.join(users)}")
            adapter = self._storages.pop(storage_id)
            adapter.close()
            self._save()
            self._publish()

    def set_storage_status(self, storage_id: str, status: str) -> StorageDescriptor:
        with self._lock:
            adapter = self._snapshot.storage(storage_id)
            try:
                adapter.descriptor = adapter.descriptor.with_status(status)
            except ValueError as exc:
                raise MalformedRequest(str(exc)) from None
            self._save()
            self._publish()
            return adapter.descriptor

    def storages(self) -> list[StorageDescriptor]:
        return [s.descriptor for s in self._snapshot.all_storages()]

    # -- assignment -------------------------------------------------------------
    def assign_class(self, cls: str, storage_ids: list[str]) -> tuple[str, ...]:
        with self._lock:
            if cls not in self._tbox.classes:
                raise UnknownClass(f"unknown class {cls}")
            if not storage_ids:
                raise MalformedRequest("empty storage list; unassign the class instead")
            ids = tuple(dict.fromkeys(storage_ids))
            for i in ids:
                if i not in self._storages:
                    raise UnknownStorage(f"unknown storage {i!r}")
                if self._storages[i].descriptor.status != "active":
                    raise Conflict(f"storage {i!r} is not active")
            if cls in self._migrations:
                raise Conflict(f"class {cls} is being redistributed")
            self._assignments[cls] = ids
            self._save()
            self._publish()
            return ids

    def unassign_class(self, cls: str) -> None:
        with self._lock:
            if cls in self._migrations:
                raise Conflict(f"class {cls} is being redistributed")
            self._assignments.pop(cls, None)
            self._save()
            self._publish()

    def assignments(self) -> dict[str, tuple[str, ...]]:
        return dict(self._snapshot.assignments)

    def resolve_storages(self, cls: str, for_write: bool = False) -> list[StorageDescriptor]:
        snap = self._snapshot
        targets = snap.resolve_write(cls) if for_write else snap.resolve(cls)
        return [s.descriptor for s in targets]

    # -- redistribution ---------------------------------------------------------
    def redistribute(self, cls: str, source: str, target: str, throttle: float = 0.0, retries: int = 3) -> MigrationJob:
        with self._lock:
            snap = self._snapshot
            if cls not in self._tbox.classes:
                raise UnknownClass(f"unknown class {cls}")
            for i in (source, target):
                if i not in self._storages:
                    raise UnknownStorage(f"unknown storage {i!r}")
            if source == target:
                raise MalformedRequest("source and target are the same storage")
            if self._storages[target].descriptor.status != "active":
                raise Conflict(f"target storage {target!r} is not active")
            if self._storages[target].descriptor.mode != "materialized":
                raise Conflict(f"target storage {target!r} is read-only")
            if source not in [s.id for s in snap.resolve(cls)]:
                raise Conflict(f"class {cls} is not assigned to {source!r}")
            if any(j.cls == cls and j.running for j in self.jobs.values()):
                raise Conflict(f"a redistribution of {cls} is already running")
            job = MigrationJob(f"job-{next(self._job_ids)}", cls, source, target)
            self.jobs[job.id] = job
            self._migrations[cls] = (source, target)
            self._publish()
            started_version = self._snapshot.version
        threading.Thread(
            target=self._run_job, args=(job, started_version, throttle, retries), name=job.id, daemon=True
        ).start()
        return job

    def job(self, job_id: str) -> MigrationJob:
        try:
            return self.jobs[job_id]
        except KeyError:
            raise NotFound(f"unknown job {job_id!r}") from None

    def _write_retry(self, dst: Storage, rec: ObjectRecord, retries: int) -> None:
        for attempt in range(retries + 1):
            try:
                dst.put(rec)
                return
            except StorageError:
                if attempt == retries:
                    raise
                time.sleep(self.retry_delay * (attempt + 1))

    def _kept_by_other_class(self, snap: CatalogSnapshot, rec: ObjectRecord, storage_id: str, cls: str) -> bool:
        return any(c != cls and storage_id in [s.id for s in snap.resolve(c)] for c in rec.classes)

    def _run_job(self, job: MigrationJob, started_version: int, throttle: float, retries: int) -> None:
        src = self._storages[job.source]
        dst = self._storages[job.target]
        copied: list[str] = []
        try:
            # every writer from now on dual-writes; wait out the ones that did not
            self.wait_for_readers_before(started_version)
            subjects = src.subjects(job.cls)
            job.total = len(subjects)
            for s in subjects:
                with self.subject_lock(s):
                    rec = src.get(s)
                    if rec is not None and job.cls in rec.classes:
                        self._write_retry(dst, rec, retries)
                        copied.append(s)
                job.copied += 1
                if throttle:
                    time.sleep(throttle)
            job.advance("switching")
            with self._lock:
                ids = list(self._assignments.get(job.cls, (DEFAULT_STORAGE,)))
                ids = [job.target if i == job.source else i for i in ids]
                self._assignments[job.cls] = tuple(dict.fromkeys(ids))
                self._migrations.pop(job.cls, None)
                self._save()
                self._publish()
                switch_version = self._snapshot.version
            job.advance("cleaning")
            self.wait_for_readers_before(switch_version)
            snap = self._snapshot
            if job.source not in [s.id for s in snap.resolve(job.cls)]:
                for s in src.subjects(job.cls):
                    with self.subject_lock(s):
                        rec = src.get(s)
                        if rec is None or self._kept_by_other_class(snap, rec, job.source, job.cls):
                            continue
                        src.delete(s)
            job.advance("done")
        except Exception as exc:  # noqa: BLE001
            log.warning("redistribution %s failed: %s", job.id, exc)
            job.error = str(exc)
            if job.phase == "copying":
                with self._lock:
                    self._migrations.pop(job.cls, None)
                    self._publish()
                snap = self._snapshot
                for s in copied:
                    try:
                        with self.subject_lock(s):
                            rec = dst.get(s)
                            if rec is not None and not self._kept_by_other_class(snap, rec, job.target, ""):
                                dst.delete(s)
                    except StorageError:
                        break
            job.advance("failed")

    # -- persistence ------------------------------------------------------------
    def _document(self) -> str:
        lines = [CATALOG_HEADER]
        for sid in sorted(self._storages):
            if sid == DEFAULT_STORAGE:
                continue
            lines.append("storage " + json.dumps(self._storages[sid].descriptor.to_doc(), sort_keys=True))
        for cls in sorted(self._assignments):
            lines.append("assign " + " ".join([cls, *self._assignments[cls]]))
        return "\n".join(lines) + "\n"

    def _save(self) -> None:
        if self.data_dir is None:
            return
        self.data_dir.mkdir(parents=True, exist_ok=True)
        path = self.data_dir / "catalog.txt"
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self._document())
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _load_document(self) -> None:
        path = self.data_dir / "catalog.txt"
        if not path.exists():
            return
        lines = path.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != CATALOG_HEADER:
            raise SchemaError(f"{path}: unsupported catalog format")
        for n, line in enumerate(lines[1:], 2):
            if not line.strip() or line.startswith("#"):
                continue
            word, _, rest = line.partition(" ")
            if word == "storage":
                desc = StorageDescriptor.from_doc(json.loads(rest))
                path_ = self._storage_path(desc.id) if desc.kind != "remote" else None
                self._storages[desc.id] = open_storage(desc, path_, self.http_client)
            elif word == "assign":
                cls, *ids = rest.split()
                self._assignments[cls] = tuple(ids)
            else:
                raise SchemaError(f"{path}:{n}: unknown entry {word!r}")

    def close(self) -> None:
        for s in self._storages.values():
            s.close()


__all__ = [
    "Catalog",
    "CatalogSnapshot",
    "DEFAULT_STORAGE",
    "MigrationJob",
    "PropertyDef",
    "TBox",
    "load_tbox",
    "schema_triples",
]
