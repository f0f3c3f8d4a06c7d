"""The platform facade: queries, hydrated object reads, the validated write path and the change feed."""
from __future__ import annotations

import itertools
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable
from urllib.parse import quote

from .. import codec
from ..catalog import Catalog, CatalogSnapshot
from ..errors import MalformedRequest, StorageFailure, UnknownClass, ValidationFailed
from ..rdf import (
    IRI_KIND,
    LITERAL_KIND,
    RDF_TYPE,
    RDFS_LABEL,
    WELL_KNOWN_PREFIXES,
    Triple,
    iter_ntriples,
    parse_document,
    split_lines,
)
from ..shacl import NodeShape, parse_shapes, run_rules, validate
from ..sparql.ast import Query
from ..sparql.parser import parse_query
from ..sparql.reference import ResultSet
from ..storage import ObjectRecord, PatternQuery, Storage, StorageError, subject_key, term_subject
from .execute import PlanRunner, _merge_windows
from .plan import plan_query

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChangeEvent:
    cursor: int
    kind: str  # upsert | delete
    subject: str
    classes: tuple[str, ...]
    timestamp: float

    def to_doc(self) -> dict:
        return {
            "cursor": self.cursor,
            "kind": self.kind,
            "subject": self.subject,
            "classes": list(self.classes),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "ChangeEvent":
        return cls(int(doc["cursor"]), doc["kind"], doc["subject"], tuple(doc.get("classes", ())), float(doc["timestamp"]))


class ChangeFeed:
    """Append-only, cursor-addressed event list held in memory."""

    def __init__(self):
        self._lock = threading.Lock()
        self._events: list[ChangeEvent] = []
        self._cursor = itertools.count(1)

    def append(self, kind: str, subject: str, classes: Iterable[str]) -> ChangeEvent:
        with self._lock:
            ev = ChangeEvent(next(self._cursor), kind, subject, tuple(sorted(classes)), time.time())
            self._events.append(ev)
            return ev

    def since(self, cursor: int, limit: int = 100) -> list[ChangeEvent]:
        if cursor < 0:
            raise MalformedRequest("cursor must be non-negative")
        with self._lock:
            # cursors are 1..n in list order
            return self._events[cursor:cursor + max(limit, 0)]

    @property
    def latest(self) -> int:
        with self._lock:
            return self._events[-1].cursor if self._events else 0

    def count(self, kind: str | None = None) -> int:
        with self._lock:
            return sum(1 for e in self._events if kind is None or e.kind == kind)


@dataclass
class WriteReport:
    subject: str
    validated: bool
    rules_applied: int
    derived: list[Triple]
    storages_written: list[str]
    cursor: int
    created: bool
    side_writes: list[str] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "subject": self.subject,
            "validated": self.validated,
            "rules-applied": self.rules_applied,
            "derived": [t.n3() for t in self.derived],
            "storages-written": self.storages_written,
            "change-cursor": self.cursor,
            "created": self.created,
            "side-writes": self.side_writes,
        }


@dataclass
class ConsistencyReport:
    cls: str
    checked: int = 0
    disagreements: list[tuple[str, tuple[str, ...], str]] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "class": self.cls,
            "checked-subjects": self.checked,
            "disagreements": [{"subject": s, "storages": list(ids), "property": p} for s, ids, p in self.disagreements],
        }


def _differing_property(a: ObjectRecord, b: ObjectRecord) -> str | None:
    if set(a.classes) != set(b.classes):
        return RDF_TYPE
    for prop in sorted(set(a.properties) | set(b.properties)):
        if sorted(a.properties.get(prop, ())) != sorted(b.properties.get(prop, ())):
            return prop
    return None


def _label_of(rec: ObjectRecord) -> str | None:
    labels = [v for v in rec.properties.get(RDFS_LABEL, ()) if v.kind == LITERAL_KIND]
    return min(labels).value if labels else None


class Platform:
    """One platform instance: a catalog of storages plus shapes and a change feed."""

    def __init__(
        self,
        data_dir: str | Path | None = None,
        *,
        http_client=None,
        prefixes: dict[str, str] | None = None,
        sparql_mode: str = "federated",
        workers: int = 8,
    ):
        if sparql_mode not in ("federated", "native"):
            raise ValueError(f"unknown sparql mode {sparql_mode!r}")
        self.data_dir = Path(data_dir) if data_dir is not None else None
        self.catalog = Catalog(data_dir, http_client)
        self.prefixes = dict(WELL_KNOWN_PREFIXES)
        self.prefixes.update(prefixes or {})
        self.sparql_mode = sparql_mode
        self.shapes: list[NodeShape] = []
        self.feed = ChangeFeed()
        self.pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="fragment")
        if self.data_dir is not None and (self.data_dir / "shapes.ttl").exists():
            self.load_shapes((self.data_dir / "shapes.ttl").read_text(encoding="utf-8"), persist=False)

    # -- schema and shapes -------------------------------------------------------
    def load_schema(self, text: str | Iterable[Triple], format: str = "turtle"):
        if isinstance(text, str):
            doc = parse_document(text, format)
            self.prefixes.update(doc.prefixes)
            triples: Iterable[Triple] = doc
        else:
            triples = text
        return self.catalog.load_schema(triples)

    def load_shapes(self, text: str, persist: bool = True) -> list[NodeShape]:
        doc = parse_document(text, "turtle", prefixes=dict(self.prefixes))
        shapes = parse_shapes(doc)
        self.shapes = shapes
        self.prefixes.update(doc.prefixes)
        if persist and self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            (self.data_dir / "shapes.ttl").write_text(text, encoding="utf-8")
        return shapes

    @property
    def tbox(self):
        return self.catalog.tbox

    # -- queries ---------------------------------------------------------------------
    def parse(self, text: str | Query) -> Query:
        return text if isinstance(text, Query) else parse_query(text, self.prefixes)

    def _run(self, fn):
        try:
            return fn()
        except StorageError as exc:
            raise StorageFailure(str(exc), {"storage": getattr(exc, "storage_id", None)}) from exc

    def query(self, text: str | Query, overlay: dict[str, ObjectRecord] | None = None) -> ResultSet:
        q = self.parse(text)
        if q.form != "select":
            raise MalformedRequest("only SELECT queries return result sets; use construct()")
        with self.catalog.reading() as snap:
            if self.sparql_mode == "native" and not overlay and not snap.assignments:
                return self._run(lambda: snap.default.evaluate(q))
            plan = self._run(lambda: plan_query(q, snap, self.prefixes, overlay=bool(overlay)))
            return self._run(PlanRunner(plan, overlay, self.pool).select)

    def construct(self, text: str | Query, overlay: dict[str, ObjectRecord] | None = None) -> list[Triple]:
        q = self.parse(text)
        if q.form != "construct":
            raise MalformedRequest("construct() needs a CONSTRUCT query")
        with self.catalog.reading() as snap:
            plan = self._run(lambda: plan_query(q, snap, self.prefixes, overlay=bool(overlay)))
            return self._run(PlanRunner(plan, overlay, self.pool).construct)

    def explain(self, text: str | Query) -> str:
        q = self.parse(text)
        with self.catalog.reading() as snap:
            return self._run(lambda: plan_query(q, snap, self.prefixes).explain())

    # -- record lookup ---------------------------------------------------------------
    @staticmethod
    def _read_order(snap: CatalogSnapshot, classes: Iterable[str]) -> list[Storage]:
        out: list[Storage] = []
        for c in sorted(classes):
            for s in snap.resolve(c):
                if s not in out:
                    out.append(s)
        return out

    def _locate(self, snap: CatalogSnapshot, subject: str, include_on_demand: bool = True) -> list[tuple[Storage, ObjectRecord]]:
        found = []
        for s in snap.all_storages():
            if not include_on_demand and s.descriptor.mode == "on-demand":
                continue
            if s.descriptor.status == "offline":
                continue
            rec = s.get(subject)
            if rec is not None:
                found.append((s, rec))
        return found

    def _primary(self, snap: CatalogSnapshot, found: list[tuple[Storage, ObjectRecord]]) -> tuple[Storage, ObjectRecord] | None:
        """The copy earliest in assignment order wins."""
        if not found:
            return None
        holders = {s: r for s, r in found}
        for s in self._read_order(snap, found[0][1].classes):
            if s in holders:
                return s, holders[s]
        return found[0]

    def fetch(self, subject: str) -> ObjectRecord | None:
        with self.catalog.reading() as snap:
            hit = self._primary(snap, self._run(lambda: self._locate(snap, subject)))
            return hit[1] if hit else None

    def _classes_of(self, subject: str) -> set[str] | None:
        rec = self.fetch(subject)
        return set(rec.classes) if rec is not None else None

    def _labels(self, snap: CatalogSnapshot, records: Iterable[ObjectRecord]) -> dict[str, str]:
        wanted = sorted({v.value for r in records for vs in r.properties.values() for v in vs if v.kind == IRI_KIND})
        labels: dict[str, str] = {}
        remaining = wanted
        for s in snap.all_storages():
            if not remaining:
                break
            got = s.get_many(remaining)
            for subj, rec in got.items():
                label = _label_of(rec)
                if label is not None:
                    labels[subj] = label
            remaining = [w for w in remaining if w not in got]
        return labels

    def _warnings(self, snap: CatalogSnapshot, found: list[tuple[Storage, ObjectRecord]]) -> list[dict]:
        if len(found) < 2:
            return []
        base_storage, base = found[0]
        out = []
        for s, rec in found[1:]:
            prop = _differing_property(base, rec)
            if prop is not None:
                out.append({"subject": base.subject, "storages": [base_storage.id, s.id], "property": prop})
        return out

    def get_object(self, subject: str, hydrate: bool = True, consistency: bool = True):
        """Returns ``(record, labels, warnings)``; record is None when no storage holds the subject."""
        with self.catalog.reading() as snap:

            def work():
                found = self._locate(snap, subject)
                hit = self._primary(snap, found)
                if hit is None:
                    return None, {}, []
                rec = hit[1]
                ordered = [hit] + [f for f in found if f[0] is not hit[0]]
                warnings = self._warnings(snap, ordered) if consistency else []
                labels = self._labels(snap, [rec]) if hydrate else {}
                return rec, labels, warnings

            return self._run(work)

    def _targets_for(self, snap: CatalogSnapshot, cls: str, closure: bool) -> list[tuple[Storage, str]]:
        tbox = snap.tbox
        if closure:
            if cls not in tbox.classes:
                raise UnknownClass(f"unknown class {cls}")
            return snap.read_targets(sorted(tbox.subclass_closure(cls)))
        return snap.read_targets([cls])

    def scan(self, q: PatternQuery, closure: bool = True) -> list[ObjectRecord]:
        """A pattern query over every storage serving the class, deduplicated by subject."""
        with self.catalog.reading() as snap:
            targets = self._targets_for(snap, q.cls, closure)
            window = None if q.limit is None else q.offset + q.limit

            def work():
                if len(targets) == 1:
                    s, c = targets[0]
                    return s.scan(PatternQuery(c, q.filters, q.offset, q.limit))
                batches = [s.scan(PatternQuery(c, q.filters, 0, window)) for s, c in targets]
                return _merge_windows(batches, window)[q.offset:]

            return self._run(work)

    def class_stats(self, cls: str, closure: bool = False) -> tuple[int, set[str]]:
        with self.catalog.reading() as snap:
            targets = self._targets_for(snap, cls, closure)

            def work():
                if len(targets) == 1:
                    st = targets[0][0].stats(targets[0][1])
                    return st.count, set(st.single_valued)
                records = _merge_windows([s.scan(PatternQuery(c)) for s, c in targets], None)
                single: set[str] | None = None
                for r in records:
                    once = {p for p, vs in r.properties.items() if len(vs) == 1}
                    single = once if single is None else single & once
                return len(records), single or set()

            return self._run(work)

    def list_objects(self, q: PatternQuery, hydrate: bool = True, consistency: bool = False):
        """REST class listing: ``[(record, labels, warnings)]`` in subject order."""
        records = self.scan(q)
        with self.catalog.reading() as snap:
            labels = self._run(lambda: self._labels(snap, records)) if hydrate else {}
            out = []
            for rec in records:
                warnings = []
                if consistency:
                    warnings = self._warnings(snap, self._run(lambda r=rec: self._locate(snap, r.subject)))
                out.append((rec, labels, warnings))
            return out

    # -- writes ------------------------------------------------------------------------
    def _check_classes(self, record: ObjectRecord) -> None:
        unknown = sorted(c for c in record.classes if c not in self.tbox.classes)
        if unknown:
            raise UnknownClass(f"unknown class {unknown[0]}", {"classes": unknown})

    def _write_record(self, snap: CatalogSnapshot, record: ObjectRecord) -> list[str]:
        """Write to every routed storage; undo all of it if any replica fails."""
        targets = snap.route_write(record.classes)
        before = {s: r for s, r in self._locate(snap, record.subject, include_on_demand=False)}
        written: list[Storage] = []
        try:
            for s in targets:
                s.put(record)
                written.append(s)
        except StorageError as exc:
            for s in written:
                try:
                    if s in before:
                        s.put(before[s])
                    else:
                        s.delete(record.subject)
                except StorageError:
                    log.exception("rollback failed on %s for %s", s.id, record.subject)
            raise StorageFailure(f"write of {record.subject} failed: {exc}", {"storage": getattr(exc, "storage_id", None)}) from exc
        for s in before:
            if s not in targets and s.descriptor.status == "active":
                s.delete(record.subject)
        return [s.id for s in targets]

    def upsert(self, record: ObjectRecord) -> WriteReport:
        """Validate, apply rules, then replicate to every routed storage."""
        record = record.normalized()
        self._check_classes(record)
        subject = record.subject
        cat = self.catalog
        with cat.subject_lock(subject), cat.reading() as snap:
            tbox = snap.tbox
            report = validate(record, self.shapes, tbox, lookup=lambda iri: set(record.classes) if iri == subject else self._classes_of(iri))
            if not report.conforms:
                raise ValidationFailed(f"{subject} violates {len(report.violations)} constraint(s)", report.to_doc())
            derived, _, overlay = run_rules(record, self.shapes, tbox, self._rule_construct, self.fetch)
            final = overlay[subject]
            self._check_classes(final)
            existed = bool(self._locate(snap, subject, include_on_demand=False))
            written = self._write_record(snap, final)
            event = self.feed.append("upsert", subject, final.classes)
        touched = {term_subject(t.subject) for t in derived} - {subject}
        side = sorted(touched, key=subject_key)
        for other in side:
            self._write_side(overlay[other])
        return WriteReport(subject, True, len(derived), sorted(derived), written, event.cursor, not existed, side)

    def _write_side(self, record: ObjectRecord) -> None:
        """Merge rule output about another subject into that subject's record."""
        subject = record.subject
        with self.catalog.subject_lock(subject), self.catalog.reading() as snap:
            current = self.fetch(subject)
            merged = current.copy() if current is not None else ObjectRecord(subject)
            merged.classes |= record.classes
            for prop, values in record.properties.items():
                have = merged.properties.setdefault(prop, [])
                have.extend(v for v in values if v not in have)
            self._write_record(snap, merged)
            self.feed.append("upsert", subject, merged.classes)

    def _rule_construct(self, query: Query, overlay: dict[str, ObjectRecord]) -> list[Triple]:
        return self.construct(query, overlay=overlay)

    def put_raw(self, record: ObjectRecord, emit: bool = True) -> list[str]:
        """Store a record as-is: no validation, no rules."""
        record = record.normalized()
        with self.catalog.subject_lock(record.subject), self.catalog.reading() as snap:
            written = self._write_record(snap, record)
            if emit:
                self.feed.append("upsert", record.subject, record.classes)
        return written

    def delete(self, subject: str) -> bool:
        with self.catalog.subject_lock(subject), self.catalog.reading() as snap:
            found = self._run(lambda: self._locate(snap, subject, include_on_demand=False))
            if not found:
                return False
            classes: set[str] = set()
            for s, rec in found:
                classes |= rec.classes
                self._run(lambda s=s: s.delete(subject))
            self.feed.append("delete", subject, classes)
        return True

    def bulk_load(self, records: Iterable[ObjectRecord], emit: bool = True) -> int:
        """Fast unvalidated load, grouped per target storage."""
        n = 0
        with self.catalog.reading() as snap:
            groups: dict[Storage, list[ObjectRecord]] = {}
            normalized = []
            for rec in records:
                rec = rec.normalized()
                self._check_classes(rec)
                normalized.append(rec)
                for s in snap.route_write(rec.classes):
                    groups.setdefault(s, []).append(rec)
            for s, recs in groups.items():
                put_many = getattr(s, "put_many", None)
                if put_many is not None:
                    self._run(lambda: put_many(recs))
                else:
                    for r in recs:
                        self._run(lambda r=r: s.put(r))
            if emit:
                for rec in normalized:
                    self.feed.append("upsert", rec.subject, rec.classes)
            n = len(normalized)
        return n

    def load_ntriples(self, text: str | Iterable[str], emit: bool = True) -> int:
        lines = split_lines(text) if isinstance(text, str) else text
        by_subject: dict[str, list[Triple]] = {}
        for t in iter_ntriples(lines):
            by_subject.setdefault(term_subject(t.subject), []).append(t)
        records = [ObjectRecord.from_triples(s, ts) for s, ts in by_subject.items()]
        return self.bulk_load(records, emit)

    # -- consistency and feed ---------------------------------------------------------
    def check_consistency(self, cls: str, sample: int = 1000) -> ConsistencyReport:
        report = ConsistencyReport(cls)
        with self.catalog.reading() as snap:
            if cls not in snap.tbox.classes:
                raise UnknownClass(f"unknown class {cls}")
            replicas = snap.resolve(cls)
            if len(replicas) < 2:
                return report

            def work():
                subjects: set[str] = set()
                for s in replicas:
                    subjects.update(s.subjects(cls))
                chosen = sorted(subjects, key=subject_key)[:sample]
                copies = [s.get_many(chosen) for s in replicas]
                for subj in chosen:
                    report.checked += 1
                    present = [(s.id, c.get(subj)) for s, c in zip(replicas, copies)]
                    base_id, base = present[0]
                    for sid, rec in present[1:]:
                        if base is None or rec is None:
                            if base is not rec:
                                report.disagreements.append((subj, (base_id, sid), "(missing)"))
                            continue
                        prop = _differing_property(base, rec)
                        if prop is not None:
                            report.disagreements.append((subj, (base_id, sid), prop))
                return report

            return self._run(work)

    def changes_since(self, cursor: int, limit: int = 100) -> list[ChangeEvent]:
        return self.feed.since(cursor, limit)

    def close(self) -> None:
        self.pool.shutdown(wait=False)
        self.catalog.close()


class Follower:
    """Keeps a local platform in step with a leader's change feed over HTTP."""

    def __init__(self, local: Platform, client, batch: int = 500, interval: float = 0.1):
        self.local = local
        self.client = client
        self.batch = batch
        self.interval = interval
        self.cursor = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    def bootstrap_schema(self) -> None:
        resp = self.client.get("/admin/schema")
        resp.raise_for_status()
        self.local.load_schema(resp.text, "ntriples")

    def _fetch(self, subject: str) -> ObjectRecord | None:
        resp = self.client.get(
            "/object/" + quote(subject, safe=""), params={"raw": "true", "hydrate": "false", "consistency": "false"}
        )
        if resp.status_code == 404:
            return None
        resp.raise_for_status()
        return codec.record_from_doc(resp.json()["record"])

    def sync_once(self) -> int:
        """Apply one batch of events; returns the number consumed."""
        resp = self.client.get("/admin/changes", params={"since": self.cursor, "max": self.batch})
        resp.raise_for_status()
        events = [ChangeEvent.from_doc(d) for d in resp.json()["events"]]
        if not events:
            return 0
        latest: dict[str, ChangeEvent] = {}
        for ev in events:
            latest[ev.subject] = ev
        for subject in latest:
            rec = self._fetch(subject)
            if rec is None:
                self.local.delete(subject)
            else:
                self.local.put_raw(rec)
        self.cursor = events[-1].cursor
        return len(events)

    def sync(self, max_rounds: int = 10_000) -> int:
        total = 0
        for _ in range(max_rounds):
            n = self.sync_once()
            if not n:
                break
            total += n
        return total

    def start(self) -> None:
        def loop():
            while not self._stop.is_set():
                try:
                    if not self.sync_once():
                        self._stop.wait(self.interval)
                except Exception:  # keep following through transient leader errors
                    log.exception("follower sync failed")
                    self._stop.wait(self.interval)

        self._thread = threading.Thread(target=loop, daemon=True, name="follower")
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)


__all__ = [
    "ChangeEvent",
    "ChangeFeed",
    "ConsistencyReport",
    "Follower",
    "Platform",
    "WriteReport",
]
