import random
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontostore.bench.generator import BIRTH_DATE, COMPANY, PERSON, PROJECT, WORKS_IN
from ontostore.rdf import IRI, RDF_TYPE, RDFS_LABEL, XSD, Literal, Triple
from ontostore.storage import (
    ClassTableStore, IndexSpec, IndexSpecError, ObjectRecord, PatternQuery, PropertyFilter, ReadOnlyStorage,
    StorageDescriptor, StorageDraining, StorageUnavailable, TripleIndexStore, open_storage, subject_key,
)
from ontostore.storage.persistence import OpLog, PersistenceError

X = "http://x/"


def triple_store(path=None) -> TripleIndexStore:
    return TripleIndexStore(StorageDescriptor("ti", "triple-index"), path)


def class_store(path=None, sid="ct") -> ClassTableStore:
    return ClassTableStore(StorageDescriptor(sid, "class-table"), path)


# -- triple index ---------------------------------------------------------------------------


def test_match_pattern_equals_brute_force_for_all_shapes():
    rng = random.Random(11)
    nodes = [IRI(X + f"n{i}") for i in range(12)]
    preds = [IRI(X + f"p{i}") for i in range(4)]
    lits = [Literal(str(i)) for i in range(6)]
    triples = {Triple(rng.choice(nodes), rng.choice(preds), rng.choice(nodes + lits)) for _ in range(400)}
    store = triple_store()
    store.add_triples(triples)
    for _ in range(1000):
        s = rng.choice([None, rng.choice(nodes)])
        p = rng.choice([None, rng.choice(preds)])
        o = rng.choice([None, rng.choice(nodes + lits)])
        want = {t for t in triples if (s is None or t.subject == s) and (p is None or t.predicate == p) and (o is None or t.object == o)}
        got = store.match_pattern(s, p, o)
        assert len(got) == len(set(got)) and set(got) == want


def test_triple_index_record_view():
    store = triple_store()
    rec = ObjectRecord(X + "a", {COMPANY}, {RDFS_LABEL: [Literal("Acme")], X + "p": [IRI(X + "b"), IRI(X + "c")]})
    store.put(rec)
    assert store.get(X + "a").same_content(rec)
    store.put(ObjectRecord(X + "a", {COMPANY}, {RDFS_LABEL: [Literal("New")]}))  # full replacement
    assert store.get(X + "a").properties == {RDFS_LABEL: [Literal("New")]}
    assert store.match_pattern(None, IRI(X + "p"), None) == []
    assert store.delete(X + "a") and store.get(X + "a") is None and not store.delete(X + "a")


# -- adapter equivalence -----------------------------------------------------------------------

CLASSES = [X + "A", X + "B"]
PROPS = [X + "n", X + "d", RDFS_LABEL]


@st.composite
def records(draw):
    out = []
    for i in range(draw(st.integers(0, 25))):
        classes = set(draw(st.lists(st.sampled_from(CLASSES), min_size=1, max_size=2)))
        props = {}
        if draw(st.booleans()):
            props[X + "n"] = [Literal(str(v), XSD + "integer") for v in draw(st.lists(st.integers(0, 9), max_size=2))]
        if draw(st.booleans()):
            props[X + "d"] = [Literal(f"20{draw(st.integers(10, 19))}-01-01", XSD + "date")]
        if draw(st.booleans()):
            props[RDFS_LABEL] = [Literal(draw(st.sampled_from(["alpha", "beta", "alphabet", "Alp"])))]
        out.append(ObjectRecord(f"{X}s{i:02d}", classes, {k: v for k, v in props.items() if v}))
    return out


filters = st.one_of(
    st.builds(lambda v, op: PropertyFilter(X + "n", op, Literal(str(v), XSD + "integer")), st.integers(0, 9), st.sampled_from(["equals", "less", "greater"])),
    st.builds(lambda y, op: PropertyFilter(X + "d", op, Literal(f"20{y}-01-01", XSD + "date")), st.integers(10, 19), st.sampled_from(["equals", "less", "greater"])),
    st.builds(lambda w: PropertyFilter(RDFS_LABEL, "contains", Literal(w)), st.sampled_from(["alp", "bet", "x", "A"])),
)


@settings(max_examples=150, deadline=None)
@given(records(), st.sampled_from(CLASSES), st.lists(filters, max_size=2), st.integers(0, 5), st.one_of(st.none(), st.integers(0, 6)), st.booleans())
def test_adapter_equivalence(recs, cls, fs, offset, limit, indexed):
    ti, ct = triple_store(), class_store()
    if indexed:
        ct.ensure_index(IndexSpec(X + "n", "ordered"))
        ct.ensure_index(IndexSpec(X + "d", "equality"))
    for r in recs:
        ti.put(r)
        ct.put(r)
    q = PatternQuery(cls, tuple(fs), offset, limit)
    want = [r.subject for r in sorted(recs, key=lambda r: subject_key(r.subject)) if cls in r.classes and all(f.matches(r) for f in fs)]
    want = want[offset:None if limit is None else offset + limit]
    assert [r.subject for r in ti.scan(q)] == want
    assert [r.subject for r in ct.scan(q)] == want
    assert ti.count(cls) == ct.count(cls)


def test_class_table_isolation_and_multi_class():
    ct = class_store()
    ct.put(ObjectRecord(X + "a", {COMPANY}))
    ct.put(ObjectRecord(X + "p", {PERSON}))
    ct.put(ObjectRecord(X + "both", {COMPANY, PERSON}))
    assert [r.subject for r in ct.scan(PatternQuery(PERSON))] == [X + "both", X + "p"]
    assert ct.classes() == sorted([COMPANY, PERSON])


def test_stats_single_valued():
    ct = class_store()
    ct.put(ObjectRecord(X + "a", {PERSON}, {RDFS_LABEL: [Literal("a")], WORKS_IN: [IRI(X + "c")]}))
    ct.put(ObjectRecord(X + "b", {PERSON}, {RDFS_LABEL: [Literal("b")], WORKS_IN: [IRI(X + "c"), IRI(X + "d")]}))
    st_ = ct.stats(PERSON)
    assert st_.count == 2 and st_.single_valued == {RDFS_LABEL}


# -- indexes ------------------------------------------------------------------------------------


def test_ensure_index_idempotent_and_explained():
    ct = class_store()
    assert ct.ensure_index(IndexSpec(BIRTH_DATE, "ordered"))
    assert not ct.ensure_index(IndexSpec(BIRTH_DATE, "ordered"))
    q = PatternQuery(PERSON, (PropertyFilter(BIRTH_DATE, "greater", Literal("1999-12-27", XSD + "date")),))
    assert ct.scan_strategy(q) == [f"index-range({BIRTH_DATE})"]
    q2 = PatternQuery(PERSON, (PropertyFilter(RDFS_LABEL, "contains", Literal("x")),))
    assert ct.scan_strategy(q2) == [f"column-scan({RDFS_LABEL})"]


def test_ordered_index_on_iri_valued_property_rejected():
    ct = class_store()
    ct.put(ObjectRecord(X + "p", {PERSON}, {WORKS_IN: [IRI(X + "c")]}))
    with pytest.raises(IndexSpecError):
        ct.ensure_index(IndexSpec(WORKS_IN, "ordered"))
    assert ct.indexes() == []


def test_equality_index_speeds_up_lookup():
    rng = random.Random(5)
    ct = class_store()
    ct.put_many(
        ObjectRecord(f"{X}p{i:05d}", {PERSON}, {BIRTH_DATE: [Literal(f"{1950 + rng.randrange(50)}-0{1 + rng.randrange(9)}-1{rng.randrange(10)}", XSD + "date")]})
        for i in range(20_000)
    )
    q = PatternQuery(PERSON, (PropertyFilter(BIRTH_DATE, "equals", Literal("1970-05-15", XSD + "date")),))

    def best():
        out = []
        for _ in range(5):
            t = time.perf_counter()
            rows = ct.scan(q)
            out.append(time.perf_counter() - t)
        return min(out), rows

    before, rows_before = best()
    ct.ensure_index(IndexSpec(BIRTH_DATE, "equality"))
    after, rows_after = best()
    assert [r.subject for r in rows_before] == [r.subject for r in rows_after]
    assert before / after >= 5, (before, after)


# -- status handling ------------------------------------------------------------------------------


def test_draining_offline_and_on_demand():
    ct = class_store()
    ct.put(ObjectRecord(X + "a", {COMPANY}))
    ct.descriptor = ct.descriptor.with_status("draining")
    with pytest.raises(StorageDraining):
        ct.put(ObjectRecord(X + "b", {COMPANY}))
    assert ct.get(X + "a") is not None  # reads still served
    ct.descriptor = ct.descriptor.with_status("offline")
    with pytest.raises(StorageUnavailable):
        ct.get(X + "a")
    remote = open_storage(StorageDescriptor("r", "remote", "on-demand", "http://127.0.0.1:9"))
    with pytest.raises(ReadOnlyStorage):
        remote.put(ObjectRecord(X + "a", {COMPANY}))
    with pytest.raises(StorageUnavailable):
        remote.get(X + "a")
    remote.close()


@pytest.mark.parametrize(
    "kw",
    [
        dict(id="x", kind="remote"),
        dict(id="x", kind="class-table", mode="on-demand"),
        dict(id="has space", kind="class-table"),
        dict(id="x", kind="nosql"),
    ],
)
def test_descriptor_invariants(kw):
    with pytest.raises(ValueError):
        StorageDescriptor(**kw)


# -- persistence -------------------------------------------------------------------------------------


@pytest.mark.parametrize("factory", [triple_store, class_store])
def test_replay_after_restart(tmp_path, factory):
    s = factory(tmp_path)
    s.put(ObjectRecord(X + "a", {COMPANY}, {RDFS_LABEL: [Literal("one")]}))
    s.put(ObjectRecord(X + "b", {PROJECT}, {RDFS_LABEL: [Literal("two")]}))
    s.put(ObjectRecord(X + "a", {COMPANY}, {RDFS_LABEL: [Literal("three")]}))
    s.delete(X + "b")
    if isinstance(s, ClassTableStore):
        s.ensure_index(IndexSpec(RDFS_LABEL, "equality"))
    s.close()
    again = factory(tmp_path)
    assert [r.subject for r in again.iter_records()] == [X + "a"]
    assert again.get(X + "a").properties[RDFS_LABEL] == [Literal("three")]
    if isinstance(again, ClassTableStore):
        assert again.indexes() == [IndexSpec(RDFS_LABEL, "equality")]
    again.close()


def test_oplog_snapshot_and_torn_tail(tmp_path):
    log = OpLog(tmp_path, snapshot_every=3)
    ops = [{"op": "x", "n": i} for i in range(5)]
    for op in ops:
        log.append(op)
    log.snapshot(lambda: [{"op": "state", "n": 4}])
    log.append({"op": "x", "n": 5})
    log.close()
    # a torn final line, as after a crash mid-write, is dropped
    wal = next(p for p in tmp_path.iterdir() if p.suffix == ".log")
    with open(wal, "ab") as fh:
        fh.write(b'{"op": "x", "n"')
    assert list(OpLog(tmp_path).recover()) == [{"op": "state", "n": 4}, {"op": "x", "n": 5}]


def test_oplog_rejects_foreign_file(tmp_path):
    log = OpLog(tmp_path)
    log.append({"op": "x"})
    log.close()
    wal = next(p for p in tmp_path.iterdir() if p.suffix == ".log")
    wal.write_bytes(b"not a log\n")
    with pytest.raises(PersistenceError):
        list(OpLog(tmp_path).recover())


def test_record_normalization_folds_type():
    rec = ObjectRecord(X + "a", set(), {RDF_TYPE: [IRI(COMPANY)], RDFS_LABEL: [Literal("a"), Literal("a")]}).normalized()
    assert rec.classes == {COMPANY} and rec.properties == {RDFS_LABEL: [Literal("a")]}
