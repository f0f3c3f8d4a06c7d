import random
import threading
import time

import pytest

from ontostore.bench.generator import COMPANY, PERSON, PROJECT, SCHEMA_TTL
from ontostore.catalog import DEFAULT_STORAGE, Catalog, load_tbox
from ontostore.engine import Platform
from ontostore.errors import Conflict, DuplicateStorage, MalformedRequest, SchemaError, StorageFailure, UnknownClass, UnknownStorage
from ontostore.rdf import RDFS_LABEL, Literal, parse_document
from ontostore.storage import ObjectRecord, PatternQuery, StorageDescriptor

X = "http://x/"
HEAD = "@prefix : <http://x/> . @prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> . @prefix owl: <http://www.w3.org/2002/07/owl#> .\n"


def tbox(body: str):
    return load_tbox(parse_document(HEAD + body))


def test_three_classes_no_edges():
    t = tbox(":Company a rdfs:Class . :Person a rdfs:Class . :Project a owl:Class .")
    assert t.classes == {X + "Company", X + "Person", X + "Project"} and not t.edges
    assert t.subclass_closure(X + "Company") == {X + "Company"}


def test_edge_and_chain_closure():
    t = tbox(":A a rdfs:Class . :B a rdfs:Class ; rdfs:subClassOf :A . :C a rdfs:Class ; rdfs:subClassOf :B .")
    assert t.subclass_closure(X + "A") == {X + "A", X + "B", X + "C"}
    assert t.superclasses(X + "C") == {X + "A", X + "B", X + "C"}  # reflexive, like the closure


@pytest.mark.parametrize(
    "body",
    [
        ":A a rdfs:Class ; rdfs:subClassOf :B . :B a rdfs:Class ; rdfs:subClassOf :A .",
        ":A a rdfs:Class ; rdfs:subClassOf :A .",
        ":A a rdfs:Class ; rdfs:subClassOf :Missing .",
    ],
)
def test_schema_errors(body):
    with pytest.raises(SchemaError):
        tbox(body)


def test_closure_of_unknown_class():
    with pytest.raises(UnknownClass):
        tbox(":A a rdfs:Class .").subclass_closure(X + "B")


@pytest.mark.parametrize("seed", range(10))
def test_closure_matches_reachability_on_random_dag(seed):
    rng = random.Random(seed)
    n = 20
    edges = {(c, p) for c in range(n) for p in range(c) if rng.random() < 0.12}  # child > parent keeps it acyclic
    body = " ".join(f":N{i} a rdfs:Class ." for i in range(n))
    body += " ".join(f" :N{c} rdfs:subClassOf :N{p} ." for c, p in edges)
    t = tbox(body)
    children = {i: {c for c, p in edges if p == i} for i in range(n)}
    for root in range(n):
        seen, stack = {root}, [root]
        while stack:
            for c in children[stack.pop()]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        assert t.subclass_closure(X + f"N{root}") == {X + f"N{i}" for i in seen}


# -- registry and assignments -------------------------------------------------------------------


@pytest.fixture
def catalog(tmp_path):
    c = Catalog(tmp_path)
    c.load_schema(parse_document(SCHEMA_TTL))
    yield c
    c.close()


def test_register_and_duplicate(catalog):
    catalog.register_storage(StorageDescriptor("pg-a", "class-table"))
    assert "pg-a" in [d.id for d in catalog.storages()]
    with pytest.raises(DuplicateStorage):
        catalog.register_storage(StorageDescriptor("pg-a", "class-table"))


def test_remote_probe_failure(catalog):
    with pytest.raises(StorageFailure):
        catalog.register_storage(StorageDescriptor("r", "remote", "on-demand", "http://127.0.0.1:9", timeout=0.5))
    assert "r" not in [d.id for d in catalog.storages()]


def test_resolve_rules(catalog):
    for sid in ("pg-a", "pg-b"):
        catalog.register_storage(StorageDescriptor(sid, "class-table"))
    catalog.assign_class(PERSON, ["pg-b", "pg-a"])
    assert [d.id for d in catalog.resolve_storages(PROJECT)] == [DEFAULT_STORAGE]
    assert [d.id for d in catalog.resolve_storages(PERSON)] == ["pg-b", "pg-a"]
    catalog.set_storage_status("pg-b", "draining")
    assert [d.id for d in catalog.resolve_storages(PERSON)] == ["pg-b", "pg-a"]
    assert [d.id for d in catalog.resolve_storages(PERSON, for_write=True)] == ["pg-a"]


def test_assignment_errors(catalog):
    catalog.register_storage(StorageDescriptor("pg-a", "class-table"))
    with pytest.raises(UnknownClass):
        catalog.assign_class(X + "Nope", ["pg-a"])
    with pytest.raises(UnknownStorage):
        catalog.assign_class(PERSON, ["ghost"])
    with pytest.raises(MalformedRequest):
        catalog.assign_class(PERSON, [])
    catalog.assign_class(PERSON, ["pg-a"])
    with pytest.raises(Conflict):
        catalog.deregister_storage("pg-a")
    with pytest.raises(Conflict):
        catalog.deregister_storage(DEFAULT_STORAGE)


def test_durable_across_restart(tmp_path):
    c = Catalog(tmp_path)
    c.load_schema(parse_document(SCHEMA_TTL))
    c.register_storage(StorageDescriptor("pg-a", "class-table"))
    c.assign_class(COMPANY, ["pg-a"])
    c.snapshot().storage("pg-a").put(ObjectRecord(X + "c1", {COMPANY}))
    c.close()
    again = Catalog(tmp_path)
    assert again.assignments() == {COMPANY: ("pg-a",)}
    assert COMPANY in again.tbox.classes
    assert again.snapshot().storage("pg-a").get(X + "c1") is not None
    again.close()


# -- redistribution ----------------------------------------------------------------------------------


def _platform(n_companies: int) -> Platform:
    p = Platform()
    p.load_schema(SCHEMA_TTL)
    for sid in ("a", "b"):
        p.catalog.register_storage(StorageDescriptor(sid, "class-table"))
    p.catalog.assign_class(COMPANY, ["a"])
    p.bulk_load(ObjectRecord(f"{X}c{i:04d}", {COMPANY}, {RDFS_LABEL: [Literal(f"c{i}")]}) for i in range(n_companies))
    return p


def test_redistribute_empty_class():
    p = _platform(0)
    job = p.catalog.redistribute(COMPANY, "a", "b")
    assert job.wait(10) and job.phase == "done" and job.total == 0
    p.close()


def test_redistribute_unknown_target_creates_no_job():
    p = _platform(3)
    with pytest.raises(UnknownStorage):
        p.catalog.redistribute(COMPANY, "a", "nope")
    with pytest.raises(Conflict):
        p.catalog.redistribute(PERSON, "a", "b")  # Person is not on "a"
    p.close()


def test_redistribute_counts_stable_and_dual_writes():
    p = _platform(1000)
    counts = []
    stop = threading.Event()

    def poll():
        while not stop.is_set():
            counts.append(len({r.subject for r in p.scan(PatternQuery(COMPANY))}))
            time.sleep(0.005)

    t = threading.Thread(target=poll)
    t.start()
    job = p.catalog.redistribute(COMPANY, "a", "b", throttle=0.001)
    while job.phase == "copying" and job.copied < 100:
        time.sleep(0.005)
    assert job.phase == "copying"
    # a write during copying lands on both storages, so the count steps to 1001 once and stays
    p.upsert(ObjectRecord(X + "late", {COMPANY}, {RDFS_LABEL: [Literal("late")]}))
    assert job.wait(60) and job.phase == "done"
    stop.set()
    t.join()
    assert set(counts) <= {1000, 1001} and counts[-1] == 1001
    assert counts == sorted(counts)
    b = p.catalog.snapshot().storage("b")
    assert b.get(X + "late") is not None and b.count(COMPANY) == 1001
    assert p.catalog.snapshot().storage("a").count(COMPANY) == 0
    assert p.catalog.assignments()[COMPANY] == ("b",)
    p.close()


def test_source_offline_mid_copy_fails_job():
    p = _platform(400)
    job = p.catalog.redistribute(COMPANY, "a", "b", throttle=0.002)
    while job.copied < 20:
        time.sleep(0.005)
    p.catalog.set_storage_status("a", "offline")
    assert job.wait(30) and job.phase == "failed" and job.error
    assert p.catalog.assignments()[COMPANY] == ("a",)
    assert p.catalog.snapshot().storage("b").count(COMPANY) == 0  # partial copy removed
    p.close()
