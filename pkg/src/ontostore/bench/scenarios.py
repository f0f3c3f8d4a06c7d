"""The five storage topologies and the timed scenario runner."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field
from urllib.parse import quote

import httpx

from ..engine.platform import Platform
from ..rdf import RDFS_LABEL
from ..server import ServerThread
from ..storage import IndexSpec, StorageDescriptor
from .generator import BIRTH_DATE, COMPANY, PARTICIPATES_IN, PERSON, PROJECT, RESPONSIBLE_FOR, SCHEMA_TTL, Dataset, ScaleConfig
from .queries import benchmark_queries

QUERY_IDS = ("Q0", "Q1", "Q2", "Q3")


@dataclass(frozen=True)
class Scenario:
    id: int
    description: str
    access: str  # sparql | rest


SCENARIOS = {
    1: Scenario(1, "all data in the triple-index store, native SPARQL evaluation", "sparql"),
    2: Scenario(2, "one class-table store through the REST API", "rest"),
    3: Scenario(3, "one class-table store through the SPARQL endpoint", "sparql"),
    4: Scenario(4, "one class-table store behind a remote on-demand adapter", "sparql"),
    5: Scenario(5, "two class-table stores split by class, federated on demand", "sparql"),
}

CLASS_TABLE_INDEXES = (IndexSpec(BIRTH_DATE, "ordered"), IndexSpec(RDFS_LABEL, "substring-scan"))


class ManifestMismatch(AssertionError):
    """A scenario returned something other than the expected answer; it must not be timed."""


def _class_table(platform: Platform, sid: str, classes) -> None:
    platform.catalog.register_storage(StorageDescriptor(sid, "class-table"))
    storage = platform.catalog.snapshot().storage(sid)
    for spec in CLASS_TABLE_INDEXES:
        storage.ensure_index(spec)
    for c in classes:
        platform.catalog.assign_class(c, [sid])


def _remote(platform: Platform, sid: str, url: str, classes) -> None:
    platform.catalog.register_storage(StorageDescriptor(sid, "remote", "on-demand", url))
    for c in classes:
        platform.catalog.assign_class(c, [sid])


@dataclass
class Deployment:
    """Running instances for one scenario; ``client`` talks to the front instance."""

    scenario: Scenario
    front: Platform
    servers: list[ServerThread] = field(default_factory=list)
    platforms: list[Platform] = field(default_factory=list)
    client: httpx.Client | None = None

    @property
    def url(self) -> str:
        return self.servers[0].url

    def close(self) -> None:
        if self.client is not None:
            self.client.close()
        for s in self.servers:
            s.stop()
        for p in self.platforms:
            p.close()

    def __enter__(self) -> "Deployment":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def deploy(scenario_id: int, dataset: Dataset) -> Deployment:
    """Build, load and serve the topology of one scenario."""
    scenario = SCENARIOS[scenario_id]
    classes = (COMPANY, PERSON, PROJECT)

    def instance(mode: str = "federated") -> Platform:
        p = Platform(sparql_mode=mode)
        p.load_schema(SCHEMA_TTL)
        return p

    backends: list[tuple[Platform, ServerThread]] = []
    if scenario_id == 1:
        front = instance("native")
        front.bulk_load(dataset.records, emit=False)
    elif scenario_id in (2, 3):
        front = instance()
        _class_table(front, "pg", classes)
        front.bulk_load(dataset.records, emit=False)
    elif scenario_id == 4:
        back = instance()
        _class_table(back, "pg", classes)
        back.bulk_load(dataset.records, emit=False)
        backends.append((back, ServerThread(back).start()))
        front = instance()
        _remote(front, "ldm", backends[0][1].url, classes)
    else:
        split = ((COMPANY, PERSON), (PROJECT,))
        for n, group in enumerate(split, 1):
            back = instance()
            _class_table(back, f"pg{n}", group)
            back.bulk_load([r for r in dataset.records if r.classes & set(group)], emit=False)
            backends.append((back, ServerThread(back).start()))
        front = instance()
        for n, group in enumerate(split, 1):
            _remote(front, f"ldm{n}", backends[n - 1][1].url, group)
    server = ServerThread(front).start()
    dep = Deployment(scenario, front, [server] + [s for _, s in backends], [front] + [p for p, _ in backends])
    dep.client = httpx.Client(base_url=server.url, timeout=60.0)
    return dep


# -- query execution through the scenario's access path ---------------------------


def _sparql_rows(client: httpx.Client, text: str) -> list[tuple]:
    resp = client.post("/sparql", content=text.encode(), headers={"content-type": "application/sparql-query"})
    resp.raise_for_status()
    doc = resp.json()
    names = doc["head"]["vars"]
    return [tuple(b[n]["value"] if n in b else None for n in names) for b in doc["results"]["bindings"]]


def _values(doc: dict, prop: str) -> list[str]:
    return [v["value"] for v in doc["properties"].get(prop, [])]


def _rest_rows(client: httpx.Client, qid: str, manifest: dict, cfg: ScaleConfig) -> list[tuple]:
    if qid == "Q0":
        x = client.get("/object/" + quote(manifest["q0"]["company"], safe=""))
        y = client.get("/object/" + quote(manifest["q0"]["person"], safe=""))
        x.raise_for_status()
        y.raise_for_status()
        shared = set(_values(x.json()["record"], PARTICIPATES_IN)) & set(_values(y.json()["record"], RESPONSIBLE_FOR))
        return [(p,) for p in sorted(shared)]
    if qid == "Q1":
        resp = client.get("/objects/:Company", params={"label.contains": "some text"})
    elif qid == "Q2":
        resp = client.get("/objects/:Person", params={"birthDate.gt": manifest["q2"]["threshold"], "limit": 10})
    else:
        resp = client.get("/objects/:Project", params={"offset": cfg.q3_offset, "limit": cfg.q3_limit})
    resp.raise_for_status()
    rows = []
    for doc in resp.json()["objects"]:
        label = _values(doc, RDFS_LABEL)[0]
        if qid == "Q2":
            rows.append((doc["subject"], _values(doc, BIRTH_DATE)[0], label))
        else:
            rows.append((doc["subject"], label))
    return rows


def run_query(dep: Deployment, qid: str, dataset: Dataset) -> list[tuple]:
    cfg, manifest = dataset.cfg, dataset.manifest
    if dep.scenario.access == "rest":
        return _rest_rows(dep.client, qid, manifest, cfg)
    return _sparql_rows(dep.client, benchmark_queries(manifest, cfg)[qid])


def expected_rows(manifest: dict, qid: str) -> list[tuple]:
    return [tuple(r) for r in manifest[qid.lower()]["rows"]]


# -- timing --------------------------------------------------------------------------


@dataclass
class Timing:
    scenario: int
    query: str
    mean: float
    min: float
    max: float
    count: int
    runs: int

    def to_doc(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TimingReport:
    config: dict
    scenario: int
    timings: dict[str, Timing] = field(default_factory=dict)


def run_scenario(dep: Deployment, dataset: Dataset, repetitions: int = 10, queries=QUERY_IDS) -> TimingReport:
    """One checked warm-up per query, then ``repetitions`` timed runs."""
    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    report = TimingReport(dataset.cfg.to_doc(), dep.scenario.id)
    for qid in queries:
        want = expected_rows(dataset.manifest, qid)
        got = run_query(dep, qid, dataset)
        if got != want:
            raise ManifestMismatch(f"scenario {dep.scenario.id} {qid}: {len(got)} rows differ from the manifest's {len(want)}")
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            rows = run_query(dep, qid, dataset)
            times.append(time.perf_counter() - t0)
            if len(rows) != len(want):
                raise ManifestMismatch(f"scenario {dep.scenario.id} {qid}: row count changed between runs")
        report.timings[qid] = Timing(dep.scenario.id, qid, statistics.fmean(times), min(times), max(times), len(want), repetitions)
    return report


__all__ = [
    "CLASS_TABLE_INDEXES",
    "Deployment",
    "ManifestMismatch",
    "QUERY_IDS",
    "SCENARIOS",
    "Scenario",
    "Timing",
    "TimingReport",
    "deploy",
    "expected_rows",
    "run_query",
    "run_scenario",
]
