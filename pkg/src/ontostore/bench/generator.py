"""Deterministic Company/Person/Project dataset with an expected-answer manifest."""
from __future__ import annotations

import datetime as dt
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from ..rdf import RDFS_LABEL, XSD_DATE, IRI, Literal, Triple, TripleSet, iter_ntriples, serialize
from ..storage import ObjectRecord, term_subject

NS = "http://example.org/kg/"
COMPANY = NS + "Company"
PERSON = NS + "Person"
PROJECT = NS + "Project"
ORGANIZATION = NS + "Organization"
BIRTH_DATE = NS + "birthDate"
WORKS_IN = NS + "worksIn"
PARTICIPATES_IN = NS + "participatesIn"
RESPONSIBLE_FOR = NS + "responsibleFor"
MARKER = "some text"

SCHEMA_TTL = f"""@prefix : <{NS}> .
@prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .

:Organization a rdfs:Class ; rdfs:label "Organization" .
:Company a rdfs:Class ; rdfs:subClassOf :Organization ; rdfs:label "Company" .
:Person a rdfs:Class ; rdfs:label "Person" .
:Project a rdfs:Class ; rdfs:label "Project" .

:birthDate a rdf:Property ; rdfs:domain :Person ; rdfs:range xsd:date ; rdfs:label "birth date" .
:worksIn a rdf:Property ; rdfs:domain :Person ; rdfs:range :Company ; rdfs:label "works in" .
:participatesIn a rdf:Property ; rdfs:domain :Company ; rdfs:range :Project ; rdfs:label "participates in" .
:responsibleFor a rdf:Property ; rdfs:domain :Person ; rdfs:range :Project ; rdfs:label "responsible for" .
"""

_ADJECTIVES = (
    "Blue", "Northern", "Rapid", "Silver", "Quantum", "Green", "Bright", "Solid", "Prime", "United",
    "Golden", "Vertex", "Nova", "Polar", "Crimson", "Urban", "Coastal", "Summit", "Iron", "Clear",
)
_NOUNS = (
    "Systems", "Logistics", "Holdings", "Dynamics", "Works", "Labs", "Energy", "Foods", "Motors", "Networks",
    "Partners", "Industries", "Analytics", "Robotics", "Textiles", "Metals", "Media", "Capital", "Health", "Freight",
)
_FIRST = (
    "Anna", "Boris", "Clara", "Dmitri", "Elena", "Farid", "Galina", "Hugo", "Irina", "Jonas",
    "Kira", "Leon", "Maria", "Nikolai", "Olga", "Pavel", "Rosa", "Sergei", "Tanya", "Viktor",
)
_LAST = (
    "Ivanova", "Smith", "Novak", "Kowalski", "Petrov", "Garcia", "Meyer", "Rossi", "Larsen", "Dubois",
    "Sokolov", "Nakamura", "Haddad", "Kim", "Olsen", "Fischer", "Moreau", "Silva", "Popescu", "Weber",
)
_TOPICS = (
    "Pipeline", "Migration", "Rollout", "Audit", "Upgrade", "Survey", "Platform", "Integration", "Study", "Retrofit",
)
BIRTH_MIN = dt.date(1950, 1, 1)
BIRTH_MAX = dt.date(2005, 12, 31)


@dataclass(frozen=True)
class ScaleConfig:
    s: int
    seed: int = 42
    marker_fraction: Fraction = Fraction(1, 1000)

    def __post_init__(self):
        if self.s < 10:
            raise ValueError("scale must be at least 10")
        object.__setattr__(self, "marker_fraction", Fraction(self.marker_fraction))

    @property
    def markers(self) -> int:
        # round half up, so s=500 with 1/1000 gives one marker
        return int(self.s * self.marker_fraction + Fraction(1, 2))

    @property
    def q3_offset(self) -> int:
        return (33 * 3 * self.s) // 100

    @property
    def q3_limit(self) -> int:
        return min(1000, self.s)

    def to_doc(self) -> dict:
        return {"s": self.s, "seed": self.seed, "marker_fraction": str(self.marker_fraction)}

    @classmethod
    def from_doc(cls, doc: dict) -> "ScaleConfig":
        return cls(int(doc["s"]), int(doc["seed"]), Fraction(doc["marker_fraction"]))


def _iri(kind: str, i: int, width: int) -> str:
    return f"{NS}{kind}{i:0{width}d}"


@dataclass
class Dataset:
    cfg: ScaleConfig
    records: list[ObjectRecord]
    manifest: dict = field(default_factory=dict)

    def triples(self) -> list[Triple]:
        return [t for r in self.records for t in r.triples()]

    def by_class(self, cls: str) -> list[ObjectRecord]:
        return [r for r in self.records if cls in r.classes]

    def write(self, out: str | Path) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "schema.ttl").write_text(SCHEMA_TTL, encoding="utf-8")
        (out / "data.nt").write_text(serialize(TripleSet(self.triples())), encoding="utf-8")
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return out


def generate_dataset(cfg: ScaleConfig) -> Dataset:
    """Pure function of ``cfg``: s Companies, s Persons, 3s Projects and the expected answers."""
    rng = random.Random(cfg.seed)
    s = cfg.s
    width = len(str(3 * s))
    companies = [_iri("company", i, width) for i in range(s)]
    persons = [_iri("person", i, width) for i in range(s)]
    projects = [_iri("project", i, width) for i in range(3 * s)]

    markers = set(rng.sample(range(s), cfg.markers))
    company_labels = []
    for i in range(s):
        adj, noun = rng.choice(_ADJECTIVES), rng.choice(_NOUNS)
        if i in markers:
            company_labels.append(f"{adj} {MARKER} {noun} {i}")
        else:
            company_labels.append(f"{adj} {noun} {i}")

    span = (BIRTH_MAX - BIRTH_MIN).days
    person_rows = []
    for i in range(s):
        label = f"{rng.choice(_FIRST)} {rng.choice(_LAST)} {i}"
        birth = (BIRTH_MIN + dt.timedelta(days=rng.randint(0, span))).isoformat()
        works = rng.randrange(s)
        person_rows.append((label, birth, works))

    project_rows = []
    for i in range(3 * s):
        project_rows.append((f"{rng.choice(_TOPICS)} {rng.choice(_NOUNS)} {i}", rng.randrange(s), rng.randrange(s)))

    participates: list[list[str]] = [[] for _ in range(s)]
    responsible: list[list[str]] = [[] for _ in range(s)]
    for j, (_, c, p) in enumerate(project_rows):
        participates[c].append(projects[j])
        responsible[p].append(projects[j])

    records: list[ObjectRecord] = []
    for i, iri in enumerate(companies):
        props = {RDFS_LABEL: [Literal(company_labels[i])]}
        if participates[i]:
            props[PARTICIPATES_IN] = [IRI(x) for x in participates[i]]
        records.append(ObjectRecord(iri, {COMPANY}, props))
    for i, iri in enumerate(persons):
        label, birth, works = person_rows[i]
        props = {RDFS_LABEL: [Literal(label)], BIRTH_DATE: [Literal(birth, XSD_DATE)], WORKS_IN: [IRI(companies[works])]}
        if responsible[i]:
            props[RESPONSIBLE_FOR] = [IRI(x) for x in responsible[i]]
        records.append(ObjectRecord(iri, {PERSON}, props))
    for j, iri in enumerate(projects):
        records.append(ObjectRecord(iri, {PROJECT}, {RDFS_LABEL: [Literal(project_rows[j][0])]}))

    # expected answers, straight from the generated structures
    pick = rng.randrange(3 * s)
    x, y = companies[project_rows[pick][1]], persons[project_rows[pick][2]]
    q0 = sorted(projects[j] for j, (_, c, p) in enumerate(project_rows) if companies[c] == x and persons[p] == y)
    q1 = sorted((companies[i], company_labels[i]) for i in markers)
    threshold = "1999-12-27"
    q2_all = sorted((persons[i], row[1], row[0]) for i, row in enumerate(person_rows) if row[1] > threshold)
    q3_all = sorted((projects[j], row[0]) for j, row in enumerate(project_rows))
    off, lim = cfg.q3_offset, cfg.q3_limit
    manifest = {
        "config": cfg.to_doc(),
        "counts": {"Company": s, "Person": s, "Project": 3 * s, "objects": 5 * s},
        "markers": cfg.markers,
        "q0": {"company": x, "person": y, "rows": [[p] for p in q0]},
        "q1": {"rows": [list(r) for r in q1]},
        "q2": {"threshold": threshold, "matches": len(q2_all), "rows": [list(r) for r in q2_all[:10]]},
        "q3": {"offset": off, "limit": lim, "rows": [list(r) for r in q3_all[off:off + lim]]},
    }
    return Dataset(cfg, records, manifest)


def load_dataset(path: str | Path) -> Dataset:
    """Read back a dataset written by :meth:`Dataset.write`."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    grouped: dict[str, list[Triple]] = {}
    with open(path / "data.nt", encoding="utf-8") as fh:
        for t in iter_ntriples(fh):
            grouped.setdefault(term_subject(t.subject), []).append(t)
    records = [ObjectRecord.from_triples(s, ts) for s, ts in grouped.items()]
    return Dataset(ScaleConfig.from_doc(manifest["config"]), records, manifest)


__all__ = [
    "BIRTH_DATE",
    "COMPANY",
    "Dataset",
    "MARKER",
    "NS",
    "ORGANIZATION",
    "PARTICIPATES_IN",
    "PERSON",
    "PROJECT",
    "RESPONSIBLE_FOR",
    "SCHEMA_TTL",
    "ScaleConfig",
    "WORKS_IN",
    "generate_dataset",
    "load_dataset",
]
