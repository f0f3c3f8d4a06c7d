"""Shared oracles and generators for the test suite."""
from __future__ import annotations

import random

from ontostore import codec
from ontostore.bench.generator import (
    BIRTH_DATE, COMPANY, NS, PARTICIPATES_IN, PERSON, PROJECT, RESPONSIBLE_FOR, SCHEMA_TTL, WORKS_IN, Dataset,
)
from ontostore.catalog import load_tbox
from ontostore.rdf import IRI, RDF_TYPE, RDFS_LABEL, Triple, TripleSet, parse_document, row_key
from ontostore.sparql.parser import parse_query
from ontostore.sparql.reference import ResultSet, eval_reference


def oracle_data(ds: Dataset) -> TripleSet:
    """Schema plus data plus the entailed superclass types, as one flat triple set."""
    schema = parse_document(SCHEMA_TTL)
    tbox = load_tbox(schema)
    out = TripleSet(set(ds.triples()) | set(schema))
    for t in list(out):
        if t.predicate.value == RDF_TYPE and t.object.is_iri:
            for sup in tbox.superclasses(t.object.value):
                out.add(Triple(t.subject, t.predicate, IRI(sup)))
    return out


def oracle_rows(text: str, data: TripleSet) -> ResultSet:
    return eval_reference(parse_query(text), data)


def json_to_resultset(doc: dict) -> tuple[list[str], list[tuple]]:
    names = doc["head"]["vars"]
    rows = []
    for b in doc["results"]["bindings"]:
        rows.append(tuple(codec.term_from_json(b[n]) if n in b else None for n in names))
    return names, rows


def same_multiset(a: list[tuple], b: list[tuple]) -> bool:
    return sorted(a, key=row_key) == sorted(b, key=row_key)


# -- random subset queries ------------------------------------------------------------

_PROPS = {
    COMPANY: [RDFS_LABEL, PARTICIPATES_IN],
    PERSON: [RDFS_LABEL, BIRTH_DATE, WORKS_IN, RESPONSIBLE_FOR],
    PROJECT: [RDFS_LABEL],
}
_LOCAL = {RDFS_LABEL: "rdfs:label"}
_WORDS = ("some text", "Global", "Robotics", "1", "Anna", "Quantum", "7", "Lab")


def _p(iri: str) -> str:
    return _LOCAL.get(iri) or ":" + iri[len(NS):]


def random_query(rng: random.Random, ds: Dataset) -> str:
    """A random SELECT over a subset of the generated schema.

    Shapes covered: a class star with a property subset, a two-star join along an
    object property, a constant subject, and an unclassed label pattern; each with
    optional filters, projections and windows.
    """
    s = ds.cfg.s
    shape = rng.choice(("star", "star", "join", "join", "const", "unclassed"))
    patterns: list[str] = []
    filters: list[str] = []
    out_vars: list[str] = []

    def star(var: str, cls: str, typed: bool = True) -> dict[str, str]:
        if typed:
            patterns.append(f"?{var} rdf:type :{'Organization' if cls == COMPANY and rng.random() < 0.2 else cls[len(NS):]}")
        props = rng.sample(_PROPS[cls], rng.randint(1, len(_PROPS[cls])))
        bound = {}
        for prop in props:
            v = f"{var}_{prop.rsplit('/', 1)[-1].split('#')[-1]}"
            patterns.append(f"?{var} {_p(prop)} ?{v}")
            bound[prop] = v
        return bound

    def add_filter(bound: dict[str, str]) -> None:
        if RDFS_LABEL in bound and rng.random() < 0.5:
            filters.append(f'CONTAINS(STR(?{bound[RDFS_LABEL]}), "{rng.choice(_WORDS)}")')
        if BIRTH_DATE in bound and rng.random() < 0.6:
            year = rng.randint(1950, 2005)
            op = rng.choice((">", "<"))
            filters.append(f'?{bound[BIRTH_DATE]} {op} "{year}-06-15"^^xsd:date')
        if WORKS_IN in bound and rng.random() < 0.3:
            filters.append(f"?{bound[WORKS_IN]} = <{NS}company{rng.randrange(s):0{len(str(3 * s))}d}>")

    if shape == "star":
        cls = rng.choice((COMPANY, PERSON, PROJECT))
        bound = star("x", cls)
        add_filter(bound)
        out_vars = ["x"] + list(bound.values())
    elif shape == "join":
        kind = rng.choice(("works", "participates", "responsible"))
        if kind == "works":
            left = star("p", PERSON)
            if WORKS_IN not in left:
                left[WORKS_IN] = "p_worksIn"
                patterns.append("?p :worksIn ?p_worksIn")
            mid = left[WORKS_IN]
            right = {}
            patterns.append(f"?{mid} rdf:type :Company")
            if rng.random() < 0.7:
                patterns.append(f"?{mid} rdfs:label ?clabel")
                right[RDFS_LABEL] = "clabel"
        else:
            cls, prop = (COMPANY, PARTICIPATES_IN) if kind == "participates" else (PERSON, RESPONSIBLE_FOR)
            left = star("a", cls)
            if prop not in left:
                v = "a_" + prop[len(NS):]
                left[prop] = v
                patterns.append(f"?a {_p(prop)} ?{v}")
            mid = left[prop]
            right = {RDFS_LABEL: "plabel"}
            patterns.append(f"?{mid} rdfs:label ?plabel")
        add_filter(left)
        add_filter(right)
        out_vars = list(dict.fromkeys(["p" if kind == "works" else "a", *left.values(), *right.values()]))
    elif shape == "const":
        if rng.random() < 0.5:
            subj = f"<{NS}company{rng.randrange(s):0{len(str(3 * s))}d}>"
            patterns.append(f"{subj} :participatesIn ?proj")
            out_vars = ["proj"]
            if rng.random() < 0.5:
                patterns.append("?proj rdfs:label ?pl")
                out_vars.append("pl")
        else:
            subj = f"<{NS}person{rng.randrange(s):0{len(str(3 * s))}d}>"
            patterns.append(f"{subj} ?pred ?val" if rng.random() < 0.3 else f"{subj} :birthDate ?val")
            out_vars = [v for v in ("pred", "val") if f"?{v}" in patterns[-1]]
    else:
        patterns.append("?thing rdfs:label ?text")
        filters.append(f'CONTAINS(STR(?text), "{rng.choice(("some text", "Lab", "Quantum"))}")')
        out_vars = ["thing", "text"]

    projection = "*"
    if rng.random() < 0.4 and len(out_vars) > 1:
        projection = " ".join("?" + v for v in rng.sample(out_vars, rng.randint(1, len(out_vars))))
    body = " . ".join(patterns)
    if filters:
        body += " " + " ".join(f"FILTER({f})" for f in filters)
    tail = ""
    if rng.random() < 0.3:
        if rng.random() < 0.5:
            tail += f" OFFSET {rng.randint(0, 40)}"
        tail += f" LIMIT {rng.randint(1, 60)}"
    return f"PREFIX : <{NS}>\nSELECT {projection} WHERE {{ {body} }}{tail}"


def random_queries(ds: Dataset, n: int, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    return [random_query(rng, ds) for _ in range(n)]
