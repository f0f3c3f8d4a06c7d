"""The four benchmark queries and their mapping to result rows."""
from __future__ import annotations

from .generator import NS, ScaleConfig

PREFIXES = f"PREFIX : <{NS}>\n"

Q1_ORGANIZATION = (
    'SELECT * WHERE { ?org rdf:type :Organization. ?org rdfs:label ?name '
    'FILTER(CONTAINS(STR(?name), "some text")) }'
)
Q1 = Q1_ORGANIZATION.replace(":Organization", ":Company")
Q2 = (
    "SELECT * WHERE { ?person rdf:type :Person. ?person :birthDate ?birth. ?person rdfs:label ?name. "
    'FILTER(?birth > "1999-12-27"^^xsd:date) } LIMIT 10'
)


def q0(company: str, person: str) -> str:
    return f"SELECT * WHERE {{ <{company}> :participatesIn ?p . <{person}> :responsibleFor ?p }}"


def q3(cfg: ScaleConfig) -> str:
    return f"SELECT * WHERE {{ ?project rdf:type :Project. ?project rdfs:label ?name }} OFFSET {cfg.q3_offset} LIMIT {cfg.q3_limit}"


def benchmark_queries(manifest: dict, cfg: ScaleConfig) -> dict[str, str]:
    """Query text per id, with the prefix declaration in front."""
    return {
        "Q0": PREFIXES + q0(manifest["q0"]["company"], manifest["q0"]["person"]),
        "Q1": PREFIXES + Q1,
        "Q2": PREFIXES + Q2,
        "Q3": PREFIXES + q3(cfg),
    }


__all__ = ["PREFIXES", "Q1", "Q1_ORGANIZATION", "Q2", "benchmark_queries", "q0", "q3"]
