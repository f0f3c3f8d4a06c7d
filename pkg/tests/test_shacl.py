import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontostore.bench.generator import PERSON, PROJECT, RESPONSIBLE_FOR, SCHEMA_TTL
from ontostore.catalog import load_tbox
from ontostore.engine import Platform
from ontostore.errors import RuleLimitExceeded, UnsupportedShape
from ontostore.rdf import IRI, RDF_TYPE, RDFS_LABEL, XSD, Literal, Triple, parse_document
from ontostore.shacl import (
    MAX_RULE_ITERATIONS, NodeShape, PropertyShape, TripleRule, check_property, parse_shapes, run_rules, validate,
)
from ontostore.storage import ObjectRecord

K = "http://example.org/kg/"
HEAD = f"""@prefix : <{K}> .
@prefix sh: <http://www.w3.org/ns/shacl#> .
@prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
"""
TBOX = load_tbox(parse_document(SCHEMA_TTL))


def shapes(body: str):
    return parse_shapes(parse_document(HEAD + body))


def test_single_property_shape():
    out = shapes(":PersonShape a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path rdfs:label ; sh:minCount 1 .")
    assert len(out) == 1 and len(out[0].properties) == 1
    assert out[0].properties[0] == PropertyShape(RDFS_LABEL, min_count=1)


def test_empty_document():
    assert shapes("") == []


@pytest.mark.parametrize(
    "body",
    [
        # sequence path written as an explicit RDF list
        ":S a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path _:l1 . _:l1 rdf:first :a ; rdf:rest _:l2 . _:l2 rdf:first :b ; rdf:rest rdf:nil .",
        ":S a sh:NodeShape ; sh:property _:p . _:p sh:path rdfs:label ; sh:minCount 1 .",
        ":S a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path rdfs:label ; sh:or _:x .",
        ":S a sh:NodeShape ; sh:targetClass :Person ; sh:sparql _:x .",
        ":S a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path rdfs:label ; sh:minCount 3 ; sh:maxCount 1 .",
        ':S a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path rdfs:label ; sh:pattern "(?<=a)b" .',
        ":S a sh:NodeShape ; sh:targetClass :Person ; sh:rule _:r . _:r a sh:TripleRule ; sh:subject :x ; sh:predicate :p ; sh:object :o .",
    ],
)
def test_unsupported_or_malformed_shapes(body):
    with pytest.raises(UnsupportedShape):
        shapes(body)


def _person(**props):
    return ObjectRecord(K + "p", {PERSON}, props)


def test_missing_label_is_one_min_count_violation():
    s = shapes(":S a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path rdfs:label ; sh:minCount 1 .")
    report = validate(_person(), s, TBOX)
    assert not report.conforms
    assert [(v.focus, v.path, v.kind) for v in report.violations] == [(K + "p", RDFS_LABEL, "minCount")]


def test_invalid_date_lexical():
    s = shapes(":S a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path :birthDate ; sh:datatype xsd:date .")
    report = validate(_person(**{K + "birthDate": [Literal("not-a-date", XSD + "date")]}), s, TBOX)
    assert [v.kind for v in report.violations] == ["datatype"]


def test_untargeted_record_conforms():
    s = shapes(":S a sh:NodeShape ; sh:targetClass :Person ; sh:property _:p . _:p sh:path rdfs:label ; sh:minCount 1 .")
    assert validate(ObjectRecord(K + "x", {PROJECT}), s, TBOX).conforms


def test_superclass_target_applies_to_subclass():
    s = shapes(":S a sh:NodeShape ; sh:targetClass :Organization ; sh:property _:p . _:p sh:path rdfs:label ; sh:minCount 1 .")
    assert not validate(ObjectRecord(K + "c", {K + "Company"}), s, TBOX).conforms


def test_pattern_is_unanchored_with_flags():
    ps = PropertyShape(RDFS_LABEL, pattern="bc", flags="i")
    assert check_property("s", [Literal("aBCd")], ps) == []
    assert check_property("s", [Literal("xyz")], ps)[0].kind == "pattern"


# -- validation properties ------------------------------------------------------------------------

counts = st.one_of(st.none(), st.integers(0, 3))


@settings(max_examples=200)
@given(counts, counts, st.lists(st.sampled_from(["a", "b", "c", "d"]), unique=True, max_size=4), st.sampled_from(["a", "b", "c", "d"]))
def test_monotonicity_and_soundness(lo, hi, values, extra):
    if lo is not None and hi is not None and lo > hi:
        lo, hi = hi, lo
    if lo is None and hi is None:
        lo = 1
    ps = PropertyShape(RDFS_LABEL, min_count=lo, max_count=hi)
    before = {v.kind for v in check_property("s", [Literal(v) for v in values], ps)}
    grown = values + ([extra] if extra not in values else [])
    after = {v.kind for v in check_property("s", [Literal(v) for v in grown], ps)}
    assert not ("maxCount" in before and "maxCount" not in after)
    assert not ("minCount" not in before and "minCount" in after)
    # soundness: each kind is re-derivable from the count alone
    n = len(values)
    assert ("minCount" in before) == (lo is not None and n < lo)
    assert ("maxCount" in before) == (hi is not None and n > hi)


# -- rules --------------------------------------------------------------------------------------------


def test_unconditional_triple_rule():
    s = shapes(':S a sh:NodeShape ; sh:targetClass :Person ; sh:rule _:r . _:r a sh:TripleRule ; sh:subject sh:this ; sh:predicate :status ; sh:object "active" .')
    derived, iterations, _ = run_rules(_person(), s, TBOX)
    assert derived == {Triple(IRI(K + "p"), IRI(K + "status"), Literal("active"))}
    assert iterations == 2  # the second pass derives nothing


def test_rule_output_deduplicated_against_data():
    s = shapes(':S a sh:NodeShape ; sh:targetClass :Person ; sh:rule _:r . _:r a sh:TripleRule ; sh:subject sh:this ; sh:predicate :status ; sh:object "active" .')
    derived, iterations, _ = run_rules(_person(**{K + "status": [Literal("active")]}), s, TBOX)
    assert derived == set() and iterations == 1


def test_path_object_rule_copies_values():
    s = shapes(":S a sh:NodeShape ; sh:targetClass :Person ; sh:rule _:r . _:r a sh:TripleRule ; sh:subject sh:this ; sh:predicate :name ; sh:object _:o . _:o sh:path rdfs:label .")
    derived, _, _ = run_rules(_person(**{RDFS_LABEL: [Literal("A"), Literal("B")]}), s, TBOX)
    assert {t.object for t in derived} == {Literal("A"), Literal("B")}


def _chain(n: int) -> list[NodeShape]:
    """Shape i types the focus with class i+1, so the fixpoint needs n passes."""
    return [NodeShape(f"s{i}", f"{K}C{i}", (), (TripleRule(f"r{i}", RDF_TYPE, IRI(f"{K}C{i + 1}")),)) for i in range(n)]


def test_iteration_cap_names_the_rule():
    with pytest.raises(RuleLimitExceeded) as info:
        run_rules(ObjectRecord(K + "x", {K + "C0"}), _chain(MAX_RULE_ITERATIONS + 2))
    assert f"r{MAX_RULE_ITERATIONS - 1}" in str(info.value)


def test_chain_under_the_cap_terminates():
    derived, iterations, overlay = run_rules(ObjectRecord(K + "x", {K + "C0"}), _chain(MAX_RULE_ITERATIONS - 2))
    assert iterations == MAX_RULE_ITERATIONS - 1
    assert overlay[K + "x"].classes == {f"{K}C{i}" for i in range(MAX_RULE_ITERATIONS - 1)}


def test_rule_order_does_not_change_the_result():
    base = _chain(4) + [
        NodeShape("z", f"{K}C2", (), (TripleRule("tag", K + "tag", Literal("two")), TripleRule("self", K + "me", object_is_focus=True))),
    ]
    results = set()
    for perm in itertools.permutations(base):
        derived, _, _ = run_rules(ObjectRecord(K + "x", {K + "C0"}), list(perm))
        results.add(frozenset(derived))
    assert len(results) == 1


def test_construct_rule_inverse_through_engine():
    p = Platform()
    p.load_schema(SCHEMA_TTL + f"<{K}hasResponsible> a rdf:Property .\n")
    p.load_shapes(
        HEAD
        + """:S a sh:NodeShape ; sh:targetClass :Person ; sh:rule _:r .
_:r a sh:SPARQLRule ; sh:construct "CONSTRUCT { ?proj :hasResponsible ?this } WHERE { ?this :responsibleFor ?proj }" ."""
    )
    # toy data: one project, one person pointing at it, one unrelated project
    p.upsert(ObjectRecord(K + "proj1", {PROJECT}, {RDFS_LABEL: [Literal("P1")]}))
    p.upsert(ObjectRecord(K + "proj2", {PROJECT}, {RDFS_LABEL: [Literal("P2")]}))
    report = p.upsert(ObjectRecord(K + "ann", {PERSON}, {RESPONSIBLE_FOR: [IRI(K + "proj1")]}))
    assert report.derived == [Triple(IRI(K + "proj1"), IRI(K + "hasResponsible"), IRI(K + "ann"))]
    assert report.side_writes == [K + "proj1"]
    assert p.fetch(K + "proj1").properties[K + "hasResponsible"] == [IRI(K + "ann")]
    assert K + "hasResponsible" not in p.fetch(K + "proj2").properties
    rs = p.query(f"PREFIX : <{K}> SELECT ?who WHERE {{ :proj1 :hasResponsible ?who }}")
    assert rs.rows == [(IRI(K + "ann"),)]
    p.close()
