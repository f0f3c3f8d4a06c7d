import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontostore.bench.queries import PREFIXES, Q1_ORGANIZATION
from ontostore.rdf import IRI, RDF_TYPE, RDFS_LABEL, XSD, Literal, Triple, TripleSet, parse_document
from ontostore.sparql.ast import And, Call, Compare, Not, Or, Query, TriplePattern, Var, format_query
from ontostore.sparql.filters import eval_filter
from ontostore.sparql.parser import QuerySyntaxError, UnsupportedFeature, parse_query
from ontostore.sparql.reference import eval_reference

X = "http://x/"
TYPE = IRI(RDF_TYPE)


def test_organization_label_query():
    q = parse_query(PREFIXES + Q1_ORGANIZATION)
    assert q.projection is None
    assert len(q.patterns) == 2 and len(q.filters) == 1
    assert q.patterns[0] == TriplePattern(Var("org"), TYPE, IRI("http://example.org/kg/Organization"))
    assert q.filters[0] == Call("CONTAINS", (Call("STR", (Var("name"),)), Literal("some text")))


def test_deep_offset_query():
    q = parse_query("SELECT * WHERE { ?p a <http://x/Project> . ?p rdfs:label ?n } OFFSET 990000 LIMIT 1000")
    assert (q.offset, q.limit) == (990000, 1000)


def test_empty_query():
    q = parse_query("SELECT * WHERE { }")
    assert q.patterns == () and q.filters == ()


def test_rdf_type_and_a_are_equal():
    a = parse_query("SELECT * WHERE { ?s a <http://x/C> }")
    b = parse_query("SELECT * WHERE { ?s rdf:type <http://x/C> }")
    assert a.patterns == b.patterns


def test_shorthand_and_typed_literals():
    q = parse_query('PREFIX : <http://x/> SELECT ?s WHERE { ?s :p 42, "a"@en ; :q 1.5 . FILTER(?s != :z && !(1 < 2) || true) }')
    objs = [p.object for p in q.patterns]
    assert objs == [Literal("42", XSD + "integer"), Literal("a", lang="en"), Literal("1.5", XSD + "decimal")]
    assert isinstance(q.filters[0], Or) and isinstance(q.filters[0].left, And)
    assert isinstance(q.filters[0].left.right, Not)


@pytest.mark.parametrize(
    "text, feature",
    [
        ("SELECT * WHERE { ?s ?p ?o } ORDER BY ?s", "ORDER BY"),
        ("SELECT * WHERE { ?s ?p ?o OPTIONAL { ?s ?q ?r } }", "OPTIONAL"),
        ("SELECT * WHERE { { ?s ?p ?o } UNION { ?s ?q ?o } }", None),
        ("SELECT DISTINCT ?s WHERE { ?s ?p ?o }", "DISTINCT"),
        ("SELECT * WHERE { ?s ?p ?o } GROUP BY ?s", "GROUP BY"),
        ("ASK { ?s ?p ?o }", "ASK"),
        ("SELECT * WHERE { ?s <http://x/p>/<http://x/q> ?o }", "property paths"),
        ("SELECT * WHERE { ?s ?p ?o FILTER(REGEX(?o, \"x\")) }", "function REGEX"),
        ("SELECT (COUNT(?s) AS ?n) WHERE { ?s ?p ?o }", "SELECT expressions"),
        ("INSERT DATA { <http://x/a> <http://x/b> <http://x/c> }", "SPARQL UPDATE"),
    ],
)
def test_unsupported_features_are_named(text, feature):
    with pytest.raises(QuerySyntaxError) as info:
        parse_query(text)
    if feature is not None:
        assert isinstance(info.value, UnsupportedFeature)
        assert info.value.feature == feature


@pytest.mark.parametrize(
    "text",
    [
        "SELECT * WHERE { ?s ?p }",
        "SELECT ?x WHERE { ?s ?p ?o }",  # projected var not bound
        "SELECT * WHERE { ?s ?p ?o } LIMIT 0",
        "SELECT * WHERE { ?s ?p ?o } LIMIT -1",
        "SELECT * WHERE { ?s ?p ?o } OFFSET 1 OFFSET 2",
        "SELECT * WHERE { ?s nope:p ?o }",
        'SELECT * WHERE { "lit" ?p ?o }',
        "SELECT * WHERE { ?s ?p ?o FILTER(?zz = 1) }",
    ],
)
def test_syntax_errors(text):
    with pytest.raises(QuerySyntaxError):
        parse_query(text)


def test_error_position_reported():
    with pytest.raises(QuerySyntaxError) as info:
        parse_query("SELECT * WHERE { ?s ?p ?o } ORDER BY ?s")
    assert info.value.position == 28


# -- printer round trip ------------------------------------------------------------------

var = st.sampled_from([Var(n) for n in "abcd"])
const = st.one_of(
    st.sampled_from([IRI(X + "a"), IRI(X + "b"), IRI(RDF_TYPE)]),
    st.builds(Literal, st.text(st.characters(blacklist_categories=("Cs",)), max_size=8)),
    st.builds(lambda n: Literal(str(n), XSD + "integer"), st.integers(-50, 50)),
    st.builds(lambda t: Literal(t, lang="en"), st.text("xyz", max_size=3)),
)
node = st.one_of(var, const)
pattern = st.builds(TriplePattern, st.one_of(var, st.just(IRI(X + "s"))), st.one_of(var, st.just(IRI(X + "p"))), node)


def _exprs():
    leaf = st.one_of(var, const)
    return st.recursive(
        leaf,
        lambda inner: st.one_of(
            st.builds(Compare, st.sampled_from(["=", "!=", "<", ">", "<=", ">="]), inner, inner),
            st.builds(lambda a: Call("STR", (a,)), inner),
            st.builds(lambda a, b: Call("CONTAINS", (a, b)), inner, inner),
            st.builds(And, inner, inner),
            st.builds(Or, inner, inner),
            st.builds(Not, inner),
        ),
        max_leaves=6,
    )


@st.composite
def queries(draw):
    patterns = tuple(draw(st.lists(pattern, min_size=1, max_size=4)))
    bound = sorted({v for p in patterns for v in p.variables()}, key=lambda v: v.name)
    filters = ()
    if bound:
        exprs = draw(st.lists(_exprs(), max_size=2))
        filters = tuple(e for e in exprs if all(v in bound for v in _vars(e)))
    projection = None
    if bound and draw(st.booleans()):
        projection = tuple(draw(st.lists(st.sampled_from(bound), min_size=1, max_size=3)))
    offset = draw(st.integers(0, 5))
    limit = draw(st.one_of(st.none(), st.integers(1, 9)))
    if draw(st.booleans()) and bound:
        return Query("construct", None, patterns, filters, tuple(p for p in patterns), offset, limit)
    return Query("select", projection, patterns, filters, (), offset, limit)


def _vars(e):
    from ontostore.sparql.ast import expr_vars

    return expr_vars(e)


@settings(max_examples=300, deadline=None)
@given(queries(), st.booleans())
def test_print_parse_round_trip(q, with_prefixes):
    prefixes = {"x": X} if with_prefixes else None
    assert parse_query(format_query(q, prefixes)) == q


# -- filters -----------------------------------------------------------------------------


def test_contains_over_str():
    e = Call("CONTAINS", (Call("STR", (Var("name"),)), Literal("some text")))
    assert eval_filter(e, {Var("name"): Literal("Acme some text Ltd")})
    assert not eval_filter(e, {Var("name"): Literal("Acme Some Text Ltd")})  # case-sensitive


def test_date_comparison_by_value():
    e = Compare(">", Var("birth"), Literal("1999-12-27", XSD + "date"))
    assert eval_filter(e, {Var("birth"): Literal("2000-01-01", XSD + "date")})
    assert not eval_filter(e, {Var("birth"): Literal("1999-12-27", XSD + "date")})


def test_numeric_comparison_by_value_not_lexically():
    e = Compare("<", Var("n"), Literal("10", XSD + "integer"))
    assert eval_filter(e, {Var("n"): Literal("9", XSD + "integer")})
    assert eval_filter(e, {Var("n"): Literal("9.5", XSD + "decimal")})


def test_unbound_variable_excludes_row():
    e = Compare("=", Var("x"), Literal("a"))
    assert not eval_filter(e, {})
    assert not eval_filter(Not(e), {})


def test_error_in_or_is_absorbed_by_true_branch():
    e = Or(Compare("=", Var("x"), Literal("a")), Compare("=", Var("y"), Literal("b")))
    assert eval_filter(e, {Var("y"): Literal("b")})


# -- reference evaluator ----------------------------------------------------------------------

TOY = parse_document(
    """@prefix : <http://x/> .
:X :participatesIn :p1, :p2 .
:Y :responsibleFor :p2, :p3 .
:Z :responsibleFor :p1 .
:p1 a :Project .
"""
)


def test_single_pattern_count():
    data = TripleSet(
        [
            Triple(IRI(X + "a"), TYPE, IRI(X + "Company")),
            Triple(IRI(X + "b"), TYPE, IRI(X + "Company")),
            Triple(IRI(X + "c"), TYPE, IRI(X + "Person")),
        ]
    )
    rs = eval_reference(parse_query("PREFIX : <http://x/> SELECT * WHERE { ?s a :Company }"), data)
    assert rs.rows == [(IRI(X + "a"),), (IRI(X + "b"),)]


def test_traversal_on_toy_graph():
    # X participates in p1 and p2; Y is responsible for p2 and p3: the only shared project is p2
    rs = eval_reference(parse_query("PREFIX : <http://x/> SELECT * WHERE { :X :participatesIn ?p . :Y :responsibleFor ?p }"), TOY)
    assert rs.rows == [(IRI(X + "p2"),)]


def test_empty_bgp_is_one_empty_row():
    rs = eval_reference(parse_query("SELECT * WHERE { }"), TOY)
    assert rs.rows == [()]


def test_repeated_variable_in_pattern():
    data = TripleSet([Triple(IRI(X + "a"), IRI(X + "p"), IRI(X + "a")), Triple(IRI(X + "a"), IRI(X + "p"), IRI(X + "b"))])
    rs = eval_reference(parse_query("SELECT ?s WHERE { ?s <http://x/p> ?s }"), data)
    assert rs.rows == [(IRI(X + "a"),)]


def test_offset_limit_algebra():
    full = eval_reference(parse_query("SELECT * WHERE { ?s ?p ?o }"), TOY).rows
    for k in range(len(full) + 2):
        for m in (1, 2, 5):
            part = eval_reference(parse_query(f"SELECT * WHERE {{ ?s ?p ?o }} OFFSET {k} LIMIT {m}"), TOY).rows
            assert len(part) <= m
            assert part == full[k:k + m]


def test_reference_is_deterministic_and_filters_hold():
    q = parse_query('SELECT * WHERE { ?s ?p ?o FILTER(CONTAINS(STR(?o), "p")) }')
    a, b = eval_reference(q, TOY), eval_reference(q, TOY)
    assert a.rows == b.rows
    assert all(eval_filter(q.filters[0], dict(zip(a.variables, r))) for r in a.rows)


def test_reference_rejects_construct():
    with pytest.raises(ValueError):
        eval_reference(parse_query("CONSTRUCT { ?s ?p ?o } WHERE { ?s ?p ?o }"), TOY)


def test_label_prefix_is_predeclared():
    q = parse_query("SELECT * WHERE { ?s rdfs:label ?l }")
    assert q.patterns[0].predicate == IRI(RDFS_LABEL)
