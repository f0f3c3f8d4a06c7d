"""SHACL subset: node shapes with property constraints, triple rules and SPARQL construct rules."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from .errors import RuleLimitExceeded, UnsupportedShape
from .rdf import (
    BLANK_KIND,
    IRI_KIND,
    LITERAL_KIND,
    RDF_TYPE,
    RDFS,
    SH,
    Term,
    Triple,
    TripleSet,
    is_valid_lexical,
)
from .sparql.ast import And, Call, Compare, Not, Or, Query, TriplePattern, Var
from .sparql.parser import QuerySyntaxError, parse_query
from .storage.base import ObjectRecord, subject_term, term_subject

MAX_RULE_ITERATIONS = 10
THIS = Var("this")

_NODE_SHAPE = SH + "NodeShape"
_TRIPLE_RULE = SH + "TripleRule"
_SPARQL_RULE = SH + "SPARQLRule"
_IGNORED = {SH + "name", SH + "description", SH + "order", RDFS + "label", RDFS + "comment"}
_NODE_KEYS = {RDF_TYPE, SH + "targetClass", SH + "property", SH + "rule"} | _IGNORED
_PROPERTY_KEYS = {
    SH + "path",
    SH + "minCount",
    SH + "maxCount",
    SH + "datatype",
    SH + "pattern",
    SH + "flags",
    SH + "class",
    SH + "message",
    RDF_TYPE,
} | _IGNORED
_TRIPLE_RULE_KEYS = {RDF_TYPE, SH + "subject", SH + "predicate", SH + "object"} | _IGNORED
_SPARQL_RULE_KEYS = {RDF_TYPE, SH + "construct", SH + "prefixes"} | _IGNORED
# lookaround, backreferences, named groups and inline flags fall outside the portable core
_NONPORTABLE_REGEX = re.compile(r"\(\?|\\[1-9]|\\[AZbBg]|\\k<")


@dataclass(frozen=True)
class PropertyShape:
    path: str
    min_count: int | None = None
    max_count: int | None = None
    datatype: str | None = None
    pattern: str | None = None
    flags: str = ""
    cls: str | None = None
    message: str | None = None

    def __post_init__(self):
        if self.min_count is not None and self.max_count is not None and self.min_count > self.max_count:
            raise UnsupportedShape(f"minCount > maxCount on path {self.path}")
        if all(v is None for v in (self.min_count, self.max_count, self.datatype, self.pattern, self.cls)):
            raise UnsupportedShape(f"property shape on {self.path} has no constraint component")

    def compiled(self) -> re.Pattern | None:
        if self.pattern is None:
            return None
        return re.compile(self.pattern, re.IGNORECASE if "i" in self.flags else 0)


@dataclass(frozen=True)
class TripleRule:
    """Derives ``(focus, predicate, object)``.

    ``obj`` is a constant term, or None with ``object_path`` naming a
    property of the focus node whose values become objects.
    """

    id: str
    predicate: str
    obj: Term | None = None
    object_path: str | None = None
    object_is_focus: bool = False


@dataclass(frozen=True)
class ConstructRule:
    id: str
    query: Query
    text: str = field(compare=False, default="")


@dataclass(frozen=True)
class NodeShape:
    id: str
    target_class: str
    properties: tuple[PropertyShape, ...] = ()
    rules: tuple = ()


@dataclass(frozen=True)
class Violation:
    focus: str
    path: str
    kind: str
    message: str

    def to_doc(self) -> dict:
        return {"focus": self.focus, "path": self.path, "kind": self.kind, "message": self.message}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def conforms(self) -> bool:
        return not self.violations

    def to_doc(self) -> dict:
        return {"conforms": self.conforms, "violations": [v.to_doc() for v in self.violations]}


# -- parsing -----------------------------------------------------------------------


def _node_id(t: Term) -> str:
    return term_subject(t) if t.kind != LITERAL_KIND else t.value


def _int(values: list[Term], name: str) -> int | None:
    if not values:
        return None
    if len(values) > 1:
        raise UnsupportedShape(f"multiple {name} values")
    v = values[0]
    if v.kind != LITERAL_KIND or not re.fullmatch(r"\+?\d+", v.value):
        raise UnsupportedShape(f"{name} must be a non-negative integer")
    return int(v.value)


def _one_iri(values: list[Term], name: str) -> str | None:
    if not values:
        return None
    if len(values) > 1:
        raise UnsupportedShape(f"multiple {name} values")
    if values[0].kind != IRI_KIND:
        raise UnsupportedShape(f"{name} must be an IRI")
    return values[0].value


def _one_string(values: list[Term], name: str) -> str | None:
    if not values:
        return None
    if len(values) > 1 or values[0].kind != LITERAL_KIND:
        raise UnsupportedShape(f"{name} must be a single literal")
    return values[0].value


def parse_shapes(doc: TripleSet) -> list[NodeShape]:
    """Extract node shapes; vocabulary outside the subset raises UnsupportedShape."""
    by_subject: dict[Term, dict[str, list[Term]]] = {}
    for s, p, o in doc.sorted():
        by_subject.setdefault(s, {}).setdefault(p.value, []).append(o)

    def props(node: Term) -> dict[str, list[Term]]:
        return by_subject.get(node, {})

    def check_keys(node: Term, allowed: set[str], what: str) -> None:
        for key in props(node):
            if key not in allowed and key.startswith(SH):
                raise UnsupportedShape(f"unsupported {what} component sh:{key[len(SH):]}")

    shape_nodes = [
        s
        for s, ps in by_subject.items()
        if any(o.kind == IRI_KIND and o.value == _NODE_SHAPE for o in ps.get(RDF_TYPE, ())) or SH + "targetClass" in ps
    ]
    shapes = []
    for node in sorted(shape_nodes):
        p = props(node)
        check_keys(node, _NODE_KEYS, "node shape")
        targets = p.get(SH + "targetClass", [])
        if not targets:
            raise UnsupportedShape(f"shape {_node_id(node)} has no sh:targetClass")
        if len(targets) > 1:
            raise UnsupportedShape(f"shape {_node_id(node)} has several target classes")
        target = _one_iri(targets, "sh:targetClass")
        pshapes = tuple(_parse_property(n, props(n), check_keys) for n in p.get(SH + "property", []))
        rules = tuple(_parse_rule(n, props, check_keys, doc.prefixes) for n in p.get(SH + "rule", []))
        shapes.append(NodeShape(_node_id(node), target, pshapes, rules))
    return shapes


def _parse_property(node: Term, p: dict[str, list[Term]], check_keys) -> PropertyShape:
    check_keys(node, _PROPERTY_KEYS, "property shape")
    paths = p.get(SH + "path", [])
    if len(paths) != 1:
        raise UnsupportedShape(f"property shape {_node_id(node)} needs exactly one sh:path")
    if paths[0].kind != IRI_KIND:
        raise UnsupportedShape("only single-hop IRI paths are supported (sequence or complex path given)")
    pattern = _one_string(p.get(SH + "pattern", []), "sh:pattern")
    flags = _one_string(p.get(SH + "flags", []), "sh:flags") or ""
    if pattern is not None:
        if _NONPORTABLE_REGEX.search(pattern):
            raise UnsupportedShape(f"sh:pattern {pattern!r} uses regex features outside the supported subset")
        if set(flags) - {"i"}:
            raise UnsupportedShape(f"unsupported sh:flags {flags!r}")
        try:
            re.compile(pattern)
        except re.error as exc:
            raise UnsupportedShape(f"invalid sh:pattern {pattern!r}: {exc}") from None
    return PropertyShape(
        path=paths[0].value,
        min_count=_int(p.get(SH + "minCount", []), "sh:minCount"),
        max_count=_int(p.get(SH + "maxCount", []), "sh:maxCount"),
        datatype=_one_iri(p.get(SH + "datatype", []), "sh:datatype"),
        pattern=pattern,
        flags=flags,
        cls=_one_iri(p.get(SH + "class", []), "sh:class"),
        message=_one_string(p.get(SH + "message", []), "sh:message"),
    )


def _parse_rule(node: Term, props, check_keys, prefixes: dict[str, str]):
    p = props(node)
    types = {o.value for o in p.get(RDF_TYPE, []) if o.kind == IRI_KIND}
    rid = _node_id(node)
    if _TRIPLE_RULE in types:
        check_keys(node, _TRIPLE_RULE_KEYS, "triple rule")
        subj = p.get(SH + "subject", [])
        if len(subj) != 1 or subj[0] != Term(IRI_KIND, SH + "this"):
            raise UnsupportedShape(f"rule {rid}: sh:subject must be sh:this")
        pred = _one_iri(p.get(SH + "predicate", []), "sh:predicate")
        if pred is None:
            raise UnsupportedShape(f"rule {rid}: missing sh:predicate")
        objs = p.get(SH + "object", [])
        if len(objs) != 1:
            raise UnsupportedShape(f"rule {rid}: needs exactly one sh:object")
        obj = objs[0]
        if obj == Term(IRI_KIND, SH + "this"):
            return TripleRule(rid, pred, object_is_focus=True)
        if obj.kind == BLANK_KIND:
            path = _one_iri(props(obj).get(SH + "path", []), "sh:path")
            if path is None:
                raise UnsupportedShape(f"rule {rid}: object node expressions other than sh:path are unsupported")
            return TripleRule(rid, pred, object_path=path)
        return TripleRule(rid, pred, obj=obj)
    if _SPARQL_RULE in types:
        check_keys(node, _SPARQL_RULE_KEYS, "SPARQL rule")
        text = _one_string(p.get(SH + "construct", []), "sh:construct")
        if text is None:
            raise UnsupportedShape(f"rule {rid}: missing sh:construct")
        try:
            query = parse_query(text, prefixes)
        except QuerySyntaxError as exc:
            raise UnsupportedShape(f"rule {rid}: {exc}") from None
        if query.form != "construct":
            raise UnsupportedShape(f"rule {rid}: sh:construct must hold a CONSTRUCT query")
        return ConstructRule(rid, query, text)
    raise UnsupportedShape(f"rule {rid}: unsupported rule type")


# -- validation ----------------------------------------------------------------------


ClassLookup = Callable[[str], "set[str] | None"]


def _values(record: ObjectRecord, path: str) -> list[Term]:
    if path == RDF_TYPE:
        return [Term(IRI_KIND, c) for c in sorted(record.classes)]
    return list(record.properties.get(path, ()))


def targeting(shapes: Iterable[NodeShape], classes: set[str]) -> list[NodeShape]:
    return [s for s in shapes if s.target_class in classes]


def validate(record: ObjectRecord, shapes: list[NodeShape], tbox=None, lookup: ClassLookup | None = None) -> ValidationReport:
    """Check the record against every shape targeting one of its classes (superclasses included).

    ``lookup(iri)`` returns the classes of a referenced node (None when it
    does not exist) and is only consulted for sh:class.
    """
    classes = tbox.expand(record.classes) if tbox is not None else set(record.classes)
    report = ValidationReport()
    focus = record.subject
    for shape in targeting(shapes, classes):
        for ps in shape.properties:
            report.violations.extend(check_property(focus, _values(record, ps.path), ps, tbox, lookup))
    return report


def check_property(focus: str, values: list[Term], ps: PropertyShape, tbox=None, lookup: ClassLookup | None = None) -> list[Violation]:
    out = []

    def fail(kind: str, message: str):
        out.append(Violation(focus, ps.path, kind, ps.message or message))

    n = len(values)
    if ps.min_count is not None and n < ps.min_count:
        fail("minCount", f"{n} value(s), at least {ps.min_count} required")
    if ps.max_count is not None and n > ps.max_count:
        fail("maxCount", f"{n} value(s), at most {ps.max_count} allowed")
    if ps.datatype is not None:
        for v in values:
            if v.kind != LITERAL_KIND or v.datatype != ps.datatype:
                got = v.datatype if v.kind == LITERAL_KIND else "a non-literal"
                fail("datatype", f"value {v.n3()} has datatype {got}, expected {ps.datatype}")
            elif not is_valid_lexical(v.value, v.datatype):
                fail("datatype", f"lexical form {v.value!r} is invalid for {ps.datatype}")
    rx = ps.compiled()
    if rx is not None:
        for v in values:
            if v.kind == BLANK_KIND or not rx.search(v.value):
                fail("pattern", f"value {v.n3()} does not match {ps.pattern!r}")
    if ps.cls is not None:
        for v in values:
            if v.kind == LITERAL_KIND:
                fail("class", f"literal {v.n3()} cannot be an instance of {ps.cls}")
                continue
            found = lookup(term_subject(v)) if lookup is not None else None
            classes = tbox.expand(found) if (tbox is not None and found) else (found or set())
            if ps.cls not in classes:
                fail("class", f"{v.n3()} is not an instance of {ps.cls}")
    return out


# -- rules -------------------------------------------------------------------------


def bind_this(query: Query, focus: Term) -> Query:
    """Substitute the focus node for ``$this`` everywhere in the query."""

    def node(x):
        return focus if x == THIS else x

    def pattern(p: TriplePattern) -> TriplePattern:
        return TriplePattern(node(p.subject), node(p.predicate), node(p.object))

    def expr(e):
        if isinstance(e, Var):
            return node(e)
        if isinstance(e, Compare):
            return Compare(e.op, expr(e.left), expr(e.right))
        if isinstance(e, Call):
            return Call(e.name, tuple(expr(a) for a in e.args))
        if isinstance(e, (And, Or)):
            return type(e)(expr(e.left), expr(e.right))
        if isinstance(e, Not):
            return Not(expr(e.arg))
        return e

    projection = None if query.projection is None else tuple(v for v in query.projection if v != THIS)
    return replace(
        query,
        projection=projection,
        patterns=tuple(pattern(p) for p in query.patterns),
        filters=tuple(expr(f) for f in query.filters),
        template=tuple(pattern(p) for p in query.template),
    )


ConstructFn = Callable[[Query, dict], "Iterable[Triple]"]
FetchFn = Callable[[str], "ObjectRecord | None"]


def _merge(record: ObjectRecord | None, subject: str, triples: Iterable[Triple]) -> ObjectRecord:
    rec = record.copy() if record is not None else ObjectRecord(subject)
    for t in triples:
        if t.predicate.value == RDF_TYPE and t.object.kind == IRI_KIND:
            rec.classes.add(t.object.value)
        else:
            values = rec.properties.setdefault(t.predicate.value, [])
            if t.object not in values:
                values.append(t.object)
    return rec


def _has(record: ObjectRecord | None, t: Triple) -> bool:
    if record is None:
        return False
    if t.predicate.value == RDF_TYPE and t.object.kind == IRI_KIND:
        return t.object.value in record.classes
    return t.object in record.properties.get(t.predicate.value, ())


def run_rules(
    record: ObjectRecord,
    shapes: list[NodeShape],
    tbox=None,
    construct: ConstructFn | None = None,
    fetch: FetchFn | None = None,
) -> tuple[set[Triple], int, dict[str, ObjectRecord]]:
    """Iterate the rules of shapes targeting the record to a fixpoint.

    Returns ``(derived, iterations, overlay)`` where ``overlay`` maps every
    touched subject to its record with derived triples merged in.
    """
    focus_term = subject_term(record.subject)
    overlay: dict[str, ObjectRecord] = {record.subject: record.copy()}
    derived: set[Triple] = set()

    def current(subject: str) -> ObjectRecord | None:
        if subject not in overlay and fetch is not None:
            found = fetch(subject)
            if found is not None:
                overlay[subject] = found.copy()
        return overlay.get(subject)

    for iteration in range(1, MAX_RULE_ITERATIONS + 1):
        focus = overlay[record.subject]
        classes = tbox.expand(focus.classes) if tbox is not None else set(focus.classes)
        new: dict[Triple, str] = {}
        for shape in sorted(targeting(shapes, classes), key=lambda s: s.id):
            for rule in shape.rules:
                for t in _fire(rule, focus, focus_term, overlay, construct):
                    if t in derived or t in new or _has(current(term_subject(t.subject)), t):
                        continue
                    new[t] = rule.id
        if not new:
            return derived, iteration, overlay
        if iteration == MAX_RULE_ITERATIONS:
            names = ", ".join(sorted(set(new.values())))
            raise RuleLimitExceeded(f"rules did not reach a fixpoint within {MAX_RULE_ITERATIONS} iterations: {names}")
        derived.update(new)
        by_subject: dict[str, list[Triple]] = {}
        for t in new:
            by_subject.setdefault(term_subject(t.subject), []).append(t)
        for subject, triples in by_subject.items():
            overlay[subject] = _merge(current(subject), subject, triples)
    raise AssertionError("unreachable")


def apply_rules(record, shapes, tbox=None, construct=None, fetch=None) -> set[Triple]:
    """Derived triples not already present in the record or the stored data."""
    return run_rules(record, shapes, tbox, construct, fetch)[0]


def _fire(rule, focus: ObjectRecord, focus_term: Term, overlay, construct) -> list[Triple]:
    pred = Term(IRI_KIND, rule.predicate) if isinstance(rule, TripleRule) else None
    if isinstance(rule, TripleRule):
        if rule.object_is_focus:
            return [Triple(focus_term, pred, focus_term)]
        if rule.obj is not None:
            return [Triple(focus_term, pred, rule.obj)]
        return [Triple(focus_term, pred, v) for v in _values(focus, rule.object_path)]
    if construct is None:
        raise UnsupportedShape(f"rule {rule.id}: construct rules need a query engine")
    out = []
    for t in construct(bind_this(rule.query, focus_term), overlay):
        if t.subject.kind == LITERAL_KIND or t.predicate.kind != IRI_KIND:
            continue
        out.append(t)
    return out


__all__ = [
    "ConstructRule",
    "MAX_RULE_ITERATIONS",
    "NodeShape",
    "PropertyShape",
    "TripleRule",
    "ValidationReport",
    "Violation",
    "apply_rules",
    "bind_this",
    "check_property",
    "parse_shapes",
    "run_rules",
    "validate",
]
