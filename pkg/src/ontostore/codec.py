"""JSON wire formats: terms, object records and pattern queries.

Terms use the SPARQL 1.1 results-JSON term objects
(``{"type": "uri" | "literal" | "bnode", "value": ..., "datatype": ..., "xml:lang": ...}``),
so REST clients need only one term encoding.
"""
from __future__ import annotations

import json

from .rdf import BLANK_KIND, IRI_KIND, XSD_STRING, BNode, IRI, Literal, Term
from .storage.base import ObjectRecord, PatternQuery, PropertyFilter


class CodecError(ValueError):
    pass


def term_to_json(term: Term) -> dict:
    if term.kind == IRI_KIND:
        return {"type": "uri", "value": term.value}
    if term.kind == BLANK_KIND:
        return {"type": "bnode", "value": term.value}
    out = {"type": "literal", "value": term.value}
    if term.lang:
        out["xml:lang"] = term.lang
    elif term.datatype != XSD_STRING:
        out["datatype"] = term.datatype
    return out


def term_from_json(doc) -> Term:
    if not isinstance(doc, dict) or "type" not in doc or "value" not in doc:
        raise CodecError(f"malformed term {doc!r}")
    kind = doc["type"]
    value = doc["value"]
    if not isinstance(value, str):
        raise CodecError("term value must be a string")
    try:
        if kind == "uri":
            return IRI(value)
        if kind == "bnode":
            return BNode(value)
        if kind in ("literal", "typed-literal"):
            lang = doc.get("xml:lang") or doc.get("lang")
            if lang:
                return Literal(value, lang=lang)
            return Literal(value, doc.get("datatype"))
    except ValueError as exc:
        raise CodecError(str(exc)) from None
    raise CodecError(f"unknown term type {kind!r}")


def record_to_doc(record: ObjectRecord, labels: dict[str, str] | None = None) -> dict:
    """Record document.  ``labels`` attaches display labels to IRI values."""
    props = {}
    for prop, values in record.properties.items():
        out = []
        for v in values:
            doc = term_to_json(v)
            if labels is not None and v.kind == IRI_KIND and v.value in labels:
                doc["label"] = labels[v.value]
            out.append(doc)
        props[prop] = out
    return {"subject": record.subject, "classes": sorted(record.classes), "properties": props}


def record_from_doc(doc) -> ObjectRecord:
    if not isinstance(doc, dict):
        raise CodecError("record document must be an object")
    subject = doc.get("subject")
    if not isinstance(subject, str) or not subject:
        raise CodecError("record document is missing 'subject'")
    classes = doc.get("classes", [])
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise CodecError("'classes' must be a list of IRIs")
    props = doc.get("properties", {})
    if not isinstance(props, dict):
        raise CodecError("'properties' must be an object")
    properties = {}
    for prop, values in props.items():
        if not isinstance(values, list):
            raise CodecError(f"values of {prop} must be a list")
        try:
            IRI(prop)
        except ValueError as exc:
            raise CodecError(str(exc)) from None
        properties[prop] = [term_from_json(v) for v in values]
    if not subject.startswith("_:"):
        try:
            IRI(subject)
        except ValueError as exc:
            raise CodecError(str(exc)) from None
    for c in classes:
        try:
            IRI(c)
        except ValueError as exc:
            raise CodecError(str(exc)) from None
    return ObjectRecord(subject, set(classes), properties).normalized()


def record_to_line(record: ObjectRecord) -> str:
    return json.dumps(record_to_doc(record), ensure_ascii=False, sort_keys=True)


def record_from_line(line: str) -> ObjectRecord:
    try:
        return record_from_doc(json.loads(line))
    except json.JSONDecodeError as exc:
        raise CodecError(f"malformed record line: {exc}") from None


def pattern_query_to_doc(q: PatternQuery) -> dict:
    return {
        "class": q.cls,
        "filters": [{"property": f.prop, "op": f.op, "value": term_to_json(f.value)} for f in q.filters],
        "offset": q.offset,
        "limit": q.limit,
    }


def pattern_query_from_doc(cls: str, doc: dict) -> PatternQuery:
    filters = []
    for f in doc.get("filters", []):
        try:
            filters.append(PropertyFilter(f["property"], f["op"], term_from_json(f["value"])))
        except (KeyError, TypeError):
            raise CodecError(f"malformed filter {f!r}") from None
    try:
        return PatternQuery(cls, tuple(filters), int(doc.get("offset", 0) or 0), doc.get("limit"))
    except ValueError as exc:
        raise CodecError(str(exc)) from None


__all__ = [
    "CodecError",
    "pattern_query_from_doc",
    "pattern_query_to_doc",
    "record_from_doc",
    "record_from_line",
    "record_to_doc",
    "record_to_line",
    "term_from_json",
    "term_to_json",
]
