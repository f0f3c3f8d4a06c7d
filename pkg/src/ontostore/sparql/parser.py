"""Recursive-descent parser for the SPARQL subset.

Anything outside BGP + FILTER (+ CONSTRUCT templates) + OFFSET/LIMIT is
rejected with :class:`UnsupportedFeature` rather than ignored.
"""
from __future__ import annotations

import re

from ..rdf import (
    BLANK_KIND,
    IRI_KIND,
    LITERAL_KIND,
    RDF_LANGSTRING,
    RDF_TYPE,
    WELL_KNOWN_PREFIXES,
    XSD_BOOLEAN,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_INTEGER,
    XSD_STRING,
    Term,
    unescape_string,
)
from .ast import And, Call, Compare, Not, Or, Query, TriplePattern, Var, expr_vars


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        where = f" at offset {position}" if position is not None else ""
        super().__init__(message + where)
        self.position = position


class UnsupportedFeature(QuerySyntaxError):
    def __init__(self, feature: str, position: int | None = None):
        super().__init__(f"unsupported SPARQL feature: {feature}", position)
        self.feature = feature


_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*>)
  | (?P<long>\"\"\"(?:[^"\\]|\\.|"(?!""))*\"\"\"|'''(?:[^'\\]|\\.|'(?!''))*''')
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<var>[?$][A-Za-z0-9_]\w*)
  | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<dtmark>\^\^)
  | (?P<blank>_:[A-Za-z0-9_](?:[\w.\-]*[\w\-])?)
  | (?P<number>(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+))
  | (?P<pname>(?:[A-Za-z](?:[\w.\-]*[\w\-])?)?:(?:[\w:%\-](?:[\w.:%\-]*[\w:%\-])?)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>&&|\|\||!=|<=|>=|[=<>!(){}.;,*/|^+\-\[\]])
    """,
    re.X | re.S,
)

_UNSUPPORTED_KEYWORDS = {
    "OPTIONAL": "OPTIONAL",
    "UNION": "UNION",
    "MINUS": "MINUS",
    "BIND": "BIND",
    "VALUES": "VALUES",
    "GRAPH": "GRAPH",
    "SERVICE": "SERVICE",
    "ORDER": "ORDER BY",
    "GROUP": "GROUP BY",
    "HAVING": "HAVING",
    "DISTINCT": "DISTINCT",
    "REDUCED": "REDUCED",
    "ASK": "ASK",
    "DESCRIBE": "DESCRIBE",
    "FROM": "FROM",
    "INSERT": "SPARQL UPDATE",
    "DELETE": "SPARQL UPDATE",
    "LOAD": "SPARQL UPDATE",
    "CLEAR": "SPARQL UPDATE",
    "WITH": "SPARQL UPDATE",
    "EXISTS": "EXISTS",
    "IN": "IN",
}
_FUNCTIONS = {"CONTAINS": 2, "STR": 1}
_COMPARISONS = ("=", "!=", "<", ">", "<=", ">=")


class _Parser:
    def __init__(self, text: str, prefixes: dict[str, str]):
        self.text = text
        self.prefixes = dict(prefixes)
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos)
            if m.lastgroup != "ws":
                self.tokens.append((m.lastgroup, m.group(), pos))
            pos = m.end()
        self.i = 0

    # token helpers
    def peek(self, ahead: int = 0):
        j = self.i + ahead
        return self.tokens[j] if j < len(self.tokens) else ("eof", "", len(self.text))

    def next(self):
        tok = self.peek()
        if tok[0] == "eof":
            raise QuerySyntaxError("unexpected end of query", tok[2])
        self.i += 1
        return tok

    def keyword(self, tok=None) -> str:
        tok = tok or self.peek()
        return tok[1].upper() if tok[0] == "word" else ""

    def expect(self, value: str):
        tok = self.next()
        if tok[1] != value and self.keyword(tok) != value:
            raise QuerySyntaxError(f"expected {value!r}, found {tok[1]!r}", tok[2])
        return tok

    def check_unsupported(self, tok=None) -> None:
        kw = self.keyword(tok)
        if kw in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(_UNSUPPORTED_KEYWORDS[kw], (tok or self.peek())[2])

    # grammar
    def parse(self) -> Query:
        self.prologue()
        kw = self.keyword()
        self.check_unsupported()
        template: tuple = ()
        projection = None
        if kw == "SELECT":
            self.next()
            projection = self.select_clause()
            form = "select"
        elif kw == "CONSTRUCT":
            self.next()
            self.expect("{")
            template = tuple(self.triples_until("}", allow_filters=False)[0])
            self.expect("}")
            form = "construct"
        else:
            tok = self.peek()
            raise QuerySyntaxError(f"expected SELECT or CONSTRUCT, found {tok[1]!r}", tok[2])
        self.check_unsupported()
        if self.keyword() == "WHERE":
            self.next()
        self.expect("{")
        patterns, filters = self.triples_until("}", allow_filters=True)
        self.expect("}")
        offset, limit = self.modifiers()
        query = Query(
            form=form,
            projection=projection,
            patterns=tuple(patterns),
            filters=tuple(filters),
            template=template,
            offset=offset,
            limit=limit,
            prefixes=self.prefixes,
        )
        self.validate(query)
        return query

    def prologue(self) -> None:
        while True:
            kw = self.keyword()
            if kw == "PREFIX":
                self.next()
                kind, value, pos = self.next()
                if kind != "pname" or not value.endswith(":") or value.count(":") != 1:
                    raise QuerySyntaxError(f"malformed prefix name {value!r}", pos)
                kind2, iri, pos2 = self.next()
                if kind2 != "iri":
                    raise QuerySyntaxError("expected IRI in PREFIX declaration", pos2)
                self.prefixes[value[:-1]] = iri[1:-1]
            elif kw == "BASE":
                raise UnsupportedFeature("BASE", self.peek()[2])
            else:
                return

    def select_clause(self):
        self.check_unsupported()
        tok = self.peek()
        if tok[1] == "*":
            self.next()
            return None
        out: list[Var] = []
        while self.peek()[0] == "var":
            out.append(Var(self.next()[1][1:]))
        if self.peek()[1] == "(":
            raise UnsupportedFeature("SELECT expressions", self.peek()[2])
        if not out:
            raise QuerySyntaxError("expected projection variables or '*'", self.peek()[2])
        return tuple(out)

    def triples_until(self, end: str, allow_filters: bool):
        patterns: list[TriplePattern] = []
        filters: list = []
        while True:
            tok = self.peek()
            if tok[1] == end or tok[0] == "eof":
                return patterns, filters
            if tok[1] == ".":
                self.next()
                continue
            if tok[1] == "{":
                raise UnsupportedFeature("nested group patterns", tok[2])
            kw = self.keyword()
            if kw == "FILTER":
                if not allow_filters:
                    raise QuerySyntaxError("FILTER not allowed in a CONSTRUCT template", tok[2])
                self.next()
                filters.append(self.filter_body())
                continue
            self.check_unsupported()
            subject = self.node(position="subject")
            self.property_list(subject, patterns)
            nxt = self.peek()
            if nxt[1] not in (".", end) and self.keyword(nxt) != "FILTER":
                self.check_unsupported(nxt)
                raise QuerySyntaxError(f"expected '.', found {nxt[1]!r}", nxt[2])

    def property_list(self, subject, patterns: list) -> None:
        while True:
            tok = self.peek()
            if tok[1] == "^":
                raise UnsupportedFeature("property paths", tok[2])
            if tok[0] == "word" and tok[1] == "a":
                self.next()
                predicate = Term(IRI_KIND, RDF_TYPE)
            else:
                predicate = self.node(position="predicate")
            if self.peek()[1] in ("/", "|", "*", "+"):
                raise UnsupportedFeature("property paths", self.peek()[2])
            while True:
                obj = self.node(position="object")
                patterns.append(TriplePattern(subject, predicate, obj))
                if self.peek()[1] == ",":
                    self.next()
                    continue
                break
            if self.peek()[1] == ";":
                while self.peek()[1] == ";":
                    self.next()
                nxt = self.peek()
                if nxt[1] in (".", "}") or self.keyword(nxt) == "FILTER":
                    return
                continue
            return

    def iri(self, tok) -> str:
        kind, value, pos = tok
        if kind == "iri":
            raw = value[1:-1]
            if not re.match(r"[A-Za-z][A-Za-z0-9+.\-]*:", raw):
                raise QuerySyntaxError(f"relative IRI <{raw}> not supported", pos)
            return raw
        prefix, _, local = value.partition(":")
        if prefix not in self.prefixes:
            raise QuerySyntaxError(f"unknown prefix {prefix + ':'!r}", pos)
        return self.prefixes[prefix] + local

    def literal(self, tok) -> Term:
        kind, value, pos = tok
        if kind in ("string", "long"):
            q = 3 if kind == "long" else 1
            try:
                lexical = unescape_string(value[q:-q])
            except ValueError as exc:
                raise QuerySyntaxError(str(exc), pos) from None
            nxt = self.peek()
            if nxt[0] == "lang":
                self.next()
                return Term(LITERAL_KIND, lexical, RDF_LANGSTRING, nxt[1][1:].lower())
            if nxt[0] == "dtmark":
                self.next()
                dt_tok = self.next()
                if dt_tok[0] not in ("iri", "pname"):
                    raise QuerySyntaxError("expected datatype IRI", dt_tok[2])
                return Term(LITERAL_KIND, lexical, self.iri(dt_tok))
            return Term(LITERAL_KIND, lexical, XSD_STRING)
        if kind == "number":
            if re.fullmatch(r"\d+", value):
                return Term(LITERAL_KIND, value, XSD_INTEGER)
            if "e" in value or "E" in value:
                return Term(LITERAL_KIND, value, XSD_DOUBLE)
            return Term(LITERAL_KIND, value, XSD_DECIMAL)
        return Term(LITERAL_KIND, value.lower(), XSD_BOOLEAN)

    def node(self, position: str):
        tok = self.next()
        kind, value, pos = tok
        if kind == "var":
            return Var(value[1:])
        if kind in ("iri", "pname"):
            return Term(IRI_KIND, self.iri(tok))
        if kind == "blank" or value == "[":
            raise UnsupportedFeature("blank nodes in patterns", pos)
        if value == "(":
            raise UnsupportedFeature("RDF collections", pos)
        if kind in ("string", "long", "number") or (kind == "word" and value.lower() in ("true", "false")):
            if position != "object":
                raise QuerySyntaxError(f"literal not allowed in {position} position", pos)
            return self.literal(tok)
        self.check_unsupported(tok)
        raise QuerySyntaxError(f"expected {position}, found {value!r}", pos)

    def filter_body(self):
        tok = self.peek()
        if tok[1] == "(":
            self.next()
            expr = self.or_expr()
            self.expect(")")
            return expr
        if tok[0] == "word":
            return self.primary()
        raise QuerySyntaxError("expected '(' after FILTER", tok[2])

    def or_expr(self):
        left = self.and_expr()
        while self.peek()[1] == "||":
            self.next()
            left = Or(left, self.and_expr())
        return left

    def and_expr(self):
        left = self.rel_expr()
        while self.peek()[1] == "&&":
            self.next()
            left = And(left, self.rel_expr())
        return left

    def rel_expr(self):
        left = self.unary()
        tok = self.peek()
        if tok[1] in _COMPARISONS:
            self.next()
            return Compare(tok[1], left, self.unary())
        self.check_unsupported(tok)
        if self.keyword(tok) == "NOT":
            raise UnsupportedFeature("NOT IN", tok[2])
        return left

    def unary(self):
        tok = self.peek()
        if tok[1] == "!":
            self.next()
            return Not(self.unary())
        if tok[1] in ("+", "-") and self.peek(1)[0] != "number":
            raise UnsupportedFeature("arithmetic", tok[2])
        expr = self.primary()
        if self.peek()[1] in ("+", "-", "*", "/"):
            raise UnsupportedFeature("arithmetic", self.peek()[2])
        return expr

    def primary(self):
        tok = self.next()
        kind, value, pos = tok
        if value == "(":
            expr = self.or_expr()
            self.expect(")")
            return expr
        if kind == "var":
            return Var(value[1:])
        if kind in ("iri", "pname"):
            return Term(IRI_KIND, self.iri(tok))
        if value in ("+", "-") and self.peek()[0] == "number":
            num = self.literal(self.next())
            return num._replace(value=value + num.value if value == "-" else num.value)
        if kind in ("string", "long", "number"):
            return self.literal(tok)
        if kind == "word":
            name = value.upper()
            if value.lower() in ("true", "false"):
                return self.literal(tok)
            self.check_unsupported(tok)
            if name not in _FUNCTIONS:
                raise UnsupportedFeature(f"function {name}", pos)
            self.expect("(")
            args = [self.or_expr()]
            while self.peek()[1] == ",":
                self.next()
                args.append(self.or_expr())
            self.expect(")")
            if len(args) != _FUNCTIONS[name]:
                raise QuerySyntaxError(f"{name} expects {_FUNCTIONS[name]} argument(s)", pos)
            return Call(name, tuple(args))
        raise QuerySyntaxError(f"unexpected {value!r} in expression", pos)

    def modifiers(self):
        offset, limit = 0, None
        seen: set[str] = set()
        while True:
            tok = self.peek()
            kw = self.keyword(tok)
            if tok[0] == "eof":
                return offset, limit
            if kw in ("OFFSET", "LIMIT"):
                if kw in seen:
                    raise QuerySyntaxError(f"duplicate {kw}", tok[2])
                seen.add(kw)
                self.next()
                num = self.next()
                if num[0] != "number" or not num[1].isdigit():
                    raise QuerySyntaxError(f"{kw} expects a non-negative integer", num[2])
                n = int(num[1])
                if kw == "OFFSET":
                    offset = n
                else:
                    if n <= 0:
                        raise QuerySyntaxError("LIMIT must be a positive integer", num[2])
                    limit = n
                continue
            self.check_unsupported(tok)
            raise QuerySyntaxError(f"unexpected {tok[1]!r} after query body", tok[2])

    @staticmethod
    def validate(query: Query) -> None:
        bound = set(query.pattern_vars())
        used: set[Var] = set(query.projection or ())
        for f in query.filters:
            used |= expr_vars(f)
        for p in query.template:
            used |= set(p.variables())
        missing = sorted(used - bound)
        if missing:
            raise QuerySyntaxError(f"variable {missing[0]} is not bound by any triple pattern")
        for p in query.patterns + query.template:
            if isinstance(p.subject, Term) and p.subject.kind == LITERAL_KIND:
                raise QuerySyntaxError("literal in subject position")
            if isinstance(p.predicate, Term) and p.predicate.kind != IRI_KIND:
                raise QuerySyntaxError("predicate must be an IRI or variable")
            if isinstance(p.subject, Term) and p.subject.kind == BLANK_KIND:
                raise UnsupportedFeature("blank nodes in patterns")


def parse_query(text: str, prefixes: dict[str, str] | None = None) -> Query:
    """Parse query text.  ``rdf``, ``rdfs``, ``xsd``, ``owl`` and ``sh`` are pre-declared."""
    table = dict(WELL_KNOWN_PREFIXES)
    if prefixes:
        table.update(prefixes)
    return _Parser(text, table).parse()
