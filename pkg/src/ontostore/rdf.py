"""RDF terms, triples and the Turtle-subset / N-Triples codecs.

Terms are plain named tuples whose field order *is* the canonical order:
``(kind, value, datatype, lang)`` with ``iri < blank < literal``.  Sorting a
list of terms (or tuples of terms) therefore needs no key function.
"""
from __future__ import annotations

import bisect
import datetime as _dt
import itertools
import re
from decimal import Decimal
from functools import lru_cache
from typing import Iterable, Iterator, NamedTuple
from urllib.parse import urljoin

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"
OWL = "http://www.w3.org/2002/07/owl#"
SH = "http://www.w3.org/ns/shacl#"

RDF_TYPE = RDF + "type"
RDF_LANGSTRING = RDF + "langString"
RDFS_LABEL = RDFS + "label"
RDFS_CLASS = RDFS + "Class"
RDFS_SUBCLASSOF = RDFS + "subClassOf"
XSD_STRING = XSD + "string"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_DOUBLE = XSD + "double"
XSD_FLOAT = XSD + "float"
XSD_BOOLEAN = XSD + "boolean"
XSD_DATE = XSD + "date"
XSD_DATETIME = XSD + "dateTime"

WELL_KNOWN_PREFIXES = {"rdf": RDF, "rdfs": RDFS, "xsd": XSD, "owl": OWL, "sh": SH}

IRI_KIND = 0
BLANK_KIND = 1
LITERAL_KIND = 2

_SCHEME = re.compile(r"[A-Za-z][A-Za-z0-9+.\-]*:")
_BAD_IRI_CHARS = re.compile(r'[\s<>"{}|^`\\]')
_LANG = re.compile(r"[a-zA-Z]+(?:-[a-zA-Z0-9]+)*\Z")
_BLANK_LABEL = re.compile(r"[A-Za-z0-9_](?:[\w.\-]*[\w\-])?\Z")


class Term(NamedTuple):
    kind: int
    value: str
    datatype: str = ""
    lang: str = ""

    @property
    def is_iri(self) -> bool:
        return self.kind == IRI_KIND

    @property
    def is_blank(self) -> bool:
        return self.kind == BLANK_KIND

    @property
    def is_literal(self) -> bool:
        return self.kind == LITERAL_KIND

    def n3(self, prefixes: dict[str, str] | None = None) -> str:
        if self.kind == IRI_KIND:
            if prefixes:
                compact = compact_iri(self.value, prefixes)
                if compact is not None:
                    return compact
            return f"<{self.value}>"
        if self.kind == BLANK_KIND:
            return f"_:{self.value}"
        text = '"' + escape_string(self.value) + '"'
        if self.lang:
            return f"{text}@{self.lang}"
        if self.datatype == XSD_STRING:
            return text
        return text + "^^" + Term(IRI_KIND, self.datatype).n3(prefixes)

    def __str__(self) -> str:
        return self.n3()


class Triple(NamedTuple):
    subject: Term
    predicate: Term
    object: Term

    def n3(self, prefixes: dict[str, str] | None = None) -> str:
        return f"{self.subject.n3(prefixes)} {self.predicate.n3(prefixes)} {self.object.n3(prefixes)} ."


def IRI(value: str) -> Term:
    if not value or _BAD_IRI_CHARS.search(value):
        raise ValueError(f"invalid IRI {value!r}")
    if not _SCHEME.match(value):
        raise ValueError(f"IRI must be absolute: {value!r}")
    return Term(IRI_KIND, value)


def Literal(lexical: str, datatype: str | None = None, lang: str | None = None) -> Term:
    if lang:
        if datatype not in (None, XSD_STRING, RDF_LANGSTRING):
            raise ValueError("a literal cannot carry both a language tag and a datatype")
        if not _LANG.match(lang):
            raise ValueError(f"invalid language tag {lang!r}")
        return Term(LITERAL_KIND, lexical, RDF_LANGSTRING, lang.lower())
    if datatype is None:
        datatype = XSD_STRING
    elif datatype == RDF_LANGSTRING:
        raise ValueError("rdf:langString literal requires a language tag")
    else:
        IRI(datatype)
    return Term(LITERAL_KIND, lexical, datatype, "")


def BNode(label: str) -> Term:
    if not _BLANK_LABEL.match(label):
        raise ValueError(f"invalid blank node label {label!r}")
    return Term(BLANK_KIND, label)


UNBOUND_KEY = (-1, "", "", "")


def compare_terms(a: Term, b: Term) -> int:
    """-1, 0 or 1 according to the canonical term order."""
    return (a > b) - (a < b)


def row_key(row: tuple) -> tuple:
    """Sort key for a row that may hold ``None`` for unbound positions."""
    return tuple(UNBOUND_KEY if t is None else t for t in row)


# --- literal values -------------------------------------------------------

NUMERIC_TYPES = frozenset({XSD_INTEGER, XSD_DECIMAL, XSD_DOUBLE, XSD_FLOAT})

_INTEGER_RE = re.compile(r"[+-]?\d+\Z")
_DECIMAL_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)\Z")
_DOUBLE_RE = re.compile(r"[+-]?(?:(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?|INF|NaN)\Z")
_DATE_RE = re.compile(r"(-?\d{4,})-(\d{2})-(\d{2})(Z|[+-]\d{2}:\d{2})?\Z")
_DATETIME_RE = re.compile(
    r"(-?\d{4,})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(\.\d+)?(Z|[+-]\d{2}:\d{2})?\Z"
)
_BOOLEAN_VALUES = {"true": True, "1": True, "false": False, "0": False}


def _offset(tz: str | None) -> _dt.timedelta:
    if not tz or tz == "Z":
        return _dt.timedelta(0)
    sign = -1 if tz[0] == "-" else 1
    return sign * _dt.timedelta(hours=int(tz[1:3]), minutes=int(tz[4:6]))


@lru_cache(maxsize=65536)
def literal_value(lexical: str, datatype: str):
    """Comparable ``(category, value)`` for the ordered datatypes.

    Returns ``None`` for datatypes compared lexically and raises ``ValueError``
    when the lexical form is invalid for its declared datatype.
    """
    if datatype in NUMERIC_TYPES:
        if datatype == XSD_INTEGER:
            if not _INTEGER_RE.match(lexical):
                raise ValueError(f"invalid xsd:integer {lexical!r}")
            return ("numeric", int(lexical))
        if datatype == XSD_DECIMAL:
            if not _DECIMAL_RE.match(lexical):
                raise ValueError(f"invalid xsd:decimal {lexical!r}")
            return ("numeric", Decimal(lexical))
        if not _DOUBLE_RE.match(lexical):
            raise ValueError(f"invalid {datatype.rsplit('#', 1)[-1]} {lexical!r}")
        return ("numeric", float(lexical.replace("INF", "inf")))
    if datatype == XSD_DATE:
        m = _DATE_RE.match(lexical)
        if not m:
            raise ValueError(f"invalid xsd:date {lexical!r}")
        try:
            value = _dt.date(int(m[1]), int(m[2]), int(m[3]))
        except ValueError as exc:
            raise ValueError(f"invalid xsd:date {lexical!r}") from exc
        return ("date", value)
    if datatype == XSD_DATETIME:
        m = _DATETIME_RE.match(lexical)
        if not m:
            raise ValueError(f"invalid xsd:dateTime {lexical!r}")
        try:
            micro = int((m[7] or ".0")[1:7].ljust(6, "0"))
            value = _dt.datetime(int(m[1]), int(m[2]), int(m[3]), int(m[4]), int(m[5]), int(m[6]), micro)
        except ValueError as exc:
            raise ValueError(f"invalid xsd:dateTime {lexical!r}") from exc
        return ("dateTime", value - _offset(m[8]))
    return None


def is_valid_lexical(lexical: str, datatype: str) -> bool:
    try:
        literal_value(lexical, datatype)
    except ValueError:
        return False
    if datatype == XSD_BOOLEAN:
        return lexical in _BOOLEAN_VALUES
    return True


def typed_key(term: Term):
    """``(category, value)`` of a literal term, or ``None`` if it has no value order.

    Invalid lexical forms raise ``ValueError``.
    """
    if term.kind != LITERAL_KIND:
        return None
    return literal_value(term.value, term.datatype)


# --- IRIs and prefixes ----------------------------------------------------

_SAFE_LOCAL = re.compile(r"[A-Za-z_][\w\-]*\Z")


def compact_iri(iri: str, prefixes: dict[str, str]) -> str | None:
    best = None
    for prefix, ns in prefixes.items():
        if iri.startswith(ns) and (best is None or len(ns) > len(prefixes[best])):
            local = iri[len(ns):]
            if local == "" or _SAFE_LOCAL.match(local):
                best = prefix
    if best is None:
        return None
    return f"{best}:{iri[len(prefixes[best]):]}"


def expand_curie(text: str, prefixes: dict[str, str]) -> str:
    """Expand ``prefix:local`` (or ``<iri>``/absolute IRI) to a full IRI string."""
    if text.startswith("<") and text.endswith(">"):
        return text[1:-1]
    prefix, sep, local = text.partition(":")
    if sep and prefix in prefixes:
        return prefixes[prefix] + local
    if sep and (local.startswith("//") or prefix in ("urn", "mailto", "tag")):
        return text
    if not sep and "" in prefixes:
        return prefixes[""] + text
    raise KeyError(f"unknown prefix in {text!r}")


# --- strings --------------------------------------------------------------

_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}
_ESCAPE_RE = re.compile(r"\\(?:u([0-9A-Fa-f]{4})|U([0-9A-Fa-f]{8})|(.))", re.S)


def unescape_string(text: str) -> str:
    if "\\" not in text:
        return text

    def repl(m: re.Match) -> str:
        if m[1] or m[2]:
            return chr(int(m[1] or m[2], 16))
        if m[3] in _ESCAPES:
            return _ESCAPES[m[3]]
        raise ValueError(f"invalid escape \\{m[3]}")

    return _ESCAPE_RE.sub(repl, text)


_TO_ESCAPE = re.compile(r'[\\"\n\r\t]')
_ESCAPED = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def split_lines(text: str) -> list[str]:
    """Split on line feeds only; ``str.splitlines`` also breaks on U+0085 and U+2028."""
    return text.split("\n")


def escape_string(text: str) -> str:
    return _TO_ESCAPE.sub(lambda m: _ESCAPED[m[0]], text)


# --- triple sets ----------------------------------------------------------


class TripleSet:
    """A set of triples plus the prefix table it was written with.

    Equality ignores prefixes: two sets are equal when they hold the same
    fully expanded triples.
    """

    def __init__(self, triples: Iterable[Triple] = (), prefixes: dict[str, str] | None = None):
        self.triples: set[Triple] = set(triples)
        self.prefixes: dict[str, str] = dict(prefixes or {})

    def add(self, triple: Triple) -> None:
        s, p, _ = triple
        if s.kind == LITERAL_KIND:
            raise ValueError("literal in subject position")
        if p.kind != IRI_KIND:
            raise ValueError("predicate must be an IRI")
        self.triples.add(triple)

    def update(self, triples: Iterable[Triple]) -> None:
        for t in triples:
            self.add(t)

    def sorted(self) -> list[Triple]:
        return sorted(self.triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple: object) -> bool:
        return triple in self.triples

    def __eq__(self, other: object) -> bool:
        if isinstance(other, TripleSet):
            return self.triples == other.triples
        return NotImplemented

    def __repr__(self) -> str:
        return f"TripleSet({len(self.triples)} triples)"


class RDFSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


# --- Turtle subset --------------------------------------------------------

_TURTLE_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*>)
  | (?P<long>\"\"\"(?:[^"\\]|\\.|"(?!""))*\"\"\"|'''(?:[^'\\]|\\.|'(?!''))*''')
  | (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<directive>@prefix\b|@base\b)
  | (?P<lang>@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)
  | (?P<dtmark>\^\^)
  | (?P<blank>_:[A-Za-z0-9_](?:[\w.\-]*[\w\-])?)
  | (?P<number>[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+))
  | (?P<pname>(?:[A-Za-z](?:[\w.\-]*[\w\-])?)?:(?:[\w:%\-](?:[\w.:%\-]*[\w:%\-])?)?)
  | (?P<word>[A-Za-z]+)
  | (?P<punct>[.;,\[\]()])
    """,
    re.X | re.S,
)

_blank_imports = itertools.count(1)


class _Cursor:
    def __init__(self, text: str, token_re: re.Pattern):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        self.i = 0
        self._line_starts = [0] + [m.end() for m in re.finditer("\n", text)]
        pos = 0
        n = len(text)
        while pos < n:
            m = token_re.match(text, pos)
            if m is None:
                self.fail(f"unexpected character {text[pos]!r}", pos)
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), pos))
            pos = m.end()

    def where(self, pos: int) -> tuple[int, int]:
        line = bisect.bisect_right(self._line_starts, pos)
        return line, pos - self._line_starts[line - 1] + 1

    def fail(self, message: str, pos: int | None = None):
        if pos is None:
            pos = self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.text)
        line, col = self.where(pos)
        raise RDFSyntaxError(message, line, col)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self, what: str = "token"):
        if self.i >= len(self.tokens):
            self.fail(f"unexpected end of input, expected {what}")
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.next(repr(value))
        if tok[1] != value:
            self.i -= 1
            self.fail(f"expected {value!r}, found {tok[1]!r}")
        return tok


def _literal_from_number(text: str) -> Term:
    if re.fullmatch(r"[+-]?\d+", text):
        return Term(LITERAL_KIND, text, XSD_INTEGER)
    if "e" in text or "E" in text:
        return Term(LITERAL_KIND, text, XSD_DOUBLE)
    return Term(LITERAL_KIND, text, XSD_DECIMAL)


class _TurtleParser:
    def __init__(self, text: str, prefixes: dict[str, str] | None, base: str | None, blank_suffix: str):
        self.cur = _Cursor(text, _TURTLE_TOKEN)
        self.prefixes = dict(prefixes or {})
        self.base = base
        self.blank_suffix = blank_suffix
        self.out = TripleSet(prefixes=self.prefixes)

    def parse(self) -> TripleSet:
        cur = self.cur
        while cur.peek() is not None:
            kind, value, _ = cur.peek()
            if kind == "directive":
                cur.next()
                if value == "@prefix":
                    self._prefix_decl()
                else:
                    self._base_decl()
                cur.expect(".")
            elif kind == "word" and value.upper() in ("PREFIX", "BASE"):
                cur.next()
                if value.upper() == "PREFIX":
                    self._prefix_decl()
                else:
                    self._base_decl()
            else:
                self._statement()
        self.out.prefixes = self.prefixes
        return self.out

    def _prefix_decl(self) -> None:
        kind, value, pos = self.cur.next("prefix name")
        if kind != "pname" or not value.endswith(":") or value.count(":") != 1:
            self.cur.fail(f"malformed prefix name {value!r}", pos)
        iri = self._iri_token(self.cur.next("IRI"))
        self.prefixes[value[:-1]] = iri

    def _base_decl(self) -> None:
        self.base = self._iri_token(self.cur.next("IRI"))

    def _iri_token(self, tok) -> str:
        kind, value, pos = tok
        if kind == "iri":
            raw = unescape_string(value[1:-1])
            if _SCHEME.match(raw):
                return raw
            if self.base is None:
                self.cur.fail(f"relative IRI <{raw}> with no base", pos)
            return urljoin(self.base, raw)
        if kind == "pname":
            prefix, _, local = value.partition(":")
            if prefix not in self.prefixes:
                self.cur.fail(f"unknown prefix {prefix + ':'!r}", pos)
            return self.prefixes[prefix] + local
        self.cur.fail(f"expected IRI, found {value!r}", pos)

    def _statement(self) -> None:
        subject = self._subject()
        self._predicate_object_list(subject)
        self.cur.expect(".")

    def _subject(self) -> Term:
        tok = self.cur.next("subject")
        kind, value, pos = tok
        if kind in ("iri", "pname"):
            return Term(IRI_KIND, self._iri_token(tok))
        if kind == "blank":
            return Term(BLANK_KIND, value[2:] + self.blank_suffix)
        if value in ("[", "("):
            self.cur.fail("blank node property lists and collections are not supported", pos)
        self.cur.fail(f"expected subject, found {value!r}", pos)

    def _predicate_object_list(self, subject: Term) -> None:
        while True:
            tok = self.cur.next("predicate")
            kind, value, pos = tok
            if kind == "word" and value == "a":
                predicate = Term(IRI_KIND, RDF_TYPE)
            elif kind in ("iri", "pname"):
                predicate = Term(IRI_KIND, self._iri_token(tok))
            else:
                self.cur.fail(f"expected predicate, found {value!r}", pos)
            while True:
                self.out.triples.add(Triple(subject, predicate, self._object()))
                nxt = self.cur.peek()
                if nxt is not None and nxt[1] == ",":
                    self.cur.next()
                    continue
                break
            nxt = self.cur.peek()
            if nxt is not None and nxt[1] == ";":
                while self.cur.peek() is not None and self.cur.peek()[1] == ";":
                    self.cur.next()
                if self.cur.peek() is not None and self.cur.peek()[1] == ".":
                    return
                continue
            return

    def _object(self) -> Term:
        tok = self.cur.next("object")
        kind, value, pos = tok
        if kind in ("iri", "pname"):
            return Term(IRI_KIND, self._iri_token(tok))
        if kind == "blank":
            return Term(BLANK_KIND, value[2:] + self.blank_suffix)
        if kind in ("string", "long"):
            quote = 3 if kind == "long" else 1
            try:
                lexical = unescape_string(value[quote:-quote])
            except ValueError as exc:
                self.cur.fail(str(exc), pos)
            nxt = self.cur.peek()
            if nxt is not None and nxt[0] == "lang":
                self.cur.next()
                return Term(LITERAL_KIND, lexical, RDF_LANGSTRING, nxt[1][1:].lower())
            if nxt is not None and nxt[0] == "dtmark":
                self.cur.next()
                return Term(LITERAL_KIND, lexical, self._iri_token(self.cur.next("datatype IRI")))
            return Term(LITERAL_KIND, lexical, XSD_STRING)
        if kind == "number":
            return _literal_from_number(value)
        if kind == "word" and value in ("true", "false"):
            return Term(LITERAL_KIND, value, XSD_BOOLEAN)
        if value in ("[", "("):
            self.cur.fail("blank node property lists and collections are not supported", pos)
        self.cur.fail(f"expected object, found {value!r}", pos)


# --- N-Triples ------------------------------------------------------------

_NT_TERM = r'<[^<>"{}|^`\\\x00-\x20]*>|_:[A-Za-z0-9_](?:[\w.\-]*[\w\-])?'
_NT_LITERAL = r'"(?:[^"\\\n\r]|\\.)*"(?:\^\^<[^<>"{}|^`\\\x00-\x20]*>|@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*)?'
_NT_LINE = re.compile(
    rf"[ \t]*({_NT_TERM})[ \t]+(<[^<>\"{{}}|^`\\\x00-\x20]*>)[ \t]+({_NT_TERM}|{_NT_LITERAL})[ \t]*\.[ \t]*(?:#.*)?\Z"
)
_NT_BLANK_LINE = re.compile(r"[ \t]*(?:#.*)?\Z")


def _nt_term(text: str, blank_suffix: str) -> Term:
    c = text[0]
    if c == "<":
        value = text[1:-1]
        if not _SCHEME.match(value):
            raise ValueError(f"relative IRI <{value}> with no base")
        return Term(IRI_KIND, value)
    if c == "_":
        return Term(BLANK_KIND, text[2:] + blank_suffix)
    end = text.rindex('"')
    lexical = unescape_string(text[1:end])
    rest = text[end + 1:]
    if rest.startswith("@"):
        return Term(LITERAL_KIND, lexical, RDF_LANGSTRING, rest[1:].lower())
    if rest.startswith("^^"):
        return Term(LITERAL_KIND, lexical, rest[3:-1])
    return Term(LITERAL_KIND, lexical, XSD_STRING)


def iter_ntriples(lines: Iterable[str], blank_suffix: str = "") -> Iterator[Triple]:
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        m = _NT_LINE.match(line)
        if m is None:
            if _NT_BLANK_LINE.match(line):
                continue
            raise RDFSyntaxError("malformed N-Triples statement", lineno, 1)
        try:
            yield Triple(_nt_term(m[1], blank_suffix), Term(IRI_KIND, m[2][1:-1]), _nt_term(m[3], blank_suffix))
        except ValueError as exc:
            raise RDFSyntaxError(str(exc), lineno, 1) from None


# --- public API -----------------------------------------------------------


def parse_document(
    text: str,
    format: str = "turtle",
    *,
    prefixes: dict[str, str] | None = None,
    base: str | None = None,
    rename_blanks: bool = False,
) -> TripleSet:
    """Parse a Turtle-subset or N-Triples document into a :class:`TripleSet`.

    ``rename_blanks`` appends a per-import suffix to every blank node label so
    that separately imported documents never share blank nodes.
    """
    suffix = f"_i{next(_blank_imports)}" if rename_blanks else ""
    if format in ("ntriples", "nt"):
        return TripleSet(iter_ntriples(split_lines(text), suffix))
    if format not in ("turtle", "ttl", "turtle-subset"):
        raise ValueError(f"unknown format {format!r}")
    return _TurtleParser(text, prefixes, base, suffix).parse()


def serialize(data: TripleSet, format: str = "ntriples") -> str:
    if format in ("ntriples", "nt"):
        return "".join(t.n3() + "\n" for t in data.sorted())
    if format not in ("turtle", "ttl", "turtle-subset"):
        raise ValueError(f"unknown format {format!r}")
    prefixes = data.prefixes
    lines = [f"@prefix {p}: <{ns}> ." for p, ns in sorted(prefixes.items())]
    if lines:
        lines.append("")
    for subject, group in itertools.groupby(data.sorted(), key=lambda t: t.subject):
        chunks = []
        for predicate, pgroup in itertools.groupby(group, key=lambda t: t.predicate):
            pred = "a" if predicate.value == RDF_TYPE else predicate.n3(prefixes)
            objects = ", ".join(t.object.n3(prefixes) for t in pgroup)
            chunks.append(f"{pred} {objects}")
        lines.append(subject.n3(prefixes) + " " + " ;\n    ".join(chunks) + " .")
    return "\n".join(lines) + ("\n" if lines else "")
