"""FILTER semantics.

Expressions that hit an error (unbound variable, type mismatch, invalid
lexical form) raise :class:`FilterError`; a row whose filter errors is
excluded, exactly as if the filter were false.
"""
from __future__ import annotations

import operator
from typing import Callable, Mapping

from ..rdf import (
    BLANK_KIND,
    LITERAL_KIND,
    NUMERIC_TYPES,
    RDF_LANGSTRING,
    XSD_BOOLEAN,
    XSD_STRING,
    Term,
    typed_key,
)
from .ast import And, Call, Compare, Expr, Not, Or, Var

TRUE = Term(LITERAL_KIND, "true", XSD_BOOLEAN)
FALSE = Term(LITERAL_KIND, "false", XSD_BOOLEAN)

_OPS = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
}


class FilterError(Exception):
    """The SPARQL error value."""


def string_form(term: Term) -> str:
    """Lexical form used by STR() and by lexical comparison."""
    if term.kind == BLANK_KIND:
        raise FilterError("STR of a blank node")
    return term.value


def _key(term: Term):
    try:
        return typed_key(term)
    except ValueError as exc:
        raise FilterError(str(exc)) from None


def compare(op: str, a: Term, b: Term) -> bool:
    """Compare two terms.

    Values of the same ordered category (numeric, date, dateTime) compare by
    value.  Otherwise ``=``/``!=`` use term identity and the ordering
    operators fall back to the lexical form.
    """
    ka = _key(a)
    kb = _key(b)
    if ka is not None and kb is not None and ka[0] == kb[0]:
        return _OPS[op](ka[1], kb[1])
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    return _OPS[op](string_form(a), string_form(b))


def contains(haystack: Term, needle: Term) -> bool:
    for t in (haystack, needle):
        if t.kind != LITERAL_KIND or t.datatype not in (XSD_STRING, RDF_LANGSTRING):
            raise FilterError("CONTAINS requires string literal arguments")
    return needle.value in haystack.value


def ebv(term: Term) -> bool:
    """Effective boolean value."""
    if term.kind != LITERAL_KIND:
        raise FilterError("no effective boolean value for a non-literal")
    if term.datatype == XSD_BOOLEAN:
        if term.value in ("true", "1"):
            return True
        if term.value in ("false", "0"):
            return False
        raise FilterError("invalid boolean")
    if term.datatype in (XSD_STRING, RDF_LANGSTRING):
        return bool(term.value)
    if term.datatype in NUMERIC_TYPES:
        key = _key(term)
        return bool(key[1]) and key[1] == key[1]
    raise FilterError("no effective boolean value")


Accessor = Callable[[str], Callable]


def compile_expr(expr: Expr, accessor: Accessor) -> Callable:
    """Compile to ``fn(row) -> Term | bool``; raises FilterError on error values.

    ``accessor(name)`` returns a function fetching that variable from a row.
    """
    if isinstance(expr, Var):
        get = accessor(expr.name)

        def var(row):
            v = get(row)
            if v is None:
                raise FilterError(f"unbound variable ?{expr.name}")
            return v

        return var
    if isinstance(expr, Term):
        return lambda row: expr
    if isinstance(expr, Compare):
        left = _as_term(compile_expr(expr.left, accessor))
        right = _as_term(compile_expr(expr.right, accessor))
        op = expr.op
        return lambda row: compare(op, left(row), right(row))
    if isinstance(expr, Call):
        args = [_as_term(compile_expr(a, accessor)) for a in expr.args]
        if expr.name == "STR":
            (arg,) = args
            return lambda row: Term(LITERAL_KIND, string_form(arg(row)), XSD_STRING)
        if expr.name == "CONTAINS":
            hay, needle = args
            return lambda row: contains(hay(row), needle(row))
        raise FilterError(f"unknown function {expr.name}")
    if isinstance(expr, Not):
        arg = _as_bool(compile_expr(expr.arg, accessor))
        return lambda row: not arg(row)
    left = _as_bool(compile_expr(expr.left, accessor))
    right = _as_bool(compile_expr(expr.right, accessor))
    if isinstance(expr, And):
        return lambda row: _and(left, right, row)
    if isinstance(expr, Or):
        return lambda row: _or(left, right, row)
    raise TypeError(f"not an expression: {expr!r}")


def _as_term(fn):
    def wrapped(row):
        v = fn(row)
        if v is True:
            return TRUE
        if v is False:
            return FALSE
        return v

    return wrapped


def _as_bool(fn):
    def wrapped(row):
        v = fn(row)
        if v is True or v is False:
            return v
        return ebv(v)

    return wrapped


def _and(left, right, row) -> bool:
    try:
        lv = left(row)
    except FilterError:
        if right(row) is False:
            return False
        raise
    if not lv:
        return False
    return right(row)


def _or(left, right, row) -> bool:
    try:
        lv = left(row)
    except FilterError:
        if right(row) is True:
            return True
        raise
    if lv:
        return True
    return right(row)


def compile_filter(expr: Expr, accessor: Accessor) -> Callable[[object], bool]:
    """Compile a filter to a predicate that is False on error values."""
    fn = _as_bool(compile_expr(expr, accessor))

    def predicate(row) -> bool:
        try:
            return fn(row)
        except FilterError:
            return False

    return predicate


def row_accessor(index: Mapping[str, int]) -> Accessor:
    def accessor(name: str):
        i = index.get(name)
        if i is None:
            return lambda row: None
        return operator.itemgetter(i)

    return accessor


def binding_accessor(name: str):
    return lambda binding: binding.get(Var(name), binding.get(name))


def eval_filter(expr: Expr, binding: Mapping) -> bool:
    """Evaluate a filter over a binding (keys are :class:`Var` or names).

    Returns False when the expression evaluates to an error.
    """
    return compile_filter(expr, binding_accessor)(binding)


def eval_filter_strict(expr: Expr, binding: Mapping) -> bool:
    """Like :func:`eval_filter` but lets :class:`FilterError` propagate."""
    return _as_bool(compile_expr(expr, binding_accessor))(binding)


__all__ = [
    "FilterError",
    "compare",
    "contains",
    "compile_filter",
    "eval_filter",
    "eval_filter_strict",
    "row_accessor",
    "string_form",
]
