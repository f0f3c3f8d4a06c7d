from .ast import And, Call, Compare, Not, Or, Query, TriplePattern, Var, format_query
from .filters import FilterError, compare, eval_filter
from .parser import QuerySyntaxError, UnsupportedFeature, parse_query
from .reference import ResultSet, eval_reference

__all__ = [
    "And",
    "Call",
    "Compare",
    "FilterError",
    "Not",
    "Or",
    "Query",
    "QuerySyntaxError",
    "ResultSet",
    "TriplePattern",
    "UnsupportedFeature",
    "Var",
    "compare",
    "eval_filter",
    "eval_reference",
    "format_query",
    "parse_query",
]
