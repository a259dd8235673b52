"""ClassAd-style ads, expressions and symmetric matchmaking."""

from .ads import (
    EXPR_PREFIX,
    Ad,
    AdError,
    AdKind,
    load_ad,
    rank_score,
    requirement_value,
    select_best,
    symmetric_match,
)
from .expr import (
    UNDEFINED,
    AttrRef,
    Binary,
    Expression,
    ExpressionSyntaxError,
    Literal,
    Unary,
    UnknownOperator,
    evaluate,
    parse_expression,
    to_text,
)

__all__ = [
    "Ad", "AdError", "AdKind", "AttrRef", "Binary", "EXPR_PREFIX", "Expression",
    "ExpressionSyntaxError", "Literal", "UNDEFINED", "Unary", "UnknownOperator", "evaluate",
    "load_ad", "parse_expression", "rank_score", "requirement_value", "select_best", "symmetric_match", "to_text",
]
