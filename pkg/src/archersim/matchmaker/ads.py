"""Attribute ads and two-sided requirements/rank matchmaking."""

from __future__ import annotations

import enum
import json
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Sequence

from .expr import (
    UNDEFINED,
    AttrRef,
    Binary,
    Expression,
    Literal,
    Unary,
    evaluate,
    format_value,
    parse_expression,
    to_text,
)

EXPR_PREFIX = "expr:"
_EXPR_TYPES = (Literal, AttrRef, Unary, Binary)


class AdKind(str, enum.Enum):
    RESOURCE = "resource"
    JOB = "job"


class AdError(ValueError):
    pass


class Ad(Mapping):
    """Ordered, case-insensitive attribute map.

    Values are plain literals (bool, int, float, str) or parsed expressions.
    Strings starting with ``expr:`` are parsed on the way in.
    """

    def __init__(self, attrs: Mapping[str, Any] | Iterable[tuple[str, Any]] = (), kind: AdKind | str = AdKind.RESOURCE):
        self.kind = AdKind(kind)
        self._data: dict[str, tuple[str, Any]] = {}
        items = attrs.items() if isinstance(attrs, Mapping) else attrs
        for name, value in items:
            key = name.lower()
            if key in self._data:
                raise AdError(f"duplicate attribute {name!r}")
            self._data[key] = (name, _coerce(name, value))
        if "requirements" not in self._data:
            if self.kind is AdKind.JOB:
                raise AdError("a job ad needs a requirements attribute")
            self._data["requirements"] = ("Requirements", Literal(True))

    def __getitem__(self, name: str):
        return self._data[name.lower()][1]

    def __contains__(self, name) -> bool:
        return isinstance(name, str) and name.lower() in self._data

    def __iter__(self) -> Iterator[str]:
        return (orig for orig, _ in self._data.values())

    def __len__(self) -> int:
        return len(self._data)

    def __repr__(self) -> str:
        return f"Ad({self.kind.value}, {self.to_json()})"

    def with_attrs(self, **updates) -> "Ad":
        merged = {orig: v for orig, v in self._data.values()}
        for k, v in updates.items():
            for existing in list(merged):
                if existing.lower() == k.lower():
                    del merged[existing]
            merged[k] = v
        return Ad(merged, self.kind)

    def to_json(self) -> dict:
        out = {}
        for orig, value in self._data.values():
            if isinstance(value, Literal):
                value = value.value
                if value is UNDEFINED:
                    out[orig] = EXPR_PREFIX + "undefined"
                    continue
            if isinstance(value, _EXPR_TYPES):
                out[orig] = EXPR_PREFIX + to_text(value)
            else:
                out[orig] = value
        return out


def _coerce(name: str, value: Any):
    if isinstance(value, _EXPR_TYPES):
        return value
    if isinstance(value, str) and value.startswith(EXPR_PREFIX):
        return parse_expression(value[len(EXPR_PREFIX):])
    if name.lower() in ("requirements", "rank") and isinstance(value, bool):
        return Literal(value)
    if isinstance(value, (bool, int, float, str)):
        return value
    raise AdError(f"attribute {name!r} has unsupported value {value!r}")


def load_ad(path: str | Path, kind: AdKind | str) -> Ad:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise AdError(f"{path}: ad file must hold a JSON object")
    return Ad(data, kind)


def _requirement(ad: Ad):
    req = ad["requirements"]
    return req if isinstance(req, _EXPR_TYPES) else Literal(req)


def requirement_value(ad: Ad, other: Ad):
    """``ad``'s requirements evaluated with ``my=ad`` and ``other=other``."""
    return evaluate(_requirement(ad), ad, other)


def symmetric_match(job: Ad, resource: Ad) -> bool:
    """Both sides' requirements must evaluate to literally ``true``."""
    if requirement_value(job, resource) is not True:
        return False
    return requirement_value(resource, job) is True


def rank_score(job: Ad, resource: Ad) -> float:
    if "rank" not in job:
        return 0.0
    rank = job["rank"]
    value = evaluate(rank, job, resource) if isinstance(rank, _EXPR_TYPES) else rank
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return 0.0
    return float(value)


def select_best(job: Ad, candidates: Sequence[tuple[int, Ad]]) -> Optional[tuple[int, Ad]]:
    """Highest-ranked matching candidate; equal rank goes to the smaller node id."""
    best = None
    best_key = None
    for node_id, ad in candidates:
        if not symmetric_match(job, ad):
            continue
        key = (-rank_score(job, ad), node_id)
        if best_key is None or key < best_key:
            best, best_key = (node_id, ad), key
    return best


def describe(expr: Expression | Any) -> str:
    return to_text(expr) if isinstance(expr, _EXPR_TYPES) else format_value(expr)
