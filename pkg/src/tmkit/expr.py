"""Integer expressions, guards and assignments attached to stages and flows.

Unqualified names refer to an attribute of the token being handled.  A name
qualified by a thing type (``pending_count.value``) refers to the shared
store of that thing type, which lets a stage keep counters across tokens.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Union

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")

_COMPARE = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Ref:
    name: str
    thing: Optional[str] = None  # set for store references

    @property
    def text(self) -> str:
        return f"{self.thing}.{self.name}" if self.thing else self.name


@dataclass(frozen=True)
class BinOp:
    op: str  # "+" or "-"
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Ref, BinOp]


@dataclass(frozen=True)
class Compare:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Conjunction:
    terms: tuple[Compare, ...]


Predicate = Union[Compare, Conjunction]


@dataclass(frozen=True)
class Assign:
    target: Ref
    value: Expr


Lookup = Callable[[Ref], int]


class EvaluationError(Exception):
    """An expression named an attribute the token or store does not carry."""


def evaluate(expr: Expr, lookup: Lookup) -> int:
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Ref):
        return lookup(expr)
    left = evaluate(expr.left, lookup)
    right = evaluate(expr.right, lookup)
    return left + right if expr.op == "+" else left - right


def holds(pred: Optional[Predicate], lookup: Lookup) -> bool:
    if pred is None:
        return True
    return all(_COMPARE[c.op](evaluate(c.left, lookup), evaluate(c.right, lookup))
               for c in comparisons(pred))


def comparisons(pred: Predicate) -> tuple[Compare, ...]:
    return pred.terms if isinstance(pred, Conjunction) else (pred,)


def conjoin(*preds: Optional[Predicate]) -> Optional[Predicate]:
    """Flatten the given guards into one predicate; ``None`` means always true."""
    terms: list[Compare] = []
    for p in preds:
        if p is not None:
            terms.extend(comparisons(p))
    if not terms:
        return None
    if len(terms) == 1:
        return terms[0]
    return Conjunction(tuple(terms))


def refs(node: Union[Expr, Predicate, Assign, None]) -> Iterator[Ref]:
    """Yield every attribute reference in ``node``, targets included."""
    if node is None or isinstance(node, Num):
        return
    if isinstance(node, Ref):
        yield node
    elif isinstance(node, BinOp):
        yield from refs(node.left)
        yield from refs(node.right)
    elif isinstance(node, Compare):
        yield from refs(node.left)
        yield from refs(node.right)
    elif isinstance(node, Conjunction):
        for term in node.terms:
            yield from refs(term)
    elif isinstance(node, Assign):
        yield node.target
        yield from refs(node.value)


def format_expr(expr: Expr) -> str:
    if isinstance(expr, Num):
        return str(expr.value)
    if isinstance(expr, Ref):
        return expr.text
    right = format_expr(expr.right)
    # left-associative: a right operand that is itself a sum needs parentheses
    if isinstance(expr.right, BinOp):
        right = f"({right})"
    return f"{format_expr(expr.left)} {expr.op} {right}"


def format_predicate(pred: Predicate) -> str:
    return " and ".join(
        f"{format_expr(c.left)} {c.op} {format_expr(c.right)}" for c in comparisons(pred)
    )


def format_assign(assign: Assign) -> str:
    return f"{assign.target.text} := {format_expr(assign.value)}"
