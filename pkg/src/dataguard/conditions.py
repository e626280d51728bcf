"""Policy condition language.

A condition is a boolean tree of ``AND``/``OR``/``NOT`` over simple
predicates ``x op y``. The same grammar is used inside field-path filters,
where attributes are written ``@.name`` (or ``@`` for the current atomic
element) instead of bare identifiers.

Grammar (keywords are case-insensitive, ``NOT`` binds tighter than ``AND``,
which binds tighter than ``OR``)::

    expr      := and_expr ("OR" and_expr)*
    and_expr  := not_expr ("AND" not_expr)*
    not_expr  := "NOT" not_expr | primary
    primary   := "(" expr ")" | TRUE | FALSE | predicate
    predicate := attr [ cmp literal
                      | ["NOT"] "BETWEEN" literal "AND" literal
                      | ["NOT"] "IN" "(" literal ("," literal)* ")"
                      | ["NOT"] "LIKE" string
                      | "IS" ["NOT"] "NULL" ]

A bare attribute is shorthand for ``attr = true``.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

from .errors import CatalogError, ParseError

KEYWORDS = frozenset({"AND", "OR", "NOT", "BETWEEN", "IN", "LIKE", "IS", "NULL", "TRUE", "FALSE"})
COMPARISONS = ("=", "!=", "<", ">", "<=", ">=")
SELF = "@"

_OP_ALIASES = {"<>": "!=", "≠": "!=", "≤": "<=", "≥": ">="}


class AttrClass(enum.Enum):
    CONSENT = "consent"
    ACCESSOR = "accessor"
    SYSTEM = "system"
    DATA = "data"


@dataclass(frozen=True)
class Predicate:
    attribute: str
    op: str
    values: tuple = ()
    attr_class: AttrClass = AttrClass.CONSENT

    def __post_init__(self):
        if self.op in COMPARISONS or self.op == "LIKE":
            n = 1
        elif self.op == "BETWEEN":
            n = 2
        elif self.op == "IS NULL":
            n = 0
        elif self.op == "IN":
            if not self.values:
                raise ValueError("IN needs at least one literal")
            return
        else:
            raise ValueError(f"unknown operator {self.op!r}")
        if len(self.values) != n:
            raise ValueError(f"{self.op} takes {n} literal(s), got {len(self.values)}")


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    item: object


@dataclass(frozen=True)
class Const:
    value: bool


Condition = Union[Predicate, And, Or, Not, Const]

TRUE = Const(True)
FALSE = Const(False)


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|<>|!=|=|<|>|≠|≤|≥)
  | (?P<punct>[$@.\[\]()?,\-])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # string | number | name | op | punct | end
    text: str
    pos: int

    @property
    def upper(self) -> str:
        return self.text.upper()


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos] == "'":
                raise ParseError("unterminated string literal", text, pos, "closing quote")
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(kind), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class TokenStream:
    """Cursor over a token list with the small helpers both parsers need."""

    def __init__(self, text: str, tokens: list[Token] | None = None, pos: int = 0):
        self.text = text
        self.tokens = tokens if tokens is not None else tokenize(text)
        self.i = pos

    @property
    def current(self) -> Token:
        return self.tokens[self.i]

    def peek(self, offset: int = 0) -> Token:
        j = min(self.i + offset, len(self.tokens) - 1)
        return self.tokens[j]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def at(self, text: str, kind: str | None = None) -> bool:
        tok = self.current
        if kind is not None and tok.kind != kind:
            return False
        return tok.text == text if tok.kind in ("punct", "op") else tok.upper == text.upper()

    def at_keyword(self, *words: str) -> bool:
        tok = self.current
        return tok.kind == "name" and tok.upper in words

    def expect(self, text: str, description: str | None = None) -> Token:
        if not self.at(text):
            self.fail(f"unexpected {self.describe(self.current)}", description or repr(text))
        return self.advance()

    def fail(self, message: str, expected: str = ""):
        raise ParseError(message, self.text, self.current.pos, expected)

    @staticmethod
    def describe(tok: Token) -> str:
        return "end of input" if tok.kind == "end" else repr(tok.text)


# ---------------------------------------------------------------------------
# Parser


class _ConditionParser:
    def __init__(self, stream: TokenStream, element: bool, classify: Callable[[str], AttrClass]):
        self.s = stream
        self.element = element
        self.classify = classify

    def parse_expr(self):
        items = [self.parse_and()]
        while self.s.at_keyword("OR"):
            self.s.advance()
            items.append(self.parse_and())
        return _flatten(Or, items)

    def parse_and(self):
        items = [self.parse_not()]
        while self.s.at_keyword("AND"):
            self.s.advance()
            items.append(self.parse_not())
        return _flatten(And, items)

    def parse_not(self):
        if self.s.at_keyword("NOT"):
            self.s.advance()
            return Not(self.parse_not())
        return self.parse_primary()

    def parse_primary(self):
        s = self.s
        if s.at("(", "punct"):
            s.advance()
            inner = self.parse_expr()
            s.expect(")")
            return inner
        if s.at_keyword("TRUE", "FALSE"):
            return Const(s.advance().upper == "TRUE")
        attr, cls = self.parse_attribute()
        return self.parse_predicate_tail(attr, cls)

    def parse_attribute(self) -> tuple[str, AttrClass]:
        s = self.s
        if self.element:
            if not s.at("@", "punct"):
                s.fail(f"unexpected {s.describe(s.current)}", "'@' attribute reference")
            s.advance()
            if s.at(".", "punct"):
                s.advance()
                tok = s.current
                if tok.kind != "name" or tok.upper in KEYWORDS:
                    s.fail(f"unexpected {s.describe(tok)}", "attribute name")
                s.advance()
                return tok.text, AttrClass.DATA
            return SELF, AttrClass.DATA
        tok = s.current
        if tok.kind != "name" or tok.upper in KEYWORDS:
            s.fail(f"unexpected {s.describe(tok)}", "attribute name")
        s.advance()
        return tok.text, self.classify(tok.text)

    def parse_predicate_tail(self, attr: str, cls: AttrClass):
        s = self.s
        tok = s.current
        if tok.kind == "op":
            s.advance()
            op = _OP_ALIASES.get(tok.text, tok.text)
            return Predicate(attr, op, (self.parse_literal(),), cls)
        negate = False
        if s.at_keyword("NOT") and s.peek(1).kind == "name" and s.peek(1).upper in ("BETWEEN", "IN", "LIKE"):
            s.advance()
            negate = True
        if s.at_keyword("BETWEEN"):
            s.advance()
            lo = self.parse_literal()
            if not s.at_keyword("AND"):
                s.fail(f"unexpected {s.describe(s.current)}", "AND")
            s.advance()
            hi = self.parse_literal()
            pred = Predicate(attr, "BETWEEN", (lo, hi), cls)
        elif s.at_keyword("IN"):
            s.advance()
            s.expect("(")
            values = [self.parse_literal()]
            while s.at(",", "punct"):
                s.advance()
                values.append(self.parse_literal())
            s.expect(")")
            pred = Predicate(attr, "IN", tuple(values), cls)
        elif s.at_keyword("LIKE"):
            s.advance()
            lit = self.parse_literal()
            if not isinstance(lit, str):
                s.fail("LIKE pattern must be a string", "string literal")
            pred = Predicate(attr, "LIKE", (lit,), cls)
        elif s.at_keyword("IS"):
            s.advance()
            if s.at_keyword("NOT"):
                s.advance()
                negate = True
            if not s.at_keyword("NULL"):
                s.fail(f"unexpected {s.describe(s.current)}", "NULL")
            s.advance()
            pred = Predicate(attr, "IS NULL", (), cls)
        else:
            return Predicate(attr, "=", (True,), cls)
        return Not(pred) if negate else pred

    def parse_literal(self):
        s = self.s
        tok = s.current
        if tok.kind == "string":
            s.advance()
            return tok.text[1:-1].replace("''", "'")
        sign = 1
        if s.at("-", "punct"):
            s.advance()
            sign = -1
            tok = s.current
            if tok.kind != "number":
                s.fail(f"unexpected {s.describe(tok)}", "number")
        if tok.kind == "number":
            s.advance()
            if any(c in tok.text for c in ".eE"):
                return sign * float(tok.text)
            return sign * int(tok.text)
        if tok.kind == "name" and tok.upper in ("TRUE", "FALSE"):
            s.advance()
            return tok.upper == "TRUE"
        if tok.kind == "name" and tok.upper == "NULL":
            s.advance()
            return None
        s.fail(f"unexpected {s.describe(tok)}", "literal")


def _flatten(cls, items):
    if len(items) == 1:
        return items[0]
    out = []
    for item in items:
        if isinstance(item, cls):
            out.extend(item.items)
        else:
            out.append(item)
    return cls(tuple(out))


def _classifier(registry: Mapping[str, AttrClass | str] | None, default: AttrClass):
    if registry is None:
        return lambda name: default

    def classify(name: str) -> AttrClass:
        if name not in registry:
            raise CatalogError(f"attribute {name!r} is not declared in the attribute registry")
        return AttrClass(registry[name])

    return classify


def parse_condition(
    text: str,
    registry: Mapping[str, AttrClass | str] | None = None,
    default_class: AttrClass = AttrClass.CONSENT,
) -> Condition:
    """Parse a policy condition such as ``"consent3 AND consent4"``.

    Attributes are tagged from ``registry`` (name -> class) when given;
    otherwise every attribute gets ``default_class``.
    """
    if not text or not text.strip():
        raise ParseError("empty condition", text, 0, "condition")
    stream = TokenStream(text)
    cond = _ConditionParser(stream, element=False, classify=_classifier(registry, default_class)).parse_expr()
    if stream.current.kind != "end":
        stream.fail(f"unexpected {stream.describe(stream.current)}", "end of condition")
    return cond


def parse_filter_condition(stream: TokenStream) -> Condition:
    """Parse an ``@``-style condition from inside a field-path filter."""
    return _ConditionParser(stream, element=True, classify=lambda n: AttrClass.DATA).parse_expr()


def parse_element_condition(text: str) -> Condition:
    stream = TokenStream(text)
    cond = parse_filter_condition(stream)
    if stream.current.kind != "end":
        stream.fail(f"unexpected {stream.describe(stream.current)}", "end of condition")
    return cond


# ---------------------------------------------------------------------------
# Rendering


def render_literal(value) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _default_attr(pred: Predicate) -> str:
    if pred.attr_class is AttrClass.DATA:
        return SELF if pred.attribute == SELF else f"@.{pred.attribute}"
    return pred.attribute


def render_predicate(pred: Predicate, attr: str, literal=render_literal, spaced: bool = False) -> str:
    if pred.op in COMPARISONS:
        sep = " " if spaced else ""
        op = "<>" if spaced and pred.op == "!=" else pred.op
        return f"{attr}{sep}{op}{sep}{literal(pred.values[0])}"
    if pred.op == "BETWEEN":
        return f"{attr} BETWEEN {literal(pred.values[0])} AND {literal(pred.values[1])}"
    if pred.op == "IN":
        return f"{attr} IN (" + ", ".join(literal(v) for v in pred.values) + ")"
    if pred.op == "LIKE":
        return f"{attr} LIKE {literal(pred.values[0])}"
    return f"{attr} IS NULL"


_PREC = {Or: 1, And: 2, Not: 3}


def render_condition(
    cond: Condition,
    leaf: Callable[[Predicate], str] | None = None,
    spaced: bool = False,
) -> str:
    """Canonical text for ``cond``; ``leaf`` overrides how predicates render."""
    if leaf is None:
        def leaf(p):
            return render_predicate(p, _default_attr(p), spaced=spaced)

    def go(node, parent_prec: int) -> str:
        if isinstance(node, Predicate):
            return leaf(node)
        if isinstance(node, Const):
            return "TRUE" if node.value else "FALSE"
        prec = _PREC[type(node)]
        if isinstance(node, Not):
            text = "NOT " + go(node.item, prec)
        else:
            word = " AND " if isinstance(node, And) else " OR "
            text = word.join(go(item, prec) for item in node.items)
        # keyword predicates (BETWEEN ... AND ...) stay unambiguous because leaves never need parens
        return f"({text})" if prec <= parent_prec else text

    return go(cond, 0)


# ---------------------------------------------------------------------------
# Inspection


def walk(cond: Condition) -> Iterator[Condition]:
    yield cond
    if isinstance(cond, (And, Or)):
        for item in cond.items:
            yield from walk(item)
    elif isinstance(cond, Not):
        yield from walk(cond.item)


def predicates(cond: Condition) -> Iterator[Predicate]:
    return (node for node in walk(cond) if isinstance(node, Predicate))


def consents(cond: Condition) -> frozenset[str]:
    """Names of the data-subject consent attributes referenced by ``cond``."""
    return frozenset(p.attribute for p in predicates(cond) if p.attr_class is AttrClass.CONSENT)


def attributes(cond: Condition, attr_class: AttrClass | None = None) -> frozenset[str]:
    return frozenset(p.attribute for p in predicates(cond) if attr_class is None or p.attr_class is attr_class)


def is_positive_consent(pred: Predicate) -> bool:
    """``c = true`` or ``c != false`` on a consent attribute."""
    if pred.attr_class is not AttrClass.CONSENT or len(pred.values) != 1:
        return False
    value = pred.values[0]
    if not isinstance(value, bool):
        return False
    return (pred.op == "=" and value) or (pred.op == "!=" and not value)


def conjunctive_consents(cond: Condition) -> frozenset[str] | None:
    """Consent set when ``cond`` is a plain conjunction of granted consents, else None.

    Only such conditions mask exactly when at least one of their consents is
    withheld, which is what consent-set based redundancy elimination relies on.
    """
    if isinstance(cond, Predicate):
        return frozenset([cond.attribute]) if is_positive_consent(cond) else None
    if isinstance(cond, And):
        names = set()
        for item in cond.items:
            if not isinstance(item, Predicate) or not is_positive_consent(item):
                return None
            names.add(item.attribute)
        return frozenset(names)
    return None


def negate(cond: Condition) -> Condition:
    """Logical negation with trivial simplification of constants and double negation."""
    if isinstance(cond, Const):
        return Const(not cond.value)
    if isinstance(cond, Not):
        return cond.item
    return Not(cond)
