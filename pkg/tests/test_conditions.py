from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from dataguard.conditions import (
    KEYWORDS,
    And,
    AttrClass,
    Const,
    Not,
    Or,
    Predicate,
    conjunctive_consents,
    consents,
    negate,
    parse_condition,
    parse_element_condition,
    render_condition,
)
from dataguard.errors import CatalogError, ParseError


def consent(name):
    return Predicate(name, "=", (True,))


class TestParse:
    def test_bare_attribute_is_true_test(self):
        assert parse_condition("consent1") == consent("consent1")

    def test_precedence(self):
        c = parse_condition("a OR b AND NOT c")
        assert c == Or((consent("a"), And((consent("b"), Not(consent("c"))))))

    def test_flattening(self):
        assert parse_condition("a AND (b AND c)") == And((consent("a"), consent("b"), consent("c")))

    def test_predicate_forms(self):
        c = parse_condition("x BETWEEN 1 AND 2 AND y NOT IN ('a', 'b') AND z IS NOT NULL AND w <> -1.5")
        assert c.items == (
            Predicate("x", "BETWEEN", (1, 2)),
            Not(Predicate("y", "IN", ("a", "b"))),
            Not(Predicate("z", "IS NULL")),
            Predicate("w", "!=", (-1.5,)),
        )

    def test_keywords_case_insensitive(self):
        assert parse_condition("a and not b") == parse_condition("a AND NOT b")

    def test_string_escape(self):
        assert parse_condition("x = 'it''s'") == Predicate("x", "=", ("it's",))

    def test_registry_classifies(self):
        c = parse_condition("c1 AND region = 'EU'", registry={"c1": "consent", "region": "accessor"})
        assert [p.attr_class for p in c.items] == [AttrClass.CONSENT, AttrClass.ACCESSOR]
        with pytest.raises(CatalogError):
            parse_condition("unknown", registry={"c1": "consent"})

    def test_error_position(self):
        with pytest.raises(ParseError) as exc:
            parse_condition("a AND AND b")
        assert exc.value.position == 6
        assert "attribute name" in exc.value.expected

    @pytest.mark.parametrize("text", ["", "a AND", "(a", "a = ", "x LIKE 3", "a b"])
    def test_rejects(self, text):
        with pytest.raises(ParseError):
            parse_condition(text)

    def test_element_condition(self):
        assert parse_element_condition("@.field31='s1'") == Predicate("field31", "=", ("s1",), AttrClass.DATA)
        assert parse_element_condition("@ > 3") == Predicate("@", ">", (3,), AttrClass.DATA)
        with pytest.raises(ParseError):
            parse_element_condition("field31='s1'")


class TestInspection:
    def test_consents_ignore_other_classes(self):
        c = parse_condition("c1 AND region = 'EU'", registry={"c1": "consent", "region": "accessor"})
        assert consents(c) == {"c1"}

    @pytest.mark.parametrize(
        "text, expected",
        [
            ("c1", {"c1"}),
            ("c1 AND c2", {"c1", "c2"}),
            ("c1 != false", {"c1"}),
            ("c1 OR c2", None),
            ("NOT c1", None),
            ("c1 = false", None),
            ("TRUE", None),
        ],
    )
    def test_conjunctive_consents(self, text, expected):
        got = conjunctive_consents(parse_condition(text))
        assert got == (frozenset(expected) if expected is not None else None)

    def test_negate(self):
        assert negate(Const(True)) == Const(False)
        assert negate(Not(consent("a"))) == consent("a")
        assert negate(consent("a")) == Not(consent("a"))


# ---------------------------------------------------------------------------
# Round trip over generated trees

names = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,6}", fullmatch=True).filter(lambda s: s.upper() not in KEYWORDS)
scalars = st.one_of(
    st.integers(-10**6, 10**6),
    st.floats(allow_nan=False, allow_infinity=False, width=64),
    st.text(max_size=6),
    st.booleans(),
)


@st.composite
def predicate_st(draw, element=False):
    if element:
        attr = draw(st.one_of(st.just("@"), names))
        cls = AttrClass.DATA
    else:
        attr = draw(names)
        cls = AttrClass.CONSENT
    op = draw(st.sampled_from(["=", "!=", "<", ">", "<=", ">=", "BETWEEN", "IN", "LIKE", "IS NULL"]))
    if op == "BETWEEN":
        values = (draw(scalars), draw(scalars))
    elif op == "IN":
        values = tuple(draw(st.lists(scalars, min_size=1, max_size=3)))
    elif op == "LIKE":
        values = (draw(st.text(max_size=5)),)
    elif op == "IS NULL":
        values = ()
    else:
        values = (draw(scalars),)
    return Predicate(attr, op, values, cls)


def _normalize(c):
    """Flatten nested And/Or the way the parser does."""
    if isinstance(c, (And, Or)):
        items = []
        for item in (_normalize(i) for i in c.items):
            items.extend(item.items if type(item) is type(c) else [item])
        return type(c)(tuple(items))
    if isinstance(c, Not):
        return Not(_normalize(c.item))
    return c


def condition_st(element=False):
    leaves = st.one_of(predicate_st(element), st.booleans().map(Const))
    return st.recursive(
        leaves,
        lambda inner: st.one_of(
            inner.map(Not),
            st.lists(inner, min_size=2, max_size=3).map(lambda xs: And(tuple(xs))),
            st.lists(inner, min_size=2, max_size=3).map(lambda xs: Or(tuple(xs))),
        ),
        max_leaves=8,
    )


class TestRoundTrip:
    @given(condition_st())
    @settings(max_examples=300, deadline=None)
    def test_condition(self, cond):
        text = render_condition(cond)
        assert parse_condition(text) == _normalize(cond)

    @given(condition_st(element=True))
    @settings(max_examples=300, deadline=None)
    def test_element_condition(self, cond):
        assert parse_element_condition(render_condition(cond)) == _normalize(cond)

    @given(condition_st())
    @settings(max_examples=100, deadline=None)
    def test_render_is_canonical(self, cond):
        text = render_condition(parse_condition(render_condition(cond)))
        assert render_condition(parse_condition(text)) == text
