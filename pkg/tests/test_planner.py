from __future__ import annotations

import itertools
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from dataguard.conditions import conjunctive_consents
from dataguard.paths import parse_field_path
from dataguard.planner import build_schema_tree, dump_tree, greedy_cover, plan_pairs, prune_policies
from dataguard.policy import make_policy, match_policies

from randgen import random_case

GOLDEN = Path(__file__).parent / "golden"


class TestTable1:
    def test_tree_before_pruning(self, pairs):
        assert dump_tree(build_schema_tree(pairs)) + "\n" == (GOLDEN / "dedup_tree.txt").read_text()

    def test_tree_after_pruning(self, pairs):
        assert dump_tree(prune_policies(build_schema_tree(pairs))) + "\n" == (GOLDEN / "dedup_tree_pruned.txt").read_text()

    def test_rows_retained(self, pairs):
        kept, dropped = plan_pairs(pairs)
        as_text = lambda ps: sorted((str(path), p.id) for path, p in ps)
        assert as_text(kept) == sorted([("$", "p1"), ("$.col3", "p2"), ("$.col4.[value]", "p3")])
        assert as_text(dropped) == sorted(
            [("$.col2.field21", "p1"), ("$.col3.[item].[?(@.field31='s1')]", "p2"), ("$.col4.[value]", "p4")]
        )


class TestExamples:
    def test_single_pair(self):
        p1 = make_policy("p1", "a", "L", "c1")
        tree = prune_policies(build_schema_tree([(parse_field_path("$"), p1)]))
        assert tree.policies == [p1] and not tree.children

    def test_identical_paths_share_node(self):
        p3, p4 = make_policy("p3", "a", "L", "c3 AND c4"), make_policy("p4", "a", "L", "c3")
        path = parse_field_path("$.col4.[value]")
        tree = build_schema_tree([(path, p3), (path, p4)])
        assert tree.node_count() == 3
        assert tree.policy_map() == {"$.col4.[value]": ("p3", "p4")}

    def test_child_subset_of_ancestor(self):
        outer = make_policy("o", "a", "L", "c1 AND c2")
        inner = make_policy("i", "a", "M", "c2")
        kept, dropped = plan_pairs([(parse_field_path("$.col2"), outer), (parse_field_path("$.col2.f"), inner)])
        assert [p.id for _, p in kept] == ["o"] and [p.id for _, p in dropped] == ["i"]

    def test_superset_on_same_node(self):
        p = make_policy("p", "a", "L", "c1 AND c2")
        q = make_policy("q", "a", "L", "c1")
        kept, _ = plan_pairs([(parse_field_path("$.x"), p), (parse_field_path("$.x"), q)])
        assert [pol.id for _, pol in kept] == ["p"]

    def test_non_conjunctive_never_pruned(self):
        outer = make_policy("o", "a", "L", "c1")
        inner = make_policy("i", "a", "M", "c1 OR c2")
        negated = make_policy("n", "a", "M", "NOT c1")
        kept, dropped = plan_pairs(
            [(parse_field_path("$"), outer), (parse_field_path("$.x"), inner), (parse_field_path("$.x"), negated)]
        )
        assert {p.id for _, p in kept} == {"o", "i", "n"} and not dropped

    def test_row_selector_does_not_cover_columns(self):
        sel = make_policy("s", "a", "L", "c1")
        col = make_policy("c", "a", "M", "c1")
        kept, _ = plan_pairs([(parse_field_path("$.[?(@.k=1)]"), sel), (parse_field_path("$.col2"), col)])
        assert {p.id for _, p in kept} == {"s", "c"}

    def test_tie_break(self):
        a = make_policy("a", "x", "L", "c1")
        b = make_policy("b", "x", "L", "c1")
        cands = [(b, frozenset({"c1"})), (a, frozenset({"c1"}))]
        assert greedy_cover(cands, frozenset({"c1"})) == [a]
        wide = make_policy("w", "x", "L", "c1 AND c9")
        cands.append((wide, frozenset({"c1", "c9"})))
        assert greedy_cover(cands, frozenset({"c1"})) == [wide]


def _nodes(tree):
    return {str(path): node for path, node in tree.walk()}


def _ancestor_paths(path_text, all_paths):
    return [p for p in all_paths if p != path_text and parse_field_path(p).is_prefix_of(parse_field_path(path_text))]


class TestProperties:
    @given(st.integers(0, 2**32))
    @settings(max_examples=200, deadline=None)
    def test_coverage_idempotence_safety(self, seed):
        case = random_case(seed, max_rows=0)
        pairs = match_policies(case.schema, case.assignments, case.catalog.effective("p"))
        before = build_schema_tree(pairs)
        after = prune_policies(before)
        bn, an = _nodes(before), _nodes(after)
        assert bn.keys() == an.keys()
        for path, node in an.items():
            # safety: nothing added, nothing moved
            assert {p.id for p in node.policies} | {p.id for p in node.pruned} == {p.id for p in bn[path].policies}
            # coverage: retained consents plus ancestor coverage cover the original consents
            covered = set()
            for anc in _ancestor_paths(path, an):
                for p in an[anc].policies:
                    cs = conjunctive_consents(p.keep_condition)
                    covered |= cs or set()
            retained = set().union(*(conjunctive_consents(p.keep_condition) or set() for p in node.policies))
            original = set().union(*(conjunctive_consents(p.keep_condition) or set() for p in bn[path].policies))
            assert original | covered <= retained | covered
            for p in node.pruned:
                assert conjunctive_consents(p.keep_condition) is not None
        again = prune_policies(after)
        assert again.pairs() == after.pairs()
        assert again.pruned_pairs() == after.pruned_pairs()


def harmonic(n: int) -> float:
    return sum(1 / k for k in range(1, n + 1))


def min_cover_size(sets: list[frozenset], delta: frozenset) -> int:
    for k in range(len(sets) + 1):
        for combo in itertools.combinations(sets, k):
            if delta <= frozenset().union(*combo):
                return k
    raise AssertionError("delta not coverable")


class TestGreedyQuality:
    @pytest.mark.parametrize("seed", range(30))
    def test_within_harmonic_bound(self, seed):
        rng = random.Random(seed)
        for _ in range(40):
            n = rng.randint(1, 10)
            universe = [f"c{i}" for i in range(rng.randint(1, 8))]
            cands = []
            for i in range(n):
                cs = frozenset(rng.sample(universe, rng.randint(1, len(universe))))
                cands.append((make_policy(f"p{i}", "a", "L", " AND ".join(sorted(cs))), cs))
            reachable = frozenset().union(*(cs for _, cs in cands))
            delta = frozenset(rng.sample(sorted(reachable), rng.randint(0, len(reachable))))
            chosen = greedy_cover(cands, delta)
            by_id = {p.id: cs for p, cs in cands}
            assert delta <= frozenset().union(*(by_id[p.id] for p in chosen)) if chosen else not delta
            opt = min_cover_size([cs for _, cs in cands], delta)
            assert opt <= len(chosen) <= harmonic(len(delta)) * opt + 1e-9
