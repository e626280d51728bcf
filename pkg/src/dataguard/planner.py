"""Schema tree construction and redundant-masking elimination.

Matched (path, policy) pairs are merged into a prefix tree of path
operators. A pre-order walk then drops policies whose masking is already
implied: either by a policy on an ancestor node, or by another policy on the
same node whose consents are a superset. Picking the fewest policies that
cover a node's new consents is a set-cover problem, solved greedily.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .conditions import conjunctive_consents
from .paths import ROOT, FieldPath, Operator
from .policy import Policy


@dataclass
class SchemaTreeNode:
    operator: Operator
    children: dict = field(default_factory=dict)
    policies: list[Policy] = field(default_factory=list)
    pruned: list[Policy] = field(default_factory=list)

    def child(self, op: Operator) -> SchemaTreeNode:
        node = self.children.get(op)
        if node is None:
            node = self.children[op] = SchemaTreeNode(op)
        return node

    def sorted_children(self) -> list[SchemaTreeNode]:
        return sorted(self.children.values(), key=lambda n: n.operator.render())

    def walk(self, prefix: tuple = ()) -> Iterator[tuple[FieldPath, SchemaTreeNode]]:
        """Pre-order (path, node) pairs."""
        path = prefix + (self.operator,)
        yield FieldPath(path), self
        for c in self.sorted_children():
            yield from c.walk(path)

    def pairs(self) -> list[tuple[FieldPath, Policy]]:
        """Retained (path, policy) pairs in pre-order."""
        return [(path, p) for path, node in self.walk() for p in node.policies]

    def pruned_pairs(self) -> list[tuple[FieldPath, Policy]]:
        return [(path, p) for path, node in self.walk() for p in node.pruned]

    def policy_map(self) -> dict[str, tuple[str, ...]]:
        """Path text -> retained policy ids, for nodes that carry policies."""
        return {str(path): tuple(p.id for p in node.policies) for path, node in self.walk() if node.policies}

    def node_count(self) -> int:
        return sum(1 for _ in self.walk())


def build_schema_tree(pairs: Iterable[tuple[FieldPath, Policy]]) -> SchemaTreeNode:
    root = SchemaTreeNode(ROOT)
    for path, policy in pairs:
        node = root
        for op in path.tail:
            node = node.child(op)
        if policy not in node.policies:
            node.policies.append(policy)
    return root


def _greedy_key(delta: frozenset[str]):
    # max overlap with the uncovered set, then larger consent set, then smaller id
    def key(item):
        policy, cs = item
        return (-len(cs & delta), -len(cs), policy.id)

    return key


def greedy_cover(candidates: list[tuple[Policy, frozenset[str]]], delta: frozenset[str]) -> list[Policy]:
    """Greedily pick policies until their consents cover ``delta``."""
    remaining = list(candidates)
    chosen = []
    delta = frozenset(delta)
    while delta:
        best = min(remaining, key=_greedy_key(delta))
        chosen.append(best[0])
        remaining.remove(best)
        delta = delta - best[1]
    return chosen


def prune_policies(root: SchemaTreeNode) -> SchemaTreeNode:
    """Return a copy of the tree with redundant policies moved to ``pruned``.

    Policies whose keep-condition is not a plain conjunction of consents are
    never pruned and never count as covering anything.
    """

    def visit(node: SchemaTreeNode, covered: frozenset[str]) -> SchemaTreeNode:
        comparable = []
        kept = []
        for p in node.policies:
            cs = conjunctive_consents(p.keep_condition)
            if cs is None:
                kept.append(p)
            else:
                comparable.append((p, cs))
        node_consents = frozenset().union(*(cs for _, cs in comparable))
        chosen = greedy_cover(comparable, node_consents - covered)
        chosen_ids = {id(p) for p in chosen}
        retained = [p for p in node.policies if id(p) in chosen_ids or p in kept]
        dropped = [p for p in node.policies if p not in retained]
        new_covered = covered.union(*(p_cs for p, p_cs in comparable if id(p) in chosen_ids))
        out = SchemaTreeNode(node.operator, policies=retained, pruned=list(node.pruned) + dropped)
        for op, c in node.children.items():
            out.children[op] = visit(c, new_covered)
        return out

    return visit(root, frozenset())


def plan_pairs(pairs: Iterable[tuple[FieldPath, Policy]]) -> tuple[list, list]:
    """Build, prune and flatten: returns (retained pairs, pruned pairs)."""
    tree = prune_policies(build_schema_tree(pairs))
    return tree.pairs(), tree.pruned_pairs()


def dump_tree(root: SchemaTreeNode) -> str:
    """Indented text rendering: one line per node with retained and pruned policy ids."""
    lines = []

    def go(node: SchemaTreeNode, depth: int):
        line = "  " * depth + node.operator.render()
        if node.policies:
            line += "  keep=[" + ", ".join(p.id for p in node.policies) + "]"
        if node.pruned:
            line += "  pruned=[" + ", ".join(p.id for p in node.pruned) + "]"
        lines.append(line)
        for c in node.sorted_children():
            go(c, depth + 1)

    go(root, 0)
    return "\n".join(lines) + "\n"
