"""Transposition-collapsed search DAG.

Nodes are stored densely by integer id in insertion order.  With
``transpositions=False`` every insertion creates a fresh node, which turns
the structure into a plain search tree over the same states.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple


class Kind(enum.IntEnum):
    MAX = 1
    MIN = -1


class Status(enum.IntEnum):
    BOUNDARY = 0
    INTERIOR = 1
    TERMINAL = 2


class DagConsistencyError(RuntimeError):
    """A state key was re-inserted with a different level or kind."""


@dataclass
class Node:
    id: int
    key: bytes
    state: Any
    kind: Kind
    level: int
    children: List[int] = field(default_factory=list)
    parents: List[int] = field(default_factory=list)
    visits: int = 0
    status: Status = Status.BOUNDARY


class SearchDag:
    def __init__(self, root_state, root_key: bytes, root_kind: Kind = Kind.MAX,
                 transpositions: bool = True):
        self.transpositions = transpositions
        self.nodes: List[Node] = []
        self.transposition: Dict[bytes, int] = {}
        self.root, _ = self.get_or_insert(root_state, root_key, 0, root_kind)

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, node_id: int) -> Node:
        return self.nodes[node_id]

    def lookup(self, key: bytes) -> Optional[int]:
        return self.transposition.get(key)

    def get_or_insert(self, state, key: bytes, level: int, kind: Kind,
                      terminal: bool = False) -> Tuple[int, bool]:
        """Return ``(id, was_new)``; existing nodes are returned untouched."""
        if self.transpositions:
            found = self.transposition.get(key)
            if found is not None:
                node = self.nodes[found]
                if node.level != level or node.kind != kind:
                    raise DagConsistencyError(
                        f"key {key.hex()} stored at level {node.level}/{node.kind.name}, "
                        f"re-inserted at level {level}/{Kind(kind).name}"
                    )
                return found, False
        node_id = len(self.nodes)
        status = Status.TERMINAL if terminal else Status.BOUNDARY
        self.nodes.append(Node(node_id, key, state, Kind(kind), level, status=status))
        if self.transpositions:
            self.transposition[key] = node_id
        return node_id, True

    def expand(self, node_id: int, domain) -> List[int]:
        """Insert every successor of a boundary node and link the edges."""
        node = self.nodes[node_id]
        if node.status != Status.BOUNDARY:
            raise ValueError(f"node {node_id} is {node.status.name}, not BOUNDARY")
        successors = domain.successors(node.state)
        if not successors:
            node.status = Status.TERMINAL
            return []
        level = node.level + 1
        kind = domain.node_kind(level)
        children = []
        for child_state in successors:
            child_id, _ = self.get_or_insert(
                child_state, domain.key(child_state), level, kind,
                terminal=domain.is_terminal(child_state),
            )
            children.append(child_id)
        seen = set()
        for child_id in children:
            if child_id in seen:  # two moves reaching one state: one edge
                continue
            seen.add(child_id)
            node.children.append(child_id)
            self.nodes[child_id].parents.append(node_id)
        node.status = Status.INTERIOR
        return list(node.children)

    def mark_terminal(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if node.children:
            raise ValueError("a node with children cannot be terminal")
        node.status = Status.TERMINAL

    def ancestors(self, node_id: int) -> Set[int]:
        seen: Set[int] = set()
        stack = list(self.nodes[node_id].parents)
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self.nodes[cur].parents)
        return seen

    def iter_level(self, level: int) -> Iterable[Node]:
        return (n for n in self.nodes if n.level == level)

    def export_lines(self) -> List[str]:
        """One line per node: ``id key_hex level kind visits child_ids``."""
        lines = []
        for n in self.nodes:
            kids = ",".join(str(c) for c in n.children) or "-"
            lines.append(f"{n.id} {n.key.hex()} {n.level} {n.kind.name} {n.visits} {kids}")
        return lines

    def export_text(self) -> str:
        return "\n".join(self.export_lines()) + "\n"
