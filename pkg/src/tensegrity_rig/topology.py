"""Tensegrity graphs: nodes, bars, strings and their connectivity matrices.

Nodes are stored column-wise in a 3 x n nodal matrix ``N``.  Each member row
of a connectivity matrix carries -1 at its first endpoint and +1 at its second,
so ``N @ C.T`` gives the member vectors (second minus first endpoint).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


class StructuralError(ValueError):
    """Raised when a topology cannot be turned into consistent matrices."""


class MemberKind(str, Enum):
    BAR = "bar"
    STRING = "string"


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple[float, float, float]
    anchored: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(x) for x in self.position))
        if len(self.position) != 3:
            raise ValueError(f"node {self.id}: position must have 3 coordinates")


@dataclass(frozen=True)
class Member:
    kind: MemberKind
    ends: tuple[int, int]
    material: str
    tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", MemberKind(self.kind))
        object.__setattr__(self, "ends", (int(self.ends[0]), int(self.ends[1])))

    @property
    def is_bar(self) -> bool:
        return self.kind is MemberKind.BAR


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class Topology:
    """Immutable tensegrity network.

    Bars and strings keep their relative order from ``members``; the bar
    matrix rows follow the order in which bars appear, likewise for strings.
    """

    nodes: tuple[Node, ...]
    members: tuple[Member, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def bars(self) -> list[Member]:
        return [m for m in self.members if m.is_bar]

    @property
    def strings(self) -> list[Member]:
        return [m for m in self.members if not m.is_bar]

    @property
    def bar_indices(self) -> list[int]:
        """Positions in ``members`` of each bar, in bar-matrix row order."""
        return [i for i, m in enumerate(self.members) if m.is_bar]

    @property
    def string_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.members) if not m.is_bar]

    @property
    def positions(self) -> np.ndarray:
        """Nodal matrix N, shape (3, n)."""
        if not self.nodes:
            return np.zeros((3, 0))
        return np.array([n.position for n in self.nodes], dtype=float).T

    @property
    def anchored(self) -> np.ndarray:
        return np.array([n.anchored for n in self.nodes], dtype=bool)

    def with_positions(self, positions: np.ndarray) -> "Topology":
        positions = np.asarray(positions, dtype=float)
        if positions.shape != (3, self.n_nodes):
            raise ValueError(f"positions must be 3 x {self.n_nodes}, got {positions.shape}")
        nodes = tuple(
            Node(n.id, tuple(positions[:, k]), n.anchored) for k, n in enumerate(self.nodes)
        )
        return Topology(nodes, self.members, dict(self.metadata))

    def with_members(self, members: Iterable[Member]) -> "Topology":
        return Topology(self.nodes, tuple(members), dict(self.metadata))

    def group(self, name: str) -> list[int]:
        return list(self.metadata.get("groups", {}).get(name, []))

    def members_tagged(self, tag: str) -> list[int]:
        return [i for i, m in enumerate(self.members) if m.tag == tag]


def validate(topology: Topology) -> list[Violation]:
    """Return every structural problem found; an empty list means valid."""
    out: list[Violation] = []
    n = topology.n_nodes
    if n == 0:
        out.append(Violation("empty", "topology has no nodes"))
    for k, node in enumerate(topology.nodes):
        if node.id != k:
            out.append(Violation("node-id", f"node at index {k} has id {node.id}; ids must be 0..n-1"))
        if not all(math.isfinite(x) for x in node.position):
            out.append(Violation("non-finite", f"node {node.id} has non-finite position"))

    seen: dict[tuple, int] = {}
    used = set()
    for k, m in enumerate(topology.members):
        i, j = m.ends
        dangling = [e for e in (i, j) if not 0 <= e < n]
        if dangling:
            out.append(Violation("dangling", f"member {k} ({m.kind.value}) references missing node(s) {dangling}"))
            continue
        used.update((i, j))
        if i == j:
            out.append(Violation("self-loop", f"member {k} is a zero-length/self-loop on node {i}"))
            continue
        if topology.nodes[i].position == topology.nodes[j].position:
            out.append(Violation("zero-length", f"member {k} joins coincident nodes {i} and {j}"))
        key = (m.kind, frozenset((i, j)))
        if key in seen:
            out.append(Violation("duplicate", f"member {k} duplicates member {seen[key]} ({m.kind.value} {i}-{j})"))
        else:
            seen[key] = k
    for node in topology.nodes:
        if node.id not in used and 0 <= node.id < n:
            out.append(Violation("isolated", f"isolated node {node.id} has no members"))
    return out


def _incidence(members: Sequence[Member], n_nodes: int) -> np.ndarray:
    C = np.zeros((len(members), n_nodes))
    for row, m in enumerate(members):
        i, j = m.ends
        for e in (i, j):
            if not 0 <= e < n_nodes:
                raise StructuralError(f"{m.kind.value} {m.ends} references missing node {e}")
        C[row, i] = -1.0
        C[row, j] = 1.0
    return C


def connectivity_matrices(topology: Topology) -> tuple[np.ndarray, np.ndarray]:
    """Bar matrix C_b (beta x n) and string matrix C_s (alpha x n)."""
    n = topology.n_nodes
    return _incidence(topology.bars, n), _incidence(topology.strings, n)


# --- JSON -----------------------------------------------------------------

def topology_to_dict(topology: Topology) -> dict:
    members = []
    for m in topology.members:
        d = {"kind": m.kind.value, "ends": list(m.ends), "material": m.material}
        if m.tag is not None:
            d["tag"] = m.tag
        members.append(d)
    out = {
        "nodes": [
            {"id": n.id, "pos": list(n.position), "anchored": n.anchored} for n in topology.nodes
        ],
        "members": members,
    }
    if topology.metadata:
        out["metadata"] = topology.metadata
    return out


def topology_from_dict(data: dict) -> Topology:
    try:
        nodes = [
            Node(int(d["id"]), tuple(d["pos"]), bool(d.get("anchored", False)))
            for d in data["nodes"]
        ]
        members = [
            Member(MemberKind(d["kind"]), tuple(d["ends"]), str(d.get("material", "")), d.get("tag"))
            for d in data["members"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed topology document: {exc}") from exc
    nodes.sort(key=lambda n: n.id)
    return Topology(tuple(nodes), tuple(members), dict(data.get("metadata", {})))


def dumps(obj: Any) -> str:
    """Stable JSON text used for every artifact this package writes."""
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def save_topology(topology: Topology, path: str | Path) -> None:
    Path(path).write_text(dumps(topology_to_dict(topology)))


def load_topology(path: str | Path) -> Topology:
    return topology_from_dict(json.loads(Path(path).read_text()))
