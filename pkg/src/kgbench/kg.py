"""Hierarchical knowledge graphs: loading, validation, queries, interventions.

Graphs are three-level hierarchies (root, intermediate, leaf). Node-to-node
edges must point strictly downward in the hierarchy, which keeps the level
structure acyclic; edge objects may instead be plain literals (years, names)
that do not participate in graph distance.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Optional

from .errors import (
    DanglingReference,
    IOFailure,
    NoReplacementCandidate,
    SchemaViolation,
    UnknownNode,
)

LEVELS = ("root", "intermediate", "leaf")
_LEVEL_RANK = {name: i for i, name in enumerate(LEVELS)}


class Level(str, Enum):
    ROOT = "root"
    INTERMEDIATE = "intermediate"
    LEAF = "leaf"

    @property
    def rank(self) -> int:
        return _LEVEL_RANK[self.value]


class Mode(str, Enum):
    EDIT = "edit"
    UNLEARN = "unlearn"


class RetainPolicy(str, Enum):
    POST_UPDATED = "post_updated"
    ORIGINAL = "original"


@dataclass(frozen=True)
class KGNode:
    id: str
    label: str
    level: Level
    domain: str


@dataclass(frozen=True)
class FactTriple:
    subject: str
    relation: str
    object: str

    def as_dict(self) -> dict[str, str]:
        return {"subject": self.subject, "relation": self.relation, "object": self.object}


@dataclass(frozen=True)
class KnowledgeGraph:
    domain: str
    nodes: dict[str, KGNode]
    edges: tuple[FactTriple, ...]
    _adjacency: dict[str, frozenset[str]] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        adj: dict[str, set[str]] = {nid: set() for nid in self.nodes}
        for e in self.edges:
            if e.object in self.nodes:
                adj[e.subject].add(e.object)
                adj[e.object].add(e.subject)
        object.__setattr__(
            self, "_adjacency", {nid: frozenset(peers) for nid, peers in adj.items()}
        )

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def node(self, node_id: str) -> KGNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node id: {node_id!r}") from None

    def neighbors(self, node_id: str) -> frozenset[str]:
        if node_id not in self.nodes:
            raise UnknownNode(f"unknown node id: {node_id!r}")
        return self._adjacency[node_id]

    def has_fact(self, fact: FactTriple) -> bool:
        return fact in self.edges

    def facts_with_relation(self, relation: str) -> list[FactTriple]:
        return [e for e in self.edges if e.relation == relation]

    def levels_present(self) -> set[str]:
        return {n.level.value for n in self.nodes.values()}

    def to_dict(self) -> dict[str, Any]:
        return {
            "domain": self.domain,
            "nodes": [
                {"id": n.id, "label": n.label, "level": n.level.value}
                for n in self.nodes.values()
            ],
            "edges": [e.as_dict() for e in self.edges],
        }


@dataclass(frozen=True)
class InterventionSpec:
    """An update request: the fact to change and, for edits or redirecting
    unlearns, the fact it becomes."""

    mode: Mode
    item: FactTriple
    updated: Optional[FactTriple]
    scope: frozenset[str] = frozenset()
    retain_policy: RetainPolicy = RetainPolicy.POST_UPDATED

    def __post_init__(self) -> None:
        if self.mode is Mode.EDIT:
            if self.updated is None:
                raise ValueError("edit intervention requires an updated fact")
            if self.updated == self.item:
                raise ValueError("edit intervention must change the fact")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "item": self.item.as_dict(),
            "updated": self.updated.as_dict() if self.updated else None,
            "scope": sorted(self.scope),
            "retain_policy": self.retain_policy.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "InterventionSpec":
        return cls(
            mode=Mode(d["mode"]),
            item=FactTriple(**d["item"]),
            updated=FactTriple(**d["updated"]) if d.get("updated") else None,
            scope=frozenset(d.get("scope", ())),
            retain_policy=RetainPolicy(d.get("retain_policy", "post_updated")),
        )


_TOP_LEVEL_KEYS = {"domain", "nodes", "edges"}
_NODE_KEYS = {"id", "label", "level"}
_EDGE_KEYS = {"subject", "relation", "object"}


def parse_kg(doc: dict[str, Any]) -> KnowledgeGraph:
    """Validate a raw KG document and build the graph."""
    if not isinstance(doc, dict):
        raise SchemaViolation("KG document must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise SchemaViolation(f"unknown top-level keys: {sorted(unknown)}")
    missing = _TOP_LEVEL_KEYS - set(doc)
    if missing:
        raise SchemaViolation(f"missing top-level keys: {sorted(missing)}")
    domain = doc["domain"]
    if not isinstance(domain, str) or not domain:
        raise SchemaViolation("domain must be a non-empty string")

    nodes: dict[str, KGNode] = {}
    for raw in doc["nodes"]:
        if not isinstance(raw, dict) or set(raw) != _NODE_KEYS:
            raise SchemaViolation(f"node must have exactly keys {sorted(_NODE_KEYS)}: {raw!r}")
        if not all(isinstance(raw[k], str) and raw[k] for k in _NODE_KEYS):
            raise SchemaViolation(f"node fields must be non-empty strings: {raw!r}")
        if raw["level"] not in LEVELS:
            raise SchemaViolation(f"bad level {raw['level']!r} for node {raw['id']!r}")
        if raw["id"] in nodes:
            raise SchemaViolation(f"duplicate node id: {raw['id']!r}")
        nodes[raw["id"]] = KGNode(
            id=raw["id"], label=raw["label"], level=Level(raw["level"]), domain=domain
        )

    edges: list[FactTriple] = []
    for raw in doc["edges"]:
        if not isinstance(raw, dict) or set(raw) != _EDGE_KEYS:
            raise SchemaViolation(f"edge must have exactly keys {sorted(_EDGE_KEYS)}: {raw!r}")
        if not all(isinstance(raw[k], str) for k in _EDGE_KEYS):
            raise SchemaViolation(f"edge fields must be strings: {raw!r}")
        if not raw["relation"]:
            raise SchemaViolation(f"edge relation must be non-empty: {raw!r}")
        if raw["subject"] not in nodes:
            raise DanglingReference(f"edge subject {raw['subject']!r} is not a node")
        edge = FactTriple(subject=raw["subject"], relation=raw["relation"], object=raw["object"])
        # node-to-node edges must descend the hierarchy (root -> intermediate -> leaf)
        if edge.object in nodes:
            s_rank = nodes[edge.subject].level.rank
            o_rank = nodes[edge.object].level.rank
            if o_rank <= s_rank:
                raise SchemaViolation(
                    f"edge {edge.subject!r} -> {edge.object!r} does not descend the hierarchy"
                )
        edges.append(edge)

    return KnowledgeGraph(domain=domain, nodes=nodes, edges=tuple(edges))


def load_kg(path: str | Path) -> KnowledgeGraph:
    """Load and validate a KG JSON file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read {p}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{p} is not valid JSON: {exc}") from exc
    return parse_kg(doc)


def save_kg(kg: KnowledgeGraph, path: str | Path) -> None:
    """Serialize a graph back to its JSON schema."""
    try:
        Path(path).write_text(
            json.dumps(kg.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def require_full_hierarchy(kg: KnowledgeGraph) -> None:
    """Benchmark generation needs at least one node at every level."""
    missing = set(LEVELS) - kg.levels_present()
    if missing:
        raise SchemaViolation(
            f"graph {kg.domain!r} lacks nodes at levels: {sorted(missing)}"
        )


def hop_distance(kg: KnowledgeGraph, a: str, b: str) -> Optional[int]:
    """Shortest undirected path length over node-to-node edges; None when
    the nodes are in different components. Literal edge objects are not
    graph nodes and contribute no hops."""
    if a not in kg.nodes:
        raise UnknownNode(f"unknown node id: {a!r}")
    if b not in kg.nodes:
        raise UnknownNode(f"unknown node id: {b!r}")
    if a == b:
        return 0
    seen = {a}
    queue: deque[tuple[str, int]] = deque([(a, 0)])
    while queue:
        current, dist = queue.popleft()
        for peer in kg.neighbors(current):
            if peer == b:
                return dist + 1
            if peer not in seen:
                seen.add(peer)
                queue.append((peer, dist + 1))
    return None


def nodes_within(kg: KnowledgeGraph, center: str, radius: int) -> set[str]:
    """All node ids with 1 <= hop_distance <= radius from center."""
    if center not in kg.nodes:
        raise UnknownNode(f"unknown node id: {center!r}")
    found: set[str] = set()
    seen = {center}
    queue: deque[tuple[str, int]] = deque([(center, 0)])
    while queue:
        current, dist = queue.popleft()
        if dist == radius:
            continue
        for peer in kg.neighbors(current):
            if peer not in seen:
                seen.add(peer)
                found.add(peer)
                queue.append((peer, dist + 1))
    return found


def sibling_objects(kg: KnowledgeGraph, fact: FactTriple) -> list[str]:
    """Distinct objects of other edges sharing the fact's relation, in
    first-seen order. These are the natural replacement and distractor pool."""
    out: list[str] = []
    for e in kg.edges:
        if e.relation == fact.relation and e.object != fact.object and e.object not in out:
            out.append(e.object)
    return out


def derive_intervention(
    kg: KnowledgeGraph,
    fact: FactTriple,
    mode: Mode | str,
    replacement: Optional[str] = None,
    seed: int = 0,
    retain_policy: RetainPolicy | str = RetainPolicy.POST_UPDATED,
    scope: Iterable[str] = (),
) -> InterventionSpec:
    """Build an InterventionSpec for a fact present in the graph.

    Edits replace the fact object with `replacement`, or with a seeded choice
    among sibling objects when none is supplied. Unlearning with the default
    post_updated retain policy carries the same redirection target; with the
    original policy no redirection is attached.
    """
    mode = Mode(mode)
    retain_policy = RetainPolicy(retain_policy)
    if not kg.has_fact(fact):
        raise UnknownNode(f"fact not present in graph: {fact}")

    needs_target = mode is Mode.EDIT or retain_policy is RetainPolicy.POST_UPDATED
    updated: Optional[FactTriple] = None
    if needs_target:
        if replacement is not None:
            if replacement == fact.object:
                raise NoReplacementCandidate("replacement equals the original object")
            target = replacement
        else:
            pool = sibling_objects(kg, fact)
            if not pool:
                raise NoReplacementCandidate(
                    f"no sibling object for relation {fact.relation!r} and none supplied"
                )
            target = random.Random(seed).choice(pool)
        updated = FactTriple(subject=fact.subject, relation=fact.relation, object=target)

    return InterventionSpec(
        mode=mode,
        item=fact,
        updated=updated,
        scope=frozenset(scope),
        retain_policy=retain_policy,
    )


def related_probeset(kg: KnowledgeGraph, spec: InterventionSpec, radius: int) -> set[str]:
    """Node ids within `radius` hops of the intervened subject, subject excluded."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    return nodes_within(kg, spec.item.subject, radius)
