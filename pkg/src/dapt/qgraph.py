"""Directed acyclic graph of sub-questions.

Nodes are single-hop sub-questions, possibly carrying text in more than one
language after cross-graph merging. An edge (u, v) means the answer to u is
needed before v can be solved. The graph stays acyclic through every mutation
and sorts deterministically: whenever several nodes are ready, the one with
the lexicographically smallest id is emitted first.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Literal

from .errors import (
    CycleDetectedError,
    SelfLoopError,
    UnknownNodeError,
    WouldCreateCycleError,
)

Origin = Literal["source", "english", "fused"]


def normalize_lang(code: str) -> str:
    """Lowercase a language tag, rejecting blanks."""
    code = code.strip().lower()
    if not code:
        raise ValueError("language tag must be non-empty")
    return code


def id_prefix(node_id: str) -> str:
    """Namespace part of a node id shaped like `<prefix>:<k>`."""
    return node_id.partition(":")[0]


@dataclass
class NodeAnswer:
    """Resolved answer for one sub-question, with provenance."""

    text: str
    lang: str
    doc_ids: tuple[str, ...] = ()


@dataclass
class QNode:
    """One sub-question. `texts` maps language tag to phrasing (1 or 2 entries)."""

    id: str
    texts: dict[str, str]
    origin: Origin = "source"
    answer: NodeAnswer | None = None

    def validate(self) -> None:
        if not self.id:
            raise ValueError("node id must be non-empty")
        if not self.texts:
            raise ValueError(f"node {self.id!r} has no texts")
        for lang, text in self.texts.items():
            if not lang or lang != lang.lower():
                raise ValueError(f"node {self.id!r} has invalid language tag {lang!r}")
            if not text or not text.strip():
                raise ValueError(f"node {self.id!r} has blank text for {lang!r}")
        if (self.origin == "fused") != (len(self.texts) >= 2):
            raise ValueError(
                f"node {self.id!r}: origin {self.origin!r} inconsistent with "
                f"{len(self.texts)} language entries"
            )

    def text_for(self, lang: str) -> str:
        return self.texts[lang]


@dataclass
class SubQuestionGraph:
    """Sub-question DAG.

    `aliases` maps ids of nodes removed by merging to the surviving node id,
    so references to the removed node (answer placeholders, edges already
    redirected) can still be resolved. `prefixes` maps each id namespace to
    the language its texts were authored in; both are empty before fusion.
    """

    nodes: dict[str, QNode] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)
    aliases: dict[str, str] = field(default_factory=dict)
    prefixes: dict[str, str] = field(default_factory=dict)

    # -- construction -------------------------------------------------

    def add_node(self, node: QNode) -> None:
        node.validate()
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node

    def add_edge(self, src: str, dst: str) -> None:
        """Insert a dependency edge, refusing anything that breaks the DAG."""
        if src not in self.nodes:
            raise UnknownNodeError(src)
        if dst not in self.nodes:
            raise UnknownNodeError(dst)
        if src == dst:
            raise SelfLoopError(src)
        if (src, dst) in self.edges:
            return
        # dst already reaches src => closing the loop
        if self._reaches(dst, src):
            raise WouldCreateCycleError(src, dst)
        self.edges.add((src, dst))

    # -- queries ------------------------------------------------------

    def predecessors(self, node_id: str) -> set[str]:
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        return {u for (u, v) in self.edges if v == node_id}

    def successors(self, node_id: str) -> set[str]:
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)
        return {v for (u, v) in self.edges if u == node_id}

    def resolve(self, node_id: str) -> str:
        """Follow merge aliases to the surviving node id."""
        seen = set()
        while node_id in self.aliases and node_id not in seen:
            seen.add(node_id)
            node_id = self.aliases[node_id]
        return node_id

    def _reaches(self, start: str, goal: str) -> bool:
        stack = [start]
        seen = {start}
        while stack:
            cur = stack.pop()
            if cur == goal:
                return True
            for (u, v) in self.edges:
                if u == cur and v not in seen:
                    seen.add(v)
                    stack.append(v)
        return False

    def is_acyclic(self) -> bool:
        try:
            self.topological_sort()
        except CycleDetectedError:
            return False
        return True

    def topological_sort(self) -> list[str]:
        """Kahn's algorithm with an ordered frontier.

        Among all ready nodes, the lexicographically smallest id goes first,
        so identical graphs always sort identically.
        """
        indeg = {nid: 0 for nid in self.nodes}
        out: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for (u, v) in self.edges:
            indeg[v] += 1
            out[u].append(v)
        frontier = [nid for nid, d in indeg.items() if d == 0]
        heapq.heapify(frontier)
        order: list[str] = []
        while frontier:
            nid = heapq.heappop(frontier)
            order.append(nid)
            for succ in out[nid]:
                indeg[succ] -= 1
                if indeg[succ] == 0:
                    heapq.heappush(frontier, succ)
        if len(order) != len(self.nodes):
            raise CycleDetectedError("graph contains a cycle")
        return order

    # -- fusion-time surgery -------------------------------------------

    def merged_edges(self, keep_id: str, drop_id: str) -> set[tuple[str, str]]:
        """Edge set after redirecting `drop_id`'s edges onto `keep_id`.

        Self-loops produced by the redirection are dropped and duplicates
        collapse through set semantics.
        """
        remapped = set()
        for (u, v) in self.edges:
            u2 = keep_id if u == drop_id else u
            v2 = keep_id if v == drop_id else v
            if u2 != v2:
                remapped.add((u2, v2))
        return remapped

    def merge_would_cycle(self, keep_id: str, drop_id: str) -> bool:
        trial = SubQuestionGraph(nodes=dict(self.nodes), edges=self.merged_edges(keep_id, drop_id))
        del trial.nodes[drop_id]
        return not trial.is_acyclic()

    def merge_nodes(self, keep_id: str, drop_id: str) -> None:
        """Absorb `drop_id` into `keep_id`: texts union, edges redirected.

        The absorbed node's text is added under its language tag unless the
        keeper already has that language, in which case the keeper's phrasing
        wins and the merge only collapses the duplicate. Origin flips to
        "fused" exactly when the keeper ends up with two or more languages.
        """
        if keep_id not in self.nodes:
            raise UnknownNodeError(keep_id)
        if drop_id not in self.nodes:
            raise UnknownNodeError(drop_id)
        keeper = self.nodes[keep_id]
        dropped = self.nodes[drop_id]
        for lang, text in dropped.texts.items():
            keeper.texts.setdefault(lang, text)
        if len(keeper.texts) >= 2:
            keeper.origin = "fused"
        self.edges = self.merged_edges(keep_id, drop_id)
        del self.nodes[drop_id]
        self.aliases[drop_id] = keep_id
        for old, new in list(self.aliases.items()):
            if new == drop_id:
                self.aliases[old] = keep_id

    # -- serialization --------------------------------------------------

    def to_json(self) -> dict:
        """JSON form: {nodes:[{id, texts, origin}], edges:[[from, to]]}.

        `aliases` and `prefixes` are added when present; they are auxiliary
        metadata for fused graphs (see README for the documented schema).
        """
        doc: dict = {
            "nodes": [
                {"id": n.id, "texts": dict(sorted(n.texts.items())), "origin": n.origin}
                for n in sorted(self.nodes.values(), key=lambda n: n.id)
            ],
            "edges": sorted([list(e) for e in self.edges]),
        }
        if self.aliases:
            doc["aliases"] = dict(sorted(self.aliases.items()))
        if self.prefixes:
            doc["prefixes"] = dict(sorted(self.prefixes.items()))
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SubQuestionGraph":
        g = cls()
        for nd in doc["nodes"]:
            g.add_node(QNode(id=nd["id"], texts=dict(nd["texts"]), origin=nd["origin"]))
        for src, dst in doc["edges"]:
            g.add_edge(src, dst)
        g.aliases = dict(doc.get("aliases", {}))
        g.prefixes = dict(doc.get("prefixes", {}))
        return g

    def to_dot(self) -> str:
        """Graphviz export for eyeballing plans."""
        lines = ["digraph subquestions {"]
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            label = " / ".join(f"[{l}] {t}" for l, t in sorted(node.texts.items()))
            label = label.replace("\\", "\\\\").replace('"', '\\"')
            shape = "box" if node.origin == "fused" else "ellipse"
            lines.append(f'  "{nid}" [label="{nid}\\n{label}", shape={shape}];')
        for (u, v) in sorted(self.edges):
            lines.append(f'  "{u}" -> "{v}";')
        lines.append("}")
        return "\n".join(lines)


def build_graph(nodes: Iterable[QNode], edges: Iterable[tuple[str, str]]) -> SubQuestionGraph:
    """Construct and validate a graph in one call."""
    g = SubQuestionGraph()
    for node in nodes:
        g.add_node(node)
    for src, dst in edges:
        g.add_edge(src, dst)
    return g
