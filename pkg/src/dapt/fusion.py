"""Cross-lingual merging of two sub-question graphs.

Source-language and English nodes are paired greedily by highest cosine
similarity. A pair merges only while its similarity strictly exceeds the
threshold; the surviving source node picks up the English phrasing, inherits
the English node's edges, and the English node disappears. Pairs whose merge
would close a cycle are skipped so the fused graph is always a DAG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backends.types import EmbedBackend, EmbedRequest
from .qgraph import QNode, SubQuestionGraph


@dataclass
class FusionConfig:
    tau: float = 0.8  # merge when similarity is strictly above this

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must be in [0, 1], got {self.tau}")


@dataclass
class SimilarityMatrix:
    rows: list[str]  # source-graph node ids
    cols: list[str]  # english-graph node ids
    values: np.ndarray  # shape (len(rows), len(cols)), cosine similarities

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.rows), len(self.cols)):
            raise ValueError("similarity matrix shape does not match id lists")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("similarity matrix contains non-finite values")


def _node_text(node: QNode) -> str:
    return node.texts[sorted(node.texts)[0]]


def similarity_matrix(g_l: SubQuestionGraph, g_en: SubQuestionGraph,
                      embed: EmbedBackend) -> SimilarityMatrix:
    """Pairwise cosine similarity between all source and English nodes.

    Each node is embedded once, in a single batched call; vectors arrive
    unit-normalized from the backend so cosine reduces to a dot product.
    """
    if not g_l.nodes or not g_en.nodes:
        raise ValueError("both graphs must be non-empty")
    rows = sorted(g_l.nodes)
    cols = sorted(g_en.nodes)
    texts = [_node_text(g_l.nodes[r]) for r in rows] + [_node_text(g_en.nodes[c]) for c in cols]
    vectors = np.asarray(embed.embed(EmbedRequest(tuple(texts))), dtype=np.float64)
    row_vecs = vectors[: len(rows)]
    col_vecs = vectors[len(rows):]
    values = np.clip(row_vecs @ col_vecs.T, -1.0, 1.0)
    return SimilarityMatrix(rows=rows, cols=cols, values=values)


def _disjoint_union(g_l: SubQuestionGraph, g_en: SubQuestionGraph) -> SubQuestionGraph:
    overlap = set(g_l.nodes) & set(g_en.nodes)
    if overlap:
        raise ValueError(f"graphs share node ids: {sorted(overlap)}")
    merged = SubQuestionGraph()
    for g in (g_l, g_en):
        for node in g.nodes.values():
            merged.add_node(QNode(id=node.id, texts=dict(node.texts),
                                  origin=node.origin, answer=node.answer))
        for src, dst in g.edges:
            merged.add_edge(src, dst)
        merged.prefixes.update(g.prefixes)
    return merged


def fuse_with_matrix(g_l: SubQuestionGraph, g_en: SubQuestionGraph,
                     cfg: FusionConfig, sim: SimilarityMatrix) -> SubQuestionGraph:
    """Greedy one-to-one fusion over a precomputed similarity matrix.

    Repeats: take the unconsumed pair with maximum similarity (ties broken by
    smallest (row-id, col-id)); stop once that maximum is <= tau; skip pairs
    whose merge would create a cycle; otherwise merge and consume both nodes.
    Unmerged English nodes stay in the result as monolingual nodes.
    """
    fused = _disjoint_union(g_l, g_en)
    consumed_rows: set[int] = set()
    consumed_cols: set[int] = set()
    ineligible: set[tuple[int, int]] = set()
    while True:
        best: tuple[float, str, str, int, int] | None = None
        for i, row_id in enumerate(sim.rows):
            if i in consumed_rows:
                continue
            for j, col_id in enumerate(sim.cols):
                if j in consumed_cols or (i, j) in ineligible:
                    continue
                value = float(sim.values[i, j])
                if (best is None or value > best[0]
                        or (value == best[0] and (row_id, col_id) < (best[1], best[2]))):
                    best = (value, row_id, col_id, i, j)
        if best is None or best[0] <= cfg.tau:
            break
        value, row_id, col_id, i, j = best
        if fused.merge_would_cycle(row_id, col_id):
            ineligible.add((i, j))
            continue
        fused.merge_nodes(row_id, col_id)
        consumed_rows.add(i)
        consumed_cols.add(j)
    return fused


def fuse(g_l: SubQuestionGraph, g_en: SubQuestionGraph, cfg: FusionConfig,
         embed: EmbedBackend) -> SubQuestionGraph:
    """Merge the two plans into one bilingual DAG."""
    return fuse_with_matrix(g_l, g_en, cfg, similarity_matrix(g_l, g_en, embed))


def sequence(g_f: SubQuestionGraph) -> list[str]:
    """Deterministic execution order over the fused graph."""
    return g_f.topological_sort()
