"""Bilingual dual-path pipeline for multilingual multi-hop question answering."""

from .errors import (
    BackendError,
    BothEmptyError,
    CacheMissError,
    CycleDetectedError,
    DaptError,
    EmptyTranslationError,
    GraphError,
    MalformedRecordError,
    MissingIndexError,
    SelfLoopError,
    UnknownNodeError,
    WouldCreateCycleError,
)
from .fusion import FusionConfig, SimilarityMatrix, fuse, fuse_with_matrix, sequence, similarity_matrix
from .planning import Query, decompose, plan, translate_query
from .qgraph import NodeAnswer, QNode, SubQuestionGraph, build_graph
from .retrieval import CorpusIndex, Document, build_index, retrieve
from .solver import (
    Backends,
    CandidateAnswer,
    ReasoningTrace,
    SolverConfig,
    answer_question,
    combine,
    judge,
    regen,
    select,
    solve_node,
    synthesize_final,
    write_trace,
)
from .evaluation import (
    BenchmarkItem,
    BenchmarkReport,
    EvalRecord,
    em_score,
    f1_score,
    load_benchmark,
    normalize_answer,
    run_benchmark,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "Backends",
    "BenchmarkItem",
    "BenchmarkReport",
    "BothEmptyError",
    "CacheMissError",
    "CandidateAnswer",
    "CorpusIndex",
    "CycleDetectedError",
    "DaptError",
    "Document",
    "EmptyTranslationError",
    "EvalRecord",
    "FusionConfig",
    "GraphError",
    "MalformedRecordError",
    "MissingIndexError",
    "NodeAnswer",
    "QNode",
    "Query",
    "ReasoningTrace",
    "SelfLoopError",
    "SimilarityMatrix",
    "SolverConfig",
    "SubQuestionGraph",
    "UnknownNodeError",
    "WouldCreateCycleError",
    "answer_question",
    "build_graph",
    "build_index",
    "combine",
    "decompose",
    "em_score",
    "f1_score",
    "fuse",
    "fuse_with_matrix",
    "judge",
    "load_benchmark",
    "normalize_answer",
    "plan",
    "regen",
    "retrieve",
    "run_benchmark",
    "select",
    "sequence",
    "similarity_matrix",
    "solve_node",
    "synthesize_final",
    "translate_query",
    "write_trace",
]
