"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class DaptError(Exception):
    """Base class for all pipeline errors."""


# --- graph errors ---------------------------------------------------------


class GraphError(DaptError):
    pass


class UnknownNodeError(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node: {node_id!r}")
        self.node_id = node_id


class SelfLoopError(GraphError):
    def __init__(self, node_id: str):
        super().__init__(f"self-loop on node: {node_id!r}")
        self.node_id = node_id


class WouldCreateCycleError(GraphError):
    def __init__(self, src: str, dst: str):
        super().__init__(f"edge ({src!r} -> {dst!r}) would create a cycle")
        self.src = src
        self.dst = dst


class CycleDetectedError(GraphError):
    """Defensive: raised when a sort runs on a graph that is not acyclic."""


# --- backend errors -------------------------------------------------------


class BackendError(DaptError):
    pass


class TransportError(BackendError):
    pass


class AuthError(BackendError):
    pass


class RateLimitExhaustedError(BackendError):
    pass


class EmptyResponseError(BackendError):
    pass


class DimensionMismatchError(BackendError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"embedding dimension mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class CacheMissError(BackendError):
    """Replay-mode cache lookup failed; the run is not offline-reproducible."""

    def __init__(self, key: str):
        super().__init__(f"replay cache miss for request key {key}")
        self.key = key


# --- planning / retrieval / solver errors ---------------------------------


class EmptyTranslationError(DaptError):
    pass


class MalformedRecordError(DaptError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"malformed corpus record at line {line}: {reason}")
        self.line = line
        self.reason = reason


class MissingIndexError(DaptError):
    def __init__(self, lang: str):
        super().__init__(f"no corpus index for language {lang!r}")
        self.lang = lang


class BothEmptyError(DaptError):
    """Both candidate answers are blank; treated as a failed judge upstream."""
