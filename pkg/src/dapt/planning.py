"""Query translation and decomposition into sub-question graphs.

The generation model is asked for strict JSON naming sub-questions and their
dependency pairs. Malformed or cyclic output is retried a bounded number of
times and then degrades to a single-node graph holding the original question,
so planning never fails on content grounds; only transport errors propagate.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from .backends.types import ChatBackend, user_request
from .errors import EmptyTranslationError, GraphError
from .prompttext import render_prompt
from .qgraph import QNode, SubQuestionGraph, normalize_lang

logger = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 12
DEFAULT_RETRIES = 2

LANG_NAMES = {
    "sw": "Swahili",
    "th": "Thai",
    "de": "German",
    "es": "Spanish",
    "zh": "Chinese",
    "en": "English",
}


@dataclass(frozen=True)
class Query:
    text: str
    lang: str

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("query text must be non-blank")
        normalize_lang(self.lang)


@dataclass
class DecompositionOutput:
    """Parsed decomposition reply: sub-question texts plus 1-based dependency pairs."""

    sub_questions: list[str]
    dependencies: list[tuple[int, int]]


def lang_name(tag: str) -> str:
    return LANG_NAMES.get(tag, tag)


def translate_query(q: Query, target: str, chat: ChatBackend, *,
                    prompts_dir: str | None = None) -> Query:
    """Translate `q` into `target`; the identity case makes no backend call."""
    target = normalize_lang(target)
    if q.lang == target:
        return q
    prompt = render_prompt("translate", prompts_dir=prompts_dir,
                           text=q.text, target_name=lang_name(target))
    for attempt in (1, 2):
        reply = chat.complete(user_request(prompt, tag="translate")).strip()
        if reply:
            return Query(text=reply, lang=target)
        logger.warning("blank translation on attempt %d", attempt)
    raise EmptyTranslationError(f"backend returned blank translation for {q.text[:80]!r}")


_FENCE = re.compile(r"^```[a-zA-Z]*\n(.*)\n```$", re.DOTALL)


def parse_decomposition(reply: str) -> DecompositionOutput:
    """Parse and validate the strict-JSON decomposition reply.

    Raises ValueError on any structural problem; cycle checking happens when
    the graph is built.
    """
    text = reply.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("decomposition must be a JSON object")
    subs = doc.get("sub_questions")
    if not isinstance(subs, list) or not subs:
        raise ValueError("sub_questions must be a non-empty list")
    if not all(isinstance(s, str) and s.strip() for s in subs):
        raise ValueError("sub_questions entries must be non-blank strings")
    deps_raw = doc.get("dependencies", [])
    if not isinstance(deps_raw, list):
        raise ValueError("dependencies must be a list")
    deps: list[tuple[int, int]] = []
    n = len(subs)
    for pair in deps_raw:
        if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                or not all(isinstance(x, int) for x in pair)):
            raise ValueError(f"dependency pair {pair!r} is not a pair of ints")
        i, j = pair
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValueError(f"dependency pair {pair!r} out of range 1..{n}")
        if i == j:
            raise ValueError(f"dependency pair {pair!r} is a self-loop")
        deps.append((i, j))
    return DecompositionOutput(sub_questions=[s.strip() for s in subs], dependencies=deps)


def _graph_from_output(out: DecompositionOutput, lang: str, prefix: str,
                       origin: str) -> SubQuestionGraph:
    g = SubQuestionGraph()
    for k, text in enumerate(out.sub_questions, start=1):
        g.add_node(QNode(id=f"{prefix}:{k}", texts={lang: text}, origin=origin))
    for i, j in out.dependencies:
        g.add_edge(f"{prefix}:{i}", f"{prefix}:{j}")  # cycles raise here
    g.prefixes[prefix] = lang
    return g


def fallback_graph(q: Query, prefix: str, origin: str) -> SubQuestionGraph:
    """Single-node plan: the question itself, equivalent to plain RAG."""
    g = SubQuestionGraph()
    g.add_node(QNode(id=f"{prefix}:1", texts={q.lang: q.text.strip()}, origin=origin))
    g.prefixes[prefix] = q.lang
    return g


def decompose(q: Query, chat: ChatBackend, *, id_prefix: str | None = None,
              origin: str = "source", node_cap: int = DEFAULT_NODE_CAP,
              retries: int = DEFAULT_RETRIES,
              prompts_dir: str | None = None) -> SubQuestionGraph:
    """Decompose a query into a sub-question DAG.

    Node ids are `<prefix>:<k>` with k the 1-based position in the reply.
    Content failures retry up to `retries` times, then fall back to the
    single-node plan; transport errors propagate.
    """
    prefix = id_prefix if id_prefix is not None else q.lang
    prompt = render_prompt("decompose", prompts_dir=prompts_dir,
                           question=q.text, max_nodes=str(node_cap))
    for attempt in range(1 + retries):
        reply = chat.complete(user_request(prompt, tag="decompose"))
        try:
            out = parse_decomposition(reply)
            if len(out.sub_questions) > node_cap:
                raise ValueError(f"{len(out.sub_questions)} sub-questions exceed cap {node_cap}")
            return _graph_from_output(out, q.lang, prefix, origin)
        except (ValueError, json.JSONDecodeError, GraphError) as exc:
            # covers unparseable JSON, schema violations, and cyclic dependencies
            logger.warning("unusable decomposition (attempt %d/%d): %s",
                           attempt + 1, 1 + retries, exc)
    logger.warning("decomposition failed for %r; using single-node fallback", q.text[:80])
    return fallback_graph(q, prefix, origin)


def plan(q: Query, chat: ChatBackend, *, node_cap: int = DEFAULT_NODE_CAP,
         retries: int = DEFAULT_RETRIES,
         prompts_dir: str | None = None) -> tuple[SubQuestionGraph, SubQuestionGraph]:
    """Build the source-language and English sub-question graphs.

    For an English query both graphs decompose the same text; the second one
    gets the id namespace "en2" so the pair stays disjoint for fusion.
    """
    g_source = decompose(q, chat, id_prefix=q.lang, origin="source",
                         node_cap=node_cap, retries=retries, prompts_dir=prompts_dir)
    q_en = translate_query(q, "en", chat, prompts_dir=prompts_dir)
    en_prefix = "en" if q.lang != "en" else "en2"
    g_en = decompose(q_en, chat, id_prefix=en_prefix, origin="english",
                     node_cap=node_cap, retries=retries, prompts_dir=prompts_dir)
    return g_source, g_en
