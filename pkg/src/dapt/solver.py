"""Sequential execution of the fused plan.

Each node in the topological sequence is turned into one query per language
(dependency answers substituted in), answered against the same-language
corpus, and checked: bilingual nodes get a consistency judge over their two
candidates, monolingual nodes a single-candidate sufficiency check. Failures
trigger a bounded regenerate-and-recheck loop over the accumulated reasoning
path. The solved chain plus a fresh retrieval for the original question feeds
one final synthesis call.
"""

from __future__ import annotations

import json
import re
import string as _string
from dataclasses import dataclass, field
from pathlib import Path

from .backends.types import ChatBackend, EmbedBackend, EmbedRequest, user_request
from .errors import BothEmptyError, MissingIndexError
from .fusion import FusionConfig, fuse, sequence
from .planning import Query, decompose, plan, translate_query
from .prompttext import render_prompt
from .qgraph import NodeAnswer, QNode, SubQuestionGraph, id_prefix
from .retrieval import CorpusIndex, Document, retrieve

MODES = ("full", "no_decompose", "no_fusion", "translate_qa")


@dataclass
class SolverConfig:
    k: int = 3
    max_regen: int = 2
    mode: str = "full"
    tau: float = 0.8
    node_cap: int = 12
    retries: int = 2
    prompts_dir: str | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_regen < 0:
            raise ValueError("max_regen must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class Backends:
    chat: ChatBackend
    embed: EmbedBackend


@dataclass
class CandidateAnswer:
    text: str
    lang: str
    supporting_docs: list[str]
    node_id: str


@dataclass
class RegenAttempt:
    text: str
    accepted: bool


@dataclass
class SolveStep:
    node_id: str
    origin: str
    texts: dict[str, str]
    queries: dict[str, str]
    retrieved: dict[str, list[str]]
    candidates: list[CandidateAnswer]
    judge_verdict: bool
    judge_method: str  # "short_circuit" | "llm" | "single" | "none"
    regen_attempts: list[RegenAttempt]
    low_confidence: bool
    answer: CandidateAnswer
    prompts: dict[str, str] = field(default_factory=dict)
    completions: dict[str, str] = field(default_factory=dict)


@dataclass
class SynthesisRecord:
    lang: str
    retrieved: list[str]
    prompt: str
    completion: str


@dataclass
class ReasoningTrace:
    question: str
    lang: str
    mode: str
    qid: str = ""
    dataset: str = ""
    sequence: list[str] = field(default_factory=list)
    steps: list[SolveStep] = field(default_factory=list)
    graphs: dict[str, dict] = field(default_factory=dict)
    synthesis: SynthesisRecord | None = None
    final_answer: str = ""
    stage_calls: dict[str, int] = field(default_factory=dict)
    error: str | None = None

    def solved_answers(self) -> dict[str, str]:
        return {step.node_id: step.answer.text for step in self.steps}

    def chain_pairs(self) -> list[tuple[str, str]]:
        """Solved (sub-question, answer) pairs in execution order.

        Uses the resolved query form of each sub-question so placeholder
        references never leak into downstream prompts.
        """
        pairs = []
        for step in self.steps:
            lang = step.answer.lang if step.answer.lang in step.texts else sorted(step.texts)[0]
            question = step.queries.get(lang, step.texts[lang])
            pairs.append((question, step.answer.text))
        return pairs

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "qid": self.qid,
            "dataset": self.dataset,
            "question": self.question,
            "lang": self.lang,
            "mode": self.mode,
            "sequence": list(self.sequence),
            "graphs": self.graphs,
            "steps": [
                {
                    "node_id": s.node_id,
                    "origin": s.origin,
                    "texts": dict(sorted(s.texts.items())),
                    "queries": dict(sorted(s.queries.items())),
                    "retrieved": dict(sorted(s.retrieved.items())),
                    "candidates": [
                        {"text": c.text, "lang": c.lang,
                         "supporting_docs": list(c.supporting_docs)}
                        for c in s.candidates
                    ],
                    "judge": {"verdict": s.judge_verdict, "method": s.judge_method},
                    "regen_attempts": [
                        {"text": a.text, "accepted": a.accepted} for a in s.regen_attempts
                    ],
                    "low_confidence": s.low_confidence,
                    "answer": {"text": s.answer.text, "lang": s.answer.lang},
                    "prompts": dict(sorted(s.prompts.items())),
                    "completions": dict(sorted(s.completions.items())),
                }
                for s in self.steps
            ],
            "synthesis": None if self.synthesis is None else {
                "lang": self.synthesis.lang,
                "retrieved": list(self.synthesis.retrieved),
                "prompt": self.synthesis.prompt,
                "completion": self.synthesis.completion,
            },
            "final_answer": self.final_answer,
            "stage_calls": dict(sorted(self.stage_calls.items())),
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=2)


def trace_filename(dataset: str, lang: str, qid: str) -> str:
    return f"{dataset}.{lang}.{qid}.trace.json"


def write_trace(trace: ReasoningTrace, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / trace_filename(trace.dataset or "run", trace.lang, trace.qid or "q")
    path.write_text(trace.to_json() + "\n", encoding="utf-8")
    return path


# --- query formation -------------------------------------------------------

_PLACEHOLDER = re.compile(r"<(\d+)>")


def _text_namespace(graph: SubQuestionGraph, node: QNode, lang: str) -> str:
    """Id namespace that `<k>` placeholders in this node's `lang` text refer to.

    A node's own text references its own id prefix; a phrasing absorbed at
    fusion time references the absorbed node's prefix, recoverable through the
    graph's alias map.
    """
    own = id_prefix(node.id)
    if not graph.prefixes:
        return own
    if graph.prefixes.get(own) == lang:
        return own
    for absorbed, survivor in sorted(graph.aliases.items()):
        if survivor == node.id and graph.prefixes.get(id_prefix(absorbed)) == lang:
            return id_prefix(absorbed)
    for prefix in sorted(graph.prefixes):
        if graph.prefixes[prefix] == lang:
            return prefix
    return own


def combine(prev_answers: dict[str, str], node: QNode, lang: str,
            graph: SubQuestionGraph, prev_in_sequence: str | None = None) -> str:
    """Form the retrieval query for one node in one language.

    `<k>` placeholders are replaced by the referenced dependency's answer; a
    placeholder whose dependency has no answer falls back to the answer of the
    node solved immediately before this one, and stays verbatim if there is no
    such answer either. Placeholder-free text with dependencies gets a
    "Given: question → answer" suffix per dependency instead.
    """
    text = node.texts[lang]
    ns = _text_namespace(graph, node, lang)

    def _sub(match: re.Match) -> str:
        ref = graph.resolve(f"{ns}:{match.group(1)}")
        answer = prev_answers.get(ref)
        if answer is None:
            answer = prev_in_sequence
        return answer if answer is not None else match.group(0)

    replaced, n_found = _PLACEHOLDER.subn(_sub, text)
    if n_found:
        return replaced
    parts = [text]
    for dep in sorted(graph.predecessors(node.id)):
        answer = prev_answers.get(dep)
        if answer is None:
            continue
        dep_node = graph.nodes[dep]
        dep_q = dep_node.texts.get(lang, dep_node.texts[sorted(dep_node.texts)[0]])
        parts.append(f"Given: {dep_q} → {answer}")
    return " ".join(parts)


# --- judge / select / regen -------------------------------------------------

_PUNCT = _string.punctuation + "“”‘’。，"


def first_token_is_yes(reply: str) -> bool:
    tokens = reply.strip().split()
    if not tokens:
        return False
    return tokens[0].strip(_PUNCT).lower() == "yes"


def judge(a_l: CandidateAnswer, a_en: CandidateAnswer, node: QNode,
          chat: ChatBackend, *, prompts_dir: str | None = None,
          audit: dict | None = None) -> bool:
    """True iff the two candidates are consistent and sufficient.

    Identical candidate strings short-circuit to True with no backend call;
    otherwise the verdict is whether the judge reply starts with "yes".
    """
    if a_l.text.strip() and a_l.text.strip() == a_en.text.strip():
        if audit is not None:
            audit["method"] = "short_circuit"
        return True
    question = " / ".join(node.texts[lang] for lang in sorted(node.texts))
    prompt = render_prompt("judge", prompts_dir=prompts_dir, question=question,
                           answer_a=a_l.text or "(no answer)",
                           answer_b=a_en.text or "(no answer)")
    reply = chat.complete(user_request(prompt, tag="judge"))
    if audit is not None:
        audit["method"] = "llm"
        audit["prompt"] = prompt
        audit["completion"] = reply
    return first_token_is_yes(reply)


def sufficient(candidate: CandidateAnswer, node: QNode, chat: ChatBackend, *,
               prompts_dir: str | None = None, audit: dict | None = None) -> bool:
    """Single-candidate sufficiency check; blank candidates fail without a call."""
    if not candidate.text.strip():
        if audit is not None:
            audit["method"] = "short_circuit"
        return False
    question = " / ".join(node.texts[lang] for lang in sorted(node.texts))
    prompt = render_prompt("sufficiency", prompts_dir=prompts_dir,
                           question=question, answer=candidate.text)
    reply = chat.complete(user_request(prompt, tag="judge"))
    if audit is not None:
        audit["method"] = "llm"
        audit["prompt"] = prompt
        audit["completion"] = reply
    return first_token_is_yes(reply)


def select(a_l: CandidateAnswer, a_en: CandidateAnswer) -> CandidateAnswer:
    """Source-language candidate wins; English fills in when the source is blank."""
    if a_l.text.strip():
        return a_l
    if a_en.text.strip():
        return a_en
    raise BothEmptyError("both candidate answers are blank")


def _format_chain(pairs: list[tuple[str, str]]) -> str:
    if not pairs:
        return "(none)"
    return "\n".join(f"{i}. {q} → {a}" for i, (q, a) in enumerate(pairs, start=1))


def _format_contexts(docs: list[Document]) -> str:
    if not docs:
        return "(none)"
    return "\n".join(f"[{d.id}] {d.title}: {d.text}" for d in docs)


def regen(node: QNode, trace: ReasoningTrace, contexts: list[Document],
          candidates: list[CandidateAnswer], cfg: SolverConfig,
          chat: ChatBackend) -> tuple[CandidateAnswer, list[RegenAttempt], bool, dict, dict]:
    """Bounded self-correction loop.

    Re-prompts over the node's phrasings, the solved chain so far, and the
    union of this node's retrieved contexts; every attempt is re-checked for
    sufficiency. On exhaustion the source-language candidate (or the English
    one if the source is blank) is returned flagged low-confidence.

    Returns (answer, attempts, low_confidence, prompts, completions).
    """
    prompts: dict[str, str] = {}
    completions: dict[str, str] = {}
    attempts: list[RegenAttempt] = []
    questions = "\n".join(f"[{lang}] {node.texts[lang]}" for lang in sorted(node.texts))
    prompt = render_prompt("regen", prompts_dir=cfg.prompts_dir,
                           questions=questions,
                           chain=_format_chain(trace.chain_pairs()),
                           contexts=_format_contexts(contexts))
    source_lang = trace.lang if trace.lang in node.texts else sorted(node.texts)[0]
    for n in range(1, cfg.max_regen + 1):
        reply = chat.complete(user_request(prompt, tag="regen")).strip()
        prompts[f"regen.{n}"] = prompt
        completions[f"regen.{n}"] = reply
        candidate = CandidateAnswer(text=reply, lang=source_lang,
                                    supporting_docs=[d.id for d in contexts],
                                    node_id=node.id)
        audit: dict = {}
        ok = sufficient(candidate, node, chat, prompts_dir=cfg.prompts_dir, audit=audit)
        if "prompt" in audit:
            prompts[f"sufficiency.{n}"] = audit["prompt"]
            completions[f"sufficiency.{n}"] = audit["completion"]
        attempts.append(RegenAttempt(text=reply, accepted=ok))
        if ok:
            return candidate, attempts, False, prompts, completions
    by_lang = {c.lang: c for c in candidates}
    fallback = by_lang.get(source_lang)
    if fallback is None or not fallback.text.strip():
        for lang in sorted(by_lang):
            if by_lang[lang].text.strip():
                fallback = by_lang[lang]
                break
    if fallback is None:
        fallback = candidates[0]
    return fallback, attempts, True, prompts, completions


# --- node solving -----------------------------------------------------------

def _node_langs(node: QNode, source_lang: str) -> list[str]:
    langs = [lang for lang in (source_lang,) if lang in node.texts]
    langs += sorted(lang for lang in node.texts if lang != source_lang)
    return langs


def solve_node(node: QNode, graph: SubQuestionGraph, trace: ReasoningTrace,
               indexes: dict[str, CorpusIndex], cfg: SolverConfig,
               backends: Backends) -> CandidateAnswer:
    """Answer one node and append its step record to the trace."""
    prev_answers = trace.solved_answers()
    prev_in_seq = trace.steps[-1].answer.text if trace.steps else None
    langs = _node_langs(node, trace.lang)

    queries: dict[str, str] = {}
    retrieved: dict[str, list[str]] = {}
    candidates: list[CandidateAnswer] = []
    context_docs: list[Document] = []
    seen_docs: set[str] = set()
    prompts: dict[str, str] = {}
    completions: dict[str, str] = {}

    for lang in langs:
        if lang not in indexes:
            raise MissingIndexError(lang)
        query = combine(prev_answers, node, lang, graph, prev_in_seq)
        queries[lang] = query
        hits = retrieve(indexes[lang], query, cfg.k, backends.embed)
        retrieved[lang] = [doc.id for doc, _ in hits]
        for doc, _ in hits:
            if doc.id not in seen_docs:
                seen_docs.add(doc.id)
                context_docs.append(doc)
        prompt = render_prompt("answer", prompts_dir=cfg.prompts_dir, question=query,
                               contexts=_format_contexts([doc for doc, _ in hits]))
        reply = backends.chat.complete(user_request(prompt, tag="answer")).strip()
        prompts[f"answer.{lang}"] = prompt
        completions[f"answer.{lang}"] = reply
        candidates.append(CandidateAnswer(text=reply, lang=lang,
                                          supporting_docs=[doc.id for doc, _ in hits],
                                          node_id=node.id))

    audit: dict = {}
    regen_attempts: list[RegenAttempt] = []
    low_confidence = False
    if len(candidates) >= 2:
        verdict = judge(candidates[0], candidates[1], node, backends.chat,
                        prompts_dir=cfg.prompts_dir, audit=audit)
        method = audit.get("method", "llm")
        if verdict:
            try:
                final = select(candidates[0], candidates[1])
            except BothEmptyError:
                verdict = False
        if not verdict:
            final, regen_attempts, low_confidence, rp, rc = regen(
                node, trace, context_docs, candidates, cfg, backends.chat)
            prompts.update(rp)
            completions.update(rc)
    else:
        verdict = sufficient(candidates[0], node, backends.chat,
                             prompts_dir=cfg.prompts_dir, audit=audit)
        method = "single" if audit.get("method") == "llm" else audit.get("method", "single")
        if verdict:
            final = candidates[0]
        else:
            final, regen_attempts, low_confidence, rp, rc = regen(
                node, trace, context_docs, candidates, cfg, backends.chat)
            prompts.update(rp)
            completions.update(rc)
    if "prompt" in audit:
        prompts["judge"] = audit["prompt"]
        completions["judge"] = audit["completion"]

    node.answer = NodeAnswer(text=final.text, lang=final.lang,
                             doc_ids=tuple(final.supporting_docs))
    trace.steps.append(SolveStep(
        node_id=node.id,
        origin=node.origin,
        texts=dict(node.texts),
        queries=queries,
        retrieved=retrieved,
        candidates=candidates,
        judge_verdict=verdict,
        judge_method=method,
        regen_attempts=regen_attempts,
        low_confidence=low_confidence,
        answer=final,
        prompts=prompts,
        completions=completions,
    ))
    return final


def synthesize_final(q: Query, trace: ReasoningTrace, index: CorpusIndex,
                     cfg: SolverConfig, backends: Backends) -> str:
    """Fuse the solved chain and a fresh retrieval into the final short answer."""
    hits = retrieve(index, q.text, cfg.k, backends.embed)
    prompt = render_prompt("synthesize", prompts_dir=cfg.prompts_dir,
                           question=q.text,
                           chain=_format_chain(trace.chain_pairs()),
                           contexts=_format_contexts([doc for doc, _ in hits]))
    reply = backends.chat.complete(user_request(prompt, tag="synthesize")).strip()
    trace.synthesis = SynthesisRecord(lang=index.lang,
                                      retrieved=[doc.id for doc, _ in hits],
                                      prompt=prompt, completion=reply)
    trace.final_answer = reply
    return reply


# --- full pipeline -----------------------------------------------------------

class _CountingChat:
    """Per-question stage accounting without touching the shared backend."""

    def __init__(self, inner: ChatBackend, counts: dict[str, int]):
        self._inner = inner
        self._counts = counts

    def complete(self, req):
        tag = req.tag or "untagged"
        self._counts[tag] = self._counts.get(tag, 0) + 1
        return self._inner.complete(req)


class _CountingEmbed:
    def __init__(self, inner: EmbedBackend, counts: dict[str, int]):
        self._inner = inner
        self._counts = counts

    def embed(self, req: EmbedRequest):
        self._counts["embed"] = self._counts.get("embed", 0) + 1
        return self._inner.embed(req)


def answer_question(q: Query, indexes: dict[str, CorpusIndex], cfg: SolverConfig,
                    backends: Backends, *, qid: str = "", dataset: str = "") -> ReasoningTrace:
    """Run one question through the configured pipeline mode and return its trace."""
    counts: dict[str, int] = {}
    counted = Backends(chat=_CountingChat(backends.chat, counts),
                       embed=_CountingEmbed(backends.embed, counts))
    trace = ReasoningTrace(question=q.text, lang=q.lang, mode=cfg.mode,
                           qid=qid, dataset=dataset)
    if cfg.mode == "full":
        _run_full(q, indexes, cfg, counted, trace)
    elif cfg.mode == "no_decompose":
        _run_no_decompose(q, indexes, cfg, counted, trace)
    elif cfg.mode == "no_fusion":
        _run_no_fusion(q, indexes, cfg, counted, trace)
    else:
        _run_translate_qa(q, indexes, cfg, counted, trace)
    trace.stage_calls = counts
    return trace


def _require_index(indexes: dict[str, CorpusIndex], lang: str) -> CorpusIndex:
    if lang not in indexes:
        raise MissingIndexError(lang)
    return indexes[lang]


def _solve_sequence(graph: SubQuestionGraph, order: list[str], trace: ReasoningTrace,
                    indexes: dict[str, CorpusIndex], cfg: SolverConfig,
                    backends: Backends) -> None:
    trace.sequence = list(order)
    for node_id in order:
        solve_node(graph.nodes[node_id], graph, trace, indexes, cfg, backends)


def _run_full(q: Query, indexes, cfg, backends, trace) -> None:
    _require_index(indexes, q.lang)
    _require_index(indexes, "en")
    g_l, g_en = plan(q, backends.chat, node_cap=cfg.node_cap, retries=cfg.retries,
                     prompts_dir=cfg.prompts_dir)
    trace.graphs["source"] = g_l.to_json()
    trace.graphs["english"] = g_en.to_json()
    fused = fuse(g_l, g_en, FusionConfig(tau=cfg.tau), backends.embed)
    trace.graphs["fused"] = fused.to_json()
    _solve_sequence(fused, sequence(fused), trace, indexes, cfg, backends)
    synthesize_final(q, trace, indexes[q.lang], cfg, backends)


def _run_no_decompose(q: Query, indexes, cfg, backends, trace) -> None:
    """Vanilla RAG: one retrieval plus one answer call, no graph machinery."""
    index = _require_index(indexes, q.lang)
    node = QNode(id=f"{q.lang}:1", texts={q.lang: q.text}, origin="source")
    hits = retrieve(index, q.text, cfg.k, backends.embed)
    prompt = render_prompt("answer", prompts_dir=cfg.prompts_dir, question=q.text,
                           contexts=_format_contexts([doc for doc, _ in hits]))
    reply = backends.chat.complete(user_request(prompt, tag="answer")).strip()
    candidate = CandidateAnswer(text=reply, lang=q.lang,
                                supporting_docs=[doc.id for doc, _ in hits],
                                node_id=node.id)
    trace.sequence = [node.id]
    trace.steps.append(SolveStep(
        node_id=node.id, origin=node.origin, texts=dict(node.texts),
        queries={q.lang: q.text}, retrieved={q.lang: [doc.id for doc, _ in hits]},
        candidates=[candidate], judge_verdict=True, judge_method="none",
        regen_attempts=[], low_confidence=False, answer=candidate,
        prompts={f"answer.{q.lang}": prompt}, completions={f"answer.{q.lang}": reply},
    ))
    trace.final_answer = reply


def _run_no_fusion(q: Query, indexes, cfg, backends, trace) -> None:
    """Both plans are built, but only the source-language graph is solved."""
    _require_index(indexes, q.lang)
    g_l, g_en = plan(q, backends.chat, node_cap=cfg.node_cap, retries=cfg.retries,
                     prompts_dir=cfg.prompts_dir)
    trace.graphs["source"] = g_l.to_json()
    trace.graphs["english"] = g_en.to_json()
    _solve_sequence(g_l, g_l.topological_sort(), trace, indexes, cfg, backends)
    synthesize_final(q, trace, indexes[q.lang], cfg, backends)


def _run_translate_qa(q: Query, indexes, cfg, backends, trace) -> None:
    """Reason entirely in English, then translate the final answer back."""
    _require_index(indexes, "en")
    q_en = translate_query(q, "en", backends.chat, prompts_dir=cfg.prompts_dir)
    graph = decompose(q_en, backends.chat, id_prefix="en", origin="english",
                      node_cap=cfg.node_cap, retries=cfg.retries,
                      prompts_dir=cfg.prompts_dir)
    trace.graphs["english"] = graph.to_json()
    _solve_sequence(graph, graph.topological_sort(), trace, indexes, cfg, backends)
    final_en = synthesize_final(q_en, trace, indexes["en"], cfg, backends)
    if final_en.strip() and q.lang != "en":
        back = translate_query(Query(text=final_en, lang="en"), q.lang,
                               backends.chat, prompts_dir=cfg.prompts_dir)
        trace.final_answer = back.text
    else:
        trace.final_answer = final_en
