"""Answer normalization, EM/F1 scoring, and the benchmark runner.

Normalization lowercases, strips all Unicode punctuation, removes English
articles (for English only), and collapses whitespace. F1 tokenizes on
whitespace except for Chinese and Thai, which score per character.
"""

from __future__ import annotations

import json
import logging
import re
import time
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedRecordError
from .planning import Query
from .retrieval import CorpusIndex
from .solver import Backends, ReasoningTrace, SolverConfig, answer_question, write_trace

logger = logging.getLogger(__name__)

CHAR_TOKEN_LANGS = {"zh", "th"}

_EN_ARTICLES = re.compile(r"\b(a|an|the)\b")
_WHITESPACE = re.compile(r"\s+")


def _strip_punct(text: str) -> str:
    return "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))


def normalize_answer(text: str, lang: str) -> str:
    text = _strip_punct(text.lower())
    if lang == "en":
        text = _EN_ARTICLES.sub(" ", text)
    return _WHITESPACE.sub(" ", text).strip()


def _tokens(normalized: str, lang: str) -> list[str]:
    if lang in CHAR_TOKEN_LANGS:
        return [ch for ch in normalized if not ch.isspace()]
    return normalized.split()


def em_score(pred: str, golds: list[str], lang: str) -> int:
    norm_pred = normalize_answer(pred, lang)
    return int(any(norm_pred == normalize_answer(g, lang) for g in golds))


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def f1_score(pred: str, golds: list[str], lang: str) -> float:
    pred_tokens = _tokens(normalize_answer(pred, lang), lang)
    return max(_f1_single(pred_tokens, _tokens(normalize_answer(g, lang), lang))
               for g in golds)


# --- benchmark loading -------------------------------------------------------

@dataclass
class BenchmarkItem:
    qid: str
    questions: dict[str, str]
    gold_answers: list[str]
    gold_lang: str = "en"

    def __post_init__(self) -> None:
        if not self.questions:
            raise ValueError(f"item {self.qid!r} has no questions")
        if not self.gold_answers:
            raise ValueError(f"item {self.qid!r} has no gold answers")


def load_benchmark(path: str | Path) -> list[BenchmarkItem]:
    """Read benchmark JSONL: {"qid", "questions": {lang: str}, "answers": [str]}."""
    items: list[BenchmarkItem] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                items.append(BenchmarkItem(
                    qid=str(rec["qid"]),
                    questions={k: v for k, v in rec["questions"].items()},
                    gold_answers=[str(a) for a in rec["answers"]],
                    gold_lang=rec.get("gold_lang", "en"),
                ))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise MalformedRecordError(line_no, str(exc)) from exc
    return items


# --- benchmark running -------------------------------------------------------

@dataclass
class EvalRecord:
    qid: str
    lang: str
    prediction: str
    em: int
    f1: float
    latency_ms: int
    token_usage: dict[str, int] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "qid": self.qid,
            "lang": self.lang,
            "prediction": self.prediction,
            "em": self.em,
            "f1": round(self.f1, 6),
            "latency_ms": self.latency_ms,
            "token_usage": dict(sorted(self.token_usage.items())),
            "error": self.error,
        }


@dataclass
class BenchmarkReport:
    dataset: str
    lang: str
    mode: str
    n: int
    em: float
    f1: float
    errors: int

    def row(self) -> str:
        return (f"{self.dataset} {self.lang} {self.mode} n={self.n} "
                f"EM {self.em * 100:.1f} F1 {self.f1 * 100:.1f} errors={self.errors}")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset, "lang": self.lang, "mode": self.mode,
            "n": self.n, "em": round(self.em, 6), "f1": round(self.f1, 6),
            "errors": self.errors,
        }


def _run_item(item: BenchmarkItem, lang: str, indexes: dict[str, CorpusIndex],
              cfg: SolverConfig, backends: Backends, dataset: str,
              out_dir: Path | None) -> tuple[EvalRecord, ReasoningTrace | None]:
    start = time.monotonic()
    question = item.questions.get(lang)
    if question is None:
        record = EvalRecord(qid=item.qid, lang=lang, prediction="", em=0, f1=0.0,
                            latency_ms=0, error=f"no question for lang {lang!r}")
        return record, None
    try:
        trace = answer_question(Query(text=question, lang=lang), indexes, cfg,
                                backends, qid=item.qid, dataset=dataset)
    except Exception as exc:
        logger.warning("question %s failed: %s", item.qid, exc)
        latency = int((time.monotonic() - start) * 1000)
        trace = ReasoningTrace(question=question, lang=lang, mode=cfg.mode,
                               qid=item.qid, dataset=dataset,
                               error=f"{type(exc).__name__}: {exc}")
        if out_dir is not None:
            write_trace(trace, out_dir)
        record = EvalRecord(qid=item.qid, lang=lang, prediction="", em=0, f1=0.0,
                            latency_ms=latency, error=trace.error)
        return record, trace
    latency = int((time.monotonic() - start) * 1000)
    if out_dir is not None:
        write_trace(trace, out_dir)
    pred = trace.final_answer
    record = EvalRecord(
        qid=item.qid, lang=lang, prediction=pred,
        em=em_score(pred, item.gold_answers, item.gold_lang),
        f1=f1_score(pred, item.gold_answers, item.gold_lang),
        latency_ms=latency,
        token_usage=dict(trace.stage_calls),
    )
    return record, trace


def run_benchmark(items: list[BenchmarkItem], lang: str,
                  indexes: dict[str, CorpusIndex], cfg: SolverConfig,
                  backends: Backends, out_dir: str | Path | None = None, *,
                  dataset: str = "bench", jobs: int = 4) -> BenchmarkReport:
    """Answer and score every item; per-item failures are contained.

    Writes `records.<lang>.jsonl` and `report.json` into `out_dir` along with
    one trace file per question.
    """
    if not items:
        raise ValueError("benchmark is empty")
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    results: list[EvalRecord | None] = [None] * len(items)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_run_item, item, lang, indexes, cfg, backends,
                            dataset, out_path): i
                for i, item in enumerate(items)
            }
            for future, i in futures.items():
                results[i] = future.result()[0]
    else:
        for i, item in enumerate(items):
            results[i] = _run_item(item, lang, indexes, cfg, backends,
                                   dataset, out_path)[0]

    records = [r for r in results if r is not None]
    report = BenchmarkReport(
        dataset=dataset, lang=lang, mode=cfg.mode, n=len(records),
        em=sum(r.em for r in records) / len(records),
        f1=sum(r.f1 for r in records) / len(records),
        errors=sum(1 for r in records if r.error),
    )
    if out_path is not None:
        with (out_path / f"records.{lang}.jsonl").open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record.to_dict(), sort_keys=True,
                                    ensure_ascii=False) + "\n")
        (out_path / "report.json").write_text(
            json.dumps(report.to_dict(), sort_keys=True, ensure_ascii=False,
                       indent=2) + "\n",
            encoding="utf-8")
    return report
