"""Shared fixtures: scripted backends, tiny corpora, and the golden scenario.

The golden scenario is a German question whose source plan has 3 nodes and
whose English plan has 4; exactly one cross-lingual pair clears the fusion
threshold, and the fused node's candidates disagree once, forcing a single
regeneration. Everything is driven by substring-keyed scripted replies and a
fixed embedding table, so runs are fully offline and byte-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from dapt.backends import ScriptedChat, ScriptedEmbed
from dapt.solver import Backends

Q_DE = "In welchem Land wurde der Ehepartner des Regisseurs von Inception geboren?"
Q_EN = "In which country was the spouse of the director of Inception born?"

DE_SUBS = [
    "Wer ist der Regisseur von Inception?",
    "Wer ist der Ehepartner von <1>?",
    "In welchem Land wurde <2> geboren?",
]
EN_SUBS = [
    "What is Inception?",
    "Who directed Inception?",
    "Who is the spouse of <2>?",
    "In which country was <3> born?",
]

DE_DECOMP = json.dumps({"sub_questions": DE_SUBS, "dependencies": [[1, 2], [2, 3]]})
EN_DECOMP = json.dumps({"sub_questions": EN_SUBS, "dependencies": [[1, 2], [2, 3], [3, 4]]})

FINAL_ANSWER = "England"

DE_DOCS = [
    {"id": "de-doc-1", "title": "Inception",
     "text": "Inception ist ein Science-Fiction-Film unter der Regie von Christopher Nolan."},
    {"id": "de-doc-2", "title": "Christopher Nolan",
     "text": "Christopher Nolan ist mit der Produzentin Emma Thomas verheiratet."},
    {"id": "de-doc-3", "title": "Emma Thomas",
     "text": "Emma Thomas wurde in London, England, geboren."},
]
EN_DOCS = [
    {"id": "en-doc-1", "title": "Inception",
     "text": "Inception is a science fiction film directed by Christopher Nolan."},
    {"id": "en-doc-2", "title": "Christopher Nolan",
     "text": "Christopher Nolan is married to producer Emma Thomas."},
    {"id": "en-doc-3", "title": "Emma Thomas",
     "text": "Emma Thomas was born in London, England."},
]


def _unit(index: int, dim: int = 8) -> list[float]:
    vec = [0.0] * dim
    vec[index] = 1.0
    return vec


def golden_chat_spec() -> dict:
    """Scripted replies covering every mode of the golden scenario."""
    near = 0.93  # similarity of the one fused pair; set in golden_embed_spec
    assert near > 0.8
    rules = [
        {"match": ["Translate the question below", Q_DE], "reply": Q_EN},
        {"match": ["Translate the question below", FINAL_ANSWER], "reply": FINAL_ANSWER},
        {"match": ["Break the question into", Q_DE], "reply": DE_DECOMP},
        {"match": ["Break the question into", Q_EN], "reply": EN_DECOMP},
        # fused node: candidates disagree, judge rejects, one regen fixes it
        {"match": ["Decide whether the two candidate answers",
                   "Candidate A: Christopher Nolan", "Candidate B: Nolan"],
         "reply": "no"},
        {"match": ["Reconsider the sub-question", DE_SUBS[0]],
         "reply": "Christopher Nolan"},
        # per-query answers; more specific questions come before substrings of them
        {"match": ["Answer the question", EN_SUBS[1]], "reply": "Nolan"},
        {"match": ["Answer the question", DE_SUBS[0]], "reply": "Christopher Nolan"},
        {"match": ["Answer the question", EN_SUBS[0]], "reply": "a science fiction film"},
        {"match": ["Answer the question", "Wer ist der Ehepartner von Christopher Nolan?"],
         "reply": "Emma Thomas"},
        {"match": ["Answer the question", "Who is the spouse of Christopher Nolan?"],
         "reply": "Emma Thomas"},
        {"match": ["Answer the question", "Who is the spouse of Nolan?"],
         "reply": "Emma Thomas"},
        {"match": ["Answer the question", "In welchem Land wurde Emma Thomas geboren?"],
         "reply": FINAL_ANSWER},
        {"match": ["Answer the question", "In which country was Emma Thomas born?"],
         "reply": FINAL_ANSWER},
        {"match": ["Answer the question", Q_DE], "reply": FINAL_ANSWER},
        {"match": ["Give the final answer", Q_DE], "reply": FINAL_ANSWER},
        {"match": ["Give the final answer", Q_EN], "reply": FINAL_ANSWER},
        {"match": ["Candidate answer:"], "reply": "Yes, looks sufficient."},
    ]
    return {"rules": rules, "default": None}


def golden_embed_spec() -> dict:
    """Node-text vectors: one near pair (0.93), everything else orthogonal."""
    near = 0.93
    table = {
        DE_SUBS[0]: _unit(0),
        EN_SUBS[1]: [near, math.sqrt(1 - near * near), 0, 0, 0, 0, 0, 0],
        DE_SUBS[1]: _unit(2),
        DE_SUBS[2]: _unit(3),
        EN_SUBS[0]: _unit(4),
        EN_SUBS[2]: _unit(5),
        EN_SUBS[3]: _unit(6),
    }
    return {"dimension": 8, "table": table, "strict": False}


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


@dataclass
class GoldenEnv:
    root: Path
    corpus_dir: Path
    dataset: str
    script_path: Path
    question: str = Q_DE
    lang: str = "de"
    final_answer: str = FINAL_ANSWER
    chat: ScriptedChat = field(default=None)  # fresh pair per env
    embed: ScriptedEmbed = field(default=None)

    @property
    def backends(self) -> Backends:
        return Backends(chat=self.chat, embed=self.embed)

    def fresh_backends(self) -> Backends:
        return Backends(chat=ScriptedChat.from_spec(golden_chat_spec()),
                        embed=ScriptedEmbed.from_spec(golden_embed_spec()))


@pytest.fixture
def golden_env(tmp_path: Path) -> GoldenEnv:
    corpus_dir = tmp_path / "corpora"
    write_jsonl(corpus_dir / "wiki.de.jsonl", DE_DOCS)
    write_jsonl(corpus_dir / "wiki.en.jsonl", EN_DOCS)
    script = {"chat": golden_chat_spec(), "embed": golden_embed_spec()}
    script_path = tmp_path / "golden_script.json"
    script_path.write_text(json.dumps(script, ensure_ascii=False, indent=1),
                           encoding="utf-8")
    return GoldenEnv(
        root=tmp_path,
        corpus_dir=corpus_dir,
        dataset="wiki",
        script_path=script_path,
        chat=ScriptedChat.from_spec(golden_chat_spec()),
        embed=ScriptedEmbed.from_spec(golden_embed_spec()),
    )


# --- synthetic oracle benchmark ------------------------------------------------

def oracle_benchmark(n: int = 10) -> tuple[list[dict], dict, dict, list[dict], list[dict]]:
    """n-question bilingual benchmark where scripted replies equal the golds.

    Returns (items, chat_spec, embed_spec, de_docs, en_docs).
    """
    items = []
    rules = []
    table: dict[str, list[float]] = {}
    dim = 16
    assert n <= dim
    for k in range(1, n + 1):
        q_de = f"Frage Nummer {k}?"
        q_en = f"Question number {k}?"
        gold = f"antwort{k:02d}"  # fixed width keeps rule substrings collision-free
        items.append({"qid": f"q{k:03d}", "questions": {"de": q_de, "en": q_en},
                      "answers": [gold], "gold_lang": "de"})
        decomp_de = json.dumps({"sub_questions": [q_de], "dependencies": []})
        decomp_en = json.dumps({"sub_questions": [q_en], "dependencies": []})
        rules += [
            {"match": ["Translate the question below", q_de], "reply": q_en},
            {"match": ["Translate the question below", gold], "reply": gold},
            {"match": ["Break the question into", q_de], "reply": decomp_de},
            {"match": ["Break the question into", q_en], "reply": decomp_en},
            {"match": ["Answer the question", q_de], "reply": gold},
            {"match": ["Answer the question", q_en], "reply": gold},
            {"match": ["Give the final answer", q_de], "reply": gold},
            {"match": ["Give the final answer", q_en], "reply": gold},
        ]
        vec = [0.0] * dim
        vec[k - 1] = 1.0
        table[q_de] = vec
        table[q_en] = vec
    rules.append({"match": ["Candidate answer:"], "reply": "yes"})
    chat_spec = {"rules": rules, "default": None}
    embed_spec = {"dimension": dim, "table": table, "strict": False}
    de_docs = [{"id": "d1", "title": "t", "text": "Ein Dokument ohne besondere Rolle."}]
    en_docs = [{"id": "e1", "title": "t", "text": "A document with no special role."}]
    return items, chat_spec, embed_spec, de_docs, en_docs


@dataclass
class BenchEnv:
    root: Path
    corpus_dir: Path
    dataset: str
    benchmark_path: Path
    script_path: Path
    items: list[dict]


@pytest.fixture
def bench_env(tmp_path: Path) -> BenchEnv:
    items, chat_spec, embed_spec, de_docs, en_docs = oracle_benchmark(10)
    corpus_dir = tmp_path / "corpora"
    write_jsonl(corpus_dir / "synth.de.jsonl", de_docs)
    write_jsonl(corpus_dir / "synth.en.jsonl", en_docs)
    bench_path = write_jsonl(tmp_path / "bench.jsonl", items)
    script_path = tmp_path / "bench_script.json"
    script_path.write_text(json.dumps({"chat": chat_spec, "embed": embed_spec},
                                      ensure_ascii=False), encoding="utf-8")
    return BenchEnv(root=tmp_path, corpus_dir=corpus_dir, dataset="synth",
                    benchmark_path=bench_path, script_path=script_path, items=items)
