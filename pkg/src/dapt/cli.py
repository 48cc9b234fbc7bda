"""Command-line front end: `dapt index`, `dapt ask`, `dapt bench`.

stdout carries only the answer or report rows; everything else goes to
stderr. Exit codes: 0 success, 1 pipeline failure, 2 bad input or missing
files/indexes.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

from .backends import HttpChatBackend, HttpEmbedBackend, ReplayCache, ScriptedChat, ScriptedEmbed
from .config import RunConfig, resolve_config
from .errors import DaptError, MissingIndexError
from .evaluation import load_benchmark, run_benchmark
from .planning import Query
from .retrieval import CorpusIndex, build_index
from .solver import Backends, SolverConfig, answer_question, write_trace

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--tau", type=float, default=None,
                        help="fusion similarity threshold (default 0.8)")
    parser.add_argument("--top-k", dest="top_k", type=int, default=None,
                        help="retrieved passages per query (default 3)")
    parser.add_argument("--mode", choices=["full", "no_decompose", "no_fusion", "translate_qa"],
                        default=None, help="pipeline variant (default full)")
    parser.add_argument("--lang", default=None, help="question language tag")
    parser.add_argument("--max-regen", dest="max_regen", type=int, default=None,
                        help="regeneration budget per node (default 2)")
    parser.add_argument("--replay", default=None,
                        help="replay cache file; forces fully offline runs")
    parser.add_argument("--record", default=None, help="record cache file")
    parser.add_argument("--out", default=None, help="output directory (default ./out)")
    parser.add_argument("--jobs", type=int, default=None,
                        help="benchmark worker pool size (default 4)")
    parser.add_argument("--corpus-dir", dest="corpus_dir", default=None,
                        help="directory holding <dataset>.<lang>.jsonl corpora")
    parser.add_argument("--dataset", default=None, help="corpus/dataset name")
    parser.add_argument("--chat-backend", dest="chat_backend", default=None,
                        help="'http' or 'scripted:<file>'")
    parser.add_argument("--embed-backend", dest="embed_backend", default=None,
                        help="'http', 'hash', or 'scripted:<file>'")
    parser.add_argument("--prompts-dir", dest="prompts_dir", default=None,
                        help="override packaged prompt templates")


_CONFIG_KEYS = ("tau", "top_k", "max_regen", "mode", "lang", "jobs", "out",
                "corpus_dir", "dataset", "replay", "record", "chat_backend",
                "embed_backend", "prompts_dir")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    flags = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    return resolve_config(args.config, flags)


def build_backends(cfg: RunConfig, *, need_chat: bool = True) -> Backends:
    """Wire chat/embed backends per config, honoring record/replay wrapping."""
    if cfg.replay:
        cache = ReplayCache(cfg.replay, mode="replay")
        return Backends(chat=cache, embed=cache)
    if not need_chat:
        chat = None
    elif cfg.chat_backend.startswith("scripted:"):
        chat = ScriptedChat.from_file(cfg.chat_backend.split(":", 1)[1])
    elif cfg.chat_backend == "http":
        chat = HttpChatBackend()
    else:
        raise ValueError(f"unknown chat backend {cfg.chat_backend!r}")
    if cfg.embed_backend.startswith("scripted:"):
        embed = ScriptedEmbed.from_file(cfg.embed_backend.split(":", 1)[1])
    elif cfg.embed_backend == "hash":
        embed = ScriptedEmbed({}, dimension=32)
    elif cfg.embed_backend == "http":
        embed = HttpEmbedBackend()
    else:
        raise ValueError(f"unknown embed backend {cfg.embed_backend!r}")
    if cfg.record:
        cache = ReplayCache(cfg.record, mode="record", chat=chat, embed=embed)
        return Backends(chat=cache, embed=cache)
    return Backends(chat=chat, embed=embed)


def _solver_config(cfg: RunConfig, mode: str | None = None) -> SolverConfig:
    return SolverConfig(k=cfg.top_k, max_regen=cfg.max_regen, mode=mode or cfg.mode,
                        tau=cfg.tau, node_cap=cfg.node_cap, retries=cfg.retries,
                        prompts_dir=cfg.prompts_dir)


def _required_langs(mode: str, lang: str) -> set[str]:
    if mode == "full":
        return {lang, "en"}
    if mode == "translate_qa":
        return {"en"}
    return {lang}


def _load_indexes(cfg: RunConfig, langs: set[str], backends: Backends) -> dict[str, CorpusIndex]:
    indexes: dict[str, CorpusIndex] = {}
    for lang in sorted(langs):
        path = cfg.corpus_path(lang)
        if not path.exists():
            raise MissingIndexError(lang)
        indexes[lang] = build_index(path, lang, backends.embed)
    return indexes


def cmd_index(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    corpus = Path(args.corpus)
    if not corpus.exists():
        print(f"error: corpus file not found: {corpus}", file=sys.stderr)
        return EXIT_USAGE
    try:
        backends = build_backends(cfg, need_chat=False)
        index = build_index(corpus, args.index_lang, backends.embed)
    except DaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"indexed {len(index)} docs (dim {index.dimension})")
    return EXIT_OK


def cmd_ask(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    q = Query(text=args.question, lang=cfg.lang)
    try:
        backends = build_backends(cfg)
        indexes = _load_indexes(cfg, _required_langs(cfg.mode, q.lang), backends)
    except (DaptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        qid = hashlib.sha256(q.text.encode("utf-8")).hexdigest()[:10]
        trace = answer_question(q, indexes, _solver_config(cfg), backends,
                                qid=qid, dataset=cfg.dataset)
        path = write_trace(trace, cfg.out)
    except (DaptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    logger.info("trace written to %s", path)
    print(trace.final_answer)
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    bench_path = Path(args.benchmark)
    if not bench_path.exists():
        print(f"error: benchmark file not found: {bench_path}", file=sys.stderr)
        return EXIT_USAGE
    try:
        items = load_benchmark(bench_path)
    except DaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not items:
        print("error: benchmark file is empty", file=sys.stderr)
        return EXIT_USAGE
    modes = [m.strip() for m in (args.modes or cfg.mode).split(",") if m.strip()]
    try:
        backends = build_backends(cfg)
        langs: set[str] = set()
        for mode in modes:
            langs |= _required_langs(mode, cfg.lang)
        indexes = _load_indexes(cfg, langs, backends)
    except (DaptError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status = EXIT_OK
    for mode in modes:
        out_dir = Path(cfg.out) / mode if len(modes) > 1 else Path(cfg.out)
        try:
            report = run_benchmark(items, cfg.lang, indexes,
                                   _solver_config(cfg, mode), backends,
                                   out_dir, dataset=bench_path.stem, jobs=cfg.jobs)
        except OSError as exc:
            print(f"error: cannot write report: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        print(report.row())
        if report.errors:
            status = EXIT_FAILURE
    return status


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dapt",
        description="Bilingual dual-path pipeline for multilingual multi-hop QA.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build and persist a corpus index")
    p_index.add_argument("corpus", help="corpus JSONL file")
    p_index.add_argument("index_lang", metavar="lang", help="corpus language tag")
    _add_shared_flags(p_index)
    p_index.set_defaults(func=cmd_index)

    p_ask = sub.add_parser("ask", help="answer one question")
    p_ask.add_argument("question")
    _add_shared_flags(p_ask)
    p_ask.set_defaults(func=cmd_ask)

    p_bench = sub.add_parser("bench", help="run a benchmark file")
    p_bench.add_argument("benchmark", help="benchmark JSONL file")
    p_bench.add_argument("--modes", default=None,
                         help="comma-separated pipeline modes to sweep")
    _add_shared_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
