"""Query formation, judge/select/regen, node solving, and full pipeline modes."""

from __future__ import annotations

import json

import pytest

from dapt.backends import ScriptedChat, ScriptedEmbed
from dapt.errors import BothEmptyError, MissingIndexError
from dapt.planning import Query
from dapt.qgraph import QNode, SubQuestionGraph, build_graph
from dapt.retrieval import build_index
from dapt.solver import (
    Backends,
    CandidateAnswer,
    ReasoningTrace,
    SolverConfig,
    answer_question,
    combine,
    first_token_is_yes,
    judge,
    regen,
    select,
    solve_node,
    sufficient,
    synthesize_final,
)

from conftest import write_jsonl


def candidate(text, lang="de", node_id="de:1"):
    return CandidateAnswer(text=text, lang=lang, supporting_docs=[], node_id=node_id)


def graph_with(nodes, edges=(), prefixes=None, aliases=None):
    g = build_graph(nodes, edges)
    g.prefixes.update(prefixes or {})
    g.aliases.update(aliases or {})
    return g


class TestCombine:
    def test_placeholder_substitution(self):
        g = graph_with([QNode("de:1", {"de": "Wer hat F gedreht?"}),
                        QNode("de:2", {"de": "Wann wurde <1> geboren?"})],
                       [("de:1", "de:2")], prefixes={"de": "de"})
        out = combine({"de:1": "Christopher Nolan"}, g.nodes["de:2"], "de", g)
        assert out == "Wann wurde Christopher Nolan geboren?"

    def test_no_placeholder_no_deps_is_identity(self):
        g = graph_with([QNode("de:1", {"de": "Wer hat F gedreht?"})], prefixes={"de": "de"})
        assert combine({}, g.nodes["de:1"], "de", g) == "Wer hat F gedreht?"

    def test_dependency_suffix_template(self):
        g = graph_with([QNode("de:1", {"de": "Who directed F?"}),
                        QNode("de:2", {"de": "When was the director born?"})],
                       [("de:1", "de:2")], prefixes={"de": "de"})
        out = combine({"de:1": "Nolan"}, g.nodes["de:2"], "de", g)
        assert out == "When was the director born? Given: Who directed F? → Nolan"

    def test_missing_dep_answer_falls_back_to_previous_in_sequence(self):
        g = graph_with([QNode("de:1", {"de": "A?"}), QNode("de:2", {"de": "B <1>?"})],
                       [("de:1", "de:2")], prefixes={"de": "de"})
        out = combine({}, g.nodes["de:2"], "de", g, prev_in_sequence="fallback")
        assert out == "B fallback?"

    def test_totally_unresolvable_placeholder_stays(self):
        g = graph_with([QNode("de:1", {"de": "B <1>?"})], prefixes={"de": "de"})
        assert combine({}, g.nodes["de:1"], "de", g) == "B <1>?"

    def test_alias_namespace_resolution_for_absorbed_text(self):
        # en:2 was absorbed into de:1; an english node's <2> must follow the alias
        g = graph_with(
            [QNode("de:1", {"de": "Wer?", "en": "Who directed F?"}, origin="fused"),
             QNode("en:3", {"en": "Who is the spouse of <2>?"}, origin="english")],
            [("de:1", "en:3")],
            prefixes={"de": "de", "en": "en"},
            aliases={"en:2": "de:1"})
        out = combine({"de:1": "Nolan"}, g.nodes["en:3"], "en", g)
        assert out == "Who is the spouse of Nolan?"

    def test_placeholder_inside_absorbed_english_text(self):
        # de:2 absorbed en:2 whose text holds <1>, i.e. a reference to en:1,
        # itself absorbed by de:1; both hops go through the alias map
        g = graph_with(
            [QNode("de:1", {"de": "Wer hat F gedreht?", "en": "Who directed F?"},
                   origin="fused"),
             QNode("de:2", {"de": "Wann wurde <1> geboren?", "en": "When was <1> born?"},
                   origin="fused")],
            [("de:1", "de:2")],
            prefixes={"de": "de", "en": "en"},
            aliases={"en:1": "de:1", "en:2": "de:2"})
        out = combine({"de:1": "Nolan"}, g.nodes["de:2"], "en", g)
        assert out == "When was Nolan born?"

    def test_multi_dependency_suffixes_in_id_order(self):
        g = graph_with([QNode("de:1", {"de": "A?"}), QNode("de:2", {"de": "B?"}),
                        QNode("de:3", {"de": "C?"})],
                       [("de:1", "de:3"), ("de:2", "de:3")], prefixes={"de": "de"})
        out = combine({"de:1": "x", "de:2": "y"}, g.nodes["de:3"], "de", g)
        assert out == "C? Given: A? → x Given: B? → y"


class TestJudgeSelect:
    def test_identical_candidates_short_circuit(self):
        chat = ScriptedChat([])  # would raise on any call
        node = QNode("de:1", {"de": "Wann?"})
        assert judge(candidate("1970"), candidate("1970", "en"), node, chat) is True
        assert chat.calls == []

    def test_scripted_no_is_false(self):
        chat = ScriptedChat.from_spec({"rules": [], "default": "no"})
        node = QNode("de:1", {"de": "Wann?"})
        assert judge(candidate("1970"), candidate("1985", "en"), node, chat) is False

    def test_first_token_parse(self):
        chat = ScriptedChat.from_spec({"rules": [], "default": "Yes, both state 1970."})
        node = QNode("de:1", {"de": "Wann?"})
        assert judge(candidate("1970"), candidate("early 1970", "en"), node, chat) is True

    @pytest.mark.parametrize("reply,expected", [
        ("yes", True), ("Yes.", True), ("YES!", True), ("Yes, both state 1970.", True),
        ("no", False), ("No, they differ.", False), ("maybe yes", False), ("", False),
        ("yesterday", False),
    ])
    def test_first_token_is_yes(self, reply, expected):
        assert first_token_is_yes(reply) is expected

    def test_select_prioritizes_source_language(self):
        a_l, a_en = candidate("1970", "de"), candidate("1970", "en")
        assert select(a_l, a_en) is a_l

    def test_select_falls_back_to_english(self):
        a_l, a_en = candidate("", "de"), candidate("1970", "en")
        assert select(a_l, a_en) is a_en

    def test_select_both_empty(self):
        with pytest.raises(BothEmptyError):
            select(candidate("", "de"), candidate("  ", "en"))

    def test_blank_candidate_insufficient_without_call(self):
        chat = ScriptedChat([])
        node = QNode("de:1", {"de": "Wann?"})
        assert sufficient(candidate(""), node, chat) is False
        assert chat.calls == []


class TestRegen:
    def make_trace(self):
        return ReasoningTrace(question="Q?", lang="de", mode="full")

    def test_first_attempt_accepted(self):
        chat = ScriptedChat.from_spec({"rules": [
            {"match": "Reconsider the sub-question", "reply": "1970"},
            {"match": "Candidate answer:", "reply": "yes"},
        ]})
        node = QNode("de:1", {"de": "Wann?"})
        answer, attempts, low, _, _ = regen(node, self.make_trace(), [],
                                            [candidate("1985")], SolverConfig(), chat)
        assert answer.text == "1970"
        assert len(attempts) == 1 and attempts[0].accepted
        assert low is False

    def test_zero_budget_falls_back_flagged(self):
        chat = ScriptedChat([])
        node = QNode("de:1", {"de": "Wann?"})
        answer, attempts, low, _, _ = regen(node, self.make_trace(), [],
                                            [candidate("1985", "de")],
                                            SolverConfig(max_regen=0), chat)
        assert answer.text == "1985"
        assert attempts == []
        assert low is True

    def test_all_attempts_rejected(self):
        chat = ScriptedChat.from_spec({"rules": [
            {"match": "Reconsider the sub-question", "reply": "wrong"},
            {"match": "Candidate answer:", "reply": "no"},
        ]})
        node = QNode("de:1", {"de": "Wann?"})
        cfg = SolverConfig(max_regen=2)
        answer, attempts, low, _, _ = regen(node, self.make_trace(), [],
                                            [candidate("1985", "de")], cfg, chat)
        assert len(attempts) == 2
        assert all(not a.accepted for a in attempts)
        assert low is True
        assert answer.text == "1985"

    def test_empty_source_falls_back_to_english(self):
        chat = ScriptedChat([])
        node = QNode("de:1", {"de": "Wann?", "en": "When?"}, origin="fused")
        answer, _, low, _, _ = regen(node, self.make_trace(), [],
                                     [candidate("", "de"), candidate("1970", "en")],
                                     SolverConfig(max_regen=0), chat)
        assert answer.text == "1970" and low is True


def tiny_indexes(tmp_path, embed, langs=("de", "en")):
    rows = {
        "de": [{"id": "de-1", "title": "", "text": "Ein deutsches Dokument."}],
        "en": [{"id": "en-1", "title": "", "text": "An english document."}],
    }
    return {lang: build_index(write_jsonl(tmp_path / f"t.{lang}.jsonl", rows[lang]),
                              lang, embed) for lang in langs}


class TestSolveNode:
    def bilingual_node(self):
        return QNode("de:1", {"de": "Wann wurde X geboren?", "en": "When was X born?"},
                     origin="fused")

    def test_consistent_candidates_select_source(self, tmp_path):
        chat = ScriptedChat.from_spec({"rules": [
            {"match": ["Answer the question", "Wann wurde X geboren?"], "reply": "1970"},
            {"match": ["Answer the question", "When was X born?"], "reply": "1970"},
        ]})
        embed = ScriptedEmbed({}, dimension=4)
        node = self.bilingual_node()
        g = graph_with([node], prefixes={"de": "de", "en": "en"})
        trace = ReasoningTrace(question="Q?", lang="de", mode="full")
        final = solve_node(node, g, trace, tiny_indexes(tmp_path, embed),
                           SolverConfig(), Backends(chat, embed))
        assert final.lang == "de" and final.text == "1970"
        step = trace.steps[0]
        assert step.judge_method == "short_circuit"
        assert step.judge_verdict is True
        assert step.regen_attempts == []
        assert [c.tag for c in chat.calls] == ["answer", "answer"]

    def test_disagreeing_candidates_trigger_regen(self, tmp_path):
        chat = ScriptedChat.from_spec({"rules": [
            {"match": ["Answer the question", "Wann wurde X geboren?"], "reply": "1970"},
            {"match": ["Answer the question", "When was X born?"], "reply": "1985"},
            {"match": "Decide whether the two candidate answers", "reply": "no"},
            {"match": "Reconsider the sub-question", "reply": "1970"},
            {"match": "Candidate answer:", "reply": "yes"},
        ]})
        embed = ScriptedEmbed({}, dimension=4)
        node = self.bilingual_node()
        g = graph_with([node], prefixes={"de": "de", "en": "en"})
        trace = ReasoningTrace(question="Q?", lang="de", mode="full")
        final = solve_node(node, g, trace, tiny_indexes(tmp_path, embed),
                           SolverConfig(), Backends(chat, embed))
        assert final.text == "1970"
        step = trace.steps[0]
        assert step.judge_verdict is False
        assert len(step.regen_attempts) == 1
        assert step.low_confidence is False

    def test_monolingual_single_path(self, tmp_path):
        chat = ScriptedChat.from_spec({"rules": [
            {"match": ["Answer the question", "When was X born?"], "reply": "1970"},
            {"match": "Candidate answer:", "reply": "yes"},
        ]})
        embed = ScriptedEmbed({}, dimension=4)
        node = QNode("en:1", {"en": "When was X born?"}, origin="english")
        g = graph_with([node], prefixes={"en": "en"})
        trace = ReasoningTrace(question="Q?", lang="en", mode="full")
        final = solve_node(node, g, trace, tiny_indexes(tmp_path, embed, ("en",)),
                           SolverConfig(), Backends(chat, embed))
        assert final.text == "1970"
        assert trace.steps[0].judge_method == "single"
        assert [c.tag for c in chat.calls] == ["answer", "judge"]

    def test_missing_index_for_language(self, tmp_path):
        chat = ScriptedChat.from_spec({"rules": [], "default": "x"})
        embed = ScriptedEmbed({}, dimension=4)
        node = self.bilingual_node()
        g = graph_with([node], prefixes={"de": "de", "en": "en"})
        trace = ReasoningTrace(question="Q?", lang="de", mode="full")
        with pytest.raises(MissingIndexError):
            solve_node(node, g, trace, tiny_indexes(tmp_path, embed, ("de",)),
                       SolverConfig(), Backends(chat, embed))


class TestSynthesize:
    def test_single_step_chain_echo(self, tmp_path):
        chat = ScriptedChat.from_spec({"rules": [
            {"match": "Give the final answer", "reply": "Paris"},
        ]})
        embed = ScriptedEmbed({}, dimension=4)
        indexes = tiny_indexes(tmp_path, embed, ("de",))
        trace = ReasoningTrace(question="Hauptstadt?", lang="de", mode="full")
        trace.steps.append(_fake_step("de:1", {"de": "Hauptstadt?"}, "Paris"))
        out = synthesize_final(Query(text="Hauptstadt?", lang="de"), trace,
                               indexes["de"], SolverConfig(), Backends(chat, embed))
        assert out == "Paris"
        assert trace.final_answer == "Paris"

    def test_prompt_contains_chain_in_order(self, tmp_path):
        captured = {}

        class _Capture:
            def complete(self, req):
                captured["prompt"] = req.last_user_message()
                return "done"

        embed = ScriptedEmbed({}, dimension=4)
        indexes = tiny_indexes(tmp_path, embed, ("de",))
        trace = ReasoningTrace(question="Q?", lang="de", mode="full")
        for i, (q, a) in enumerate([("A?", "ans-a"), ("B?", "ans-b"), ("C?", "ans-c")], 1):
            trace.steps.append(_fake_step(f"de:{i}", {"de": q}, a))
        synthesize_final(Query(text="Q?", lang="de"), trace, indexes["de"],
                         SolverConfig(), Backends(_Capture(), embed))
        prompt = captured["prompt"]
        assert prompt.index("A? → ans-a") < prompt.index("B? → ans-b") < prompt.index("C? → ans-c")

    def test_empty_corpus_still_synthesizes(self, tmp_path):
        chat = ScriptedChat.from_spec({"rules": [], "default": "answer"})
        embed = ScriptedEmbed({}, dimension=4)
        empty = write_jsonl(tmp_path / "empty.de.jsonl", [])
        index = build_index(empty, "de", embed)
        trace = ReasoningTrace(question="Q?", lang="de", mode="full")
        trace.steps.append(_fake_step("de:1", {"de": "Q?"}, "x"))
        out = synthesize_final(Query(text="Q?", lang="de"), trace, index,
                               SolverConfig(), Backends(chat, embed))
        assert out == "answer"
        assert trace.synthesis.retrieved == []


def _fake_step(node_id, texts, answer_text):
    from dapt.solver import SolveStep
    lang = sorted(texts)[0]
    ans = CandidateAnswer(text=answer_text, lang=lang, supporting_docs=[], node_id=node_id)
    return SolveStep(node_id=node_id, origin="source", texts=dict(texts),
                     queries=dict(texts), retrieved={lang: []}, candidates=[ans],
                     judge_verdict=True, judge_method="none", regen_attempts=[],
                     low_confidence=False, answer=ans)


class TestAnswerQuestionGolden:
    def test_full_mode_golden_scenario(self, golden_env):
        env = golden_env
        indexes = {
            "de": build_index(env.corpus_dir / "wiki.de.jsonl", "de", env.embed),
            "en": build_index(env.corpus_dir / "wiki.en.jsonl", "en", env.embed),
        }
        cfg = SolverConfig(mode="full")
        trace = answer_question(Query(text=env.question, lang="de"), indexes,
                                cfg, env.backends, qid="golden", dataset="wiki")
        assert trace.final_answer == env.final_answer
        # fused graph shape: 3 + 4 nodes with exactly one merge
        fused_nodes = trace.graphs["fused"]["nodes"]
        assert len(fused_nodes) == 6
        assert sum(1 for n in fused_nodes if n["origin"] == "fused") == 1
        assert trace.sequence == ["en:1", "de:1", "de:2", "de:3", "en:3", "en:4"]
        # the bilingual node saw one judge failure and one accepted regen
        step = next(s for s in trace.steps if s.node_id == "de:1")
        assert step.judge_verdict is False
        assert [a.accepted for a in step.regen_attempts] == [True]
        assert step.answer.text == "Christopher Nolan"
        # cross-graph placeholder resolution went through the alias
        en3 = next(s for s in trace.steps if s.node_id == "en:3")
        assert en3.queries["en"] == "Who is the spouse of Christopher Nolan?"

    def test_trace_invariants_and_budgets(self, golden_env):
        env = golden_env
        indexes = {
            "de": build_index(env.corpus_dir / "wiki.de.jsonl", "de", env.embed),
            "en": build_index(env.corpus_dir / "wiki.en.jsonl", "en", env.embed),
        }
        cfg = SolverConfig(mode="full")
        trace = answer_question(Query(text=env.question, lang="de"), indexes,
                                cfg, env.backends)
        # one step per sequence entry, in order
        assert [s.node_id for s in trace.steps] == trace.sequence
        # dependency order: every fused-graph edge resolved before use
        g = SubQuestionGraph.from_json(trace.graphs["fused"])
        pos = {nid: i for i, nid in enumerate(trace.sequence)}
        assert all(pos[u] < pos[v] for (u, v) in g.edges)
        # per-node budgets
        for step in trace.steps:
            n_langs = len(step.texts)
            answer_calls = len([k for k in step.completions if k.startswith("answer.")])
            regen_calls = len(step.regen_attempts)
            assert answer_calls <= n_langs
            assert regen_calls <= cfg.max_regen
            judge_calls = len([k for k in step.completions
                               if k == "judge" or k.startswith("sufficiency.")])
            assert judge_calls <= 1 + cfg.max_regen

    def test_deterministic_traces(self, golden_env):
        env = golden_env

        def run():
            backends = env.fresh_backends()
            indexes = {
                "de": build_index(env.corpus_dir / "wiki.de.jsonl", "de", backends.embed),
                "en": build_index(env.corpus_dir / "wiki.en.jsonl", "en", backends.embed),
            }
            return answer_question(Query(text=env.question, lang="de"), indexes,
                                   SolverConfig(mode="full"), backends,
                                   qid="golden", dataset="wiki").to_json()

        assert run() == run()


class TestModes:
    def make_indexes(self, env, backends=None):
        embed = (backends or env.backends).embed
        return {
            "de": build_index(env.corpus_dir / "wiki.de.jsonl", "de", embed),
            "en": build_index(env.corpus_dir / "wiki.en.jsonl", "en", embed),
        }

    def test_no_decompose_is_single_retrieval_single_answer(self, golden_env):
        env = golden_env
        indexes = self.make_indexes(env)
        trace = answer_question(Query(text=env.question, lang="de"), indexes,
                                SolverConfig(mode="no_decompose"), env.backends)
        assert trace.final_answer == env.final_answer
        assert len(trace.steps) == 1
        assert trace.stage_calls.get("answer") == 1
        assert trace.stage_calls.get("embed") == 1  # exactly one retrieval
        assert "synthesize" not in trace.stage_calls
        assert "decompose" not in trace.stage_calls

    def test_no_fusion_never_fuses(self, golden_env):
        env = golden_env
        indexes = self.make_indexes(env)
        trace = answer_question(Query(text=env.question, lang="de"), indexes,
                                SolverConfig(mode="no_fusion"), env.backends)
        assert trace.final_answer == env.final_answer
        assert "fused" not in trace.graphs
        assert all(s.origin != "fused" for s in trace.steps)
        assert all(list(s.queries) == ["de"] for s in trace.steps)
        assert trace.stage_calls.get("decompose") == 2  # both plans still built

    def test_translate_qa_two_translations_no_source_retrieval(self, golden_env):
        env = golden_env
        indexes = self.make_indexes(env)
        trace = answer_question(Query(text=env.question, lang="de"), indexes,
                                SolverConfig(mode="translate_qa"), env.backends)
        assert trace.final_answer == env.final_answer
        assert trace.stage_calls.get("translate") == 2
        for step in trace.steps:
            assert list(step.retrieved) == ["en"]
        assert trace.synthesis.lang == "en"

    def test_full_mode_on_english_query_still_valid(self, tmp_path):
        decomp = json.dumps({"sub_questions": ["Who wrote X?"]})
        chat = ScriptedChat.from_spec({"rules": [
            {"match": "Break the question into", "reply": decomp},
            {"match": ["Answer the question", "Who wrote X?"], "reply": "Y"},
            {"match": "Candidate answer:", "reply": "yes"},
            {"match": "Give the final answer", "reply": "Y"},
        ]})
        embed = ScriptedEmbed({}, dimension=4)
        indexes = tiny_indexes(tmp_path, embed, ("en",))
        trace = answer_question(Query(text="Who wrote X?", lang="en"), indexes,
                                SolverConfig(mode="full"), Backends(chat, embed))
        assert trace.final_answer == "Y"
        # both single-node plans collapse into one monolingual node
        assert len(trace.graphs["fused"]["nodes"]) == 1
        assert trace.graphs["fused"]["nodes"][0]["origin"] == "source"

    def test_fallback_full_equals_no_decompose_plus_synthesis(self, tmp_path):
        """With single-node fallback plans, full mode's solving calls match
        no_decompose's plus the synthesis step."""
        def backends():
            chat = ScriptedChat.from_spec({"rules": [
                {"match": ["Answer the question", "Who wrote X?"], "reply": "Y"},
                {"match": "Candidate answer:", "reply": "yes"},
                {"match": "Give the final answer", "reply": "Y"},
            ], "default": "not json"})  # decomposition always falls back
            return Backends(chat, ScriptedEmbed({}, dimension=4))

        q = Query(text="Who wrote X?", lang="en")
        b_full = backends()
        full = answer_question(q, tiny_indexes(tmp_path, b_full.embed, ("en",)),
                               SolverConfig(mode="full"), b_full)
        b_van = backends()
        vanilla = answer_question(q, tiny_indexes(tmp_path, b_van.embed, ("en",)),
                                  SolverConfig(mode="no_decompose"), b_van)

        def shape(trace):
            return {t: trace.stage_calls.get(t, 0)
                    for t in ("answer", "synthesize", "embed")}

        s_full, s_vanilla = shape(full), shape(vanilla)
        assert s_full["answer"] == s_vanilla["answer"] == 1
        assert s_vanilla["synthesize"] == 0 and s_full["synthesize"] == 1
        # extra embeds: one fusion similarity batch, one synthesis retrieval
        assert s_full["embed"] == s_vanilla["embed"] + 2

    def test_missing_en_index_in_full_mode(self, golden_env, tmp_path):
        env = golden_env
        indexes = {"de": build_index(env.corpus_dir / "wiki.de.jsonl", "de", env.embed)}
        with pytest.raises(MissingIndexError):
            answer_question(Query(text=env.question, lang="de"), indexes,
                            SolverConfig(mode="full"), env.backends)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(k=0)
    with pytest.raises(ValueError):
        SolverConfig(max_regen=-1)
    with pytest.raises(ValueError):
        SolverConfig(mode="bogus")
