"""Prompt templates (pinned as golden files), budget assembly, and parsing."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from conftest import make_doc
from ssclib.backends import ByteTokenizer, WhitespaceTokenizer
from ssclib.corpus import DEFAULT_LABEL_SET
from ssclib.prompting import (
    QUERY_SUFFIX,
    ParseFailure,
    Prompt,
    PromptBudgetError,
    assemble_prompt,
    parse_generated_label,
    prompt_record,
    render_demonstration,
    render_label_set,
    render_query,
)

GOLDEN = Path(__file__).parent / "golden"


def golden_text(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")


@pytest.fixture()
def demo_doc():
    return make_doc("demo-a", [
        ("Hypertension is common in older adults.", ["BACKGROUND"]),
        ("We aimed to compare two diuretics.", ["OBJECTIVE"]),
    ])


@pytest.fixture()
def multilabel_doc():
    return make_doc("demo-b", [
        ("Little is known; we aimed to chart recovery.", ["BACKGROUND", "OBJECTIVE"]),
    ])


class TestTemplateGoldens:
    def test_two_sentence_demonstration(self, demo_doc):
        got = render_demonstration(demo_doc, DEFAULT_LABEL_SET)
        assert got == golden_text("demo_two_sentence.txt")

    def test_multilabel_demonstration(self, multilabel_doc):
        got = render_demonstration(multilabel_doc, DEFAULT_LABEL_SET)
        assert got == golden_text("demo_multilabel.txt")

    def test_query(self, demo_doc):
        got = render_query(demo_doc, 1, DEFAULT_LABEL_SET)
        assert got == golden_text("query_second_sentence.txt")

    def test_one_shot_assembly(self, demo_doc, multilabel_doc):
        prompt = assemble_prompt(
            demos=[multilabel_doc], query_doc=demo_doc, target_index=1,
            label_set=DEFAULT_LABEL_SET, token_budget=10_000,
            tokenizer=ByteTokenizer(),
        )
        assert prompt.text == golden_text("one_shot_prompt.txt")
        assert prompt.n_shots == 1
        assert not prompt.truncated
        assert prompt.target_ref == ("demo-a", 1)


class TestTemplateShape:
    def test_label_menu_lists_every_name(self):
        menu = render_label_set(DEFAULT_LABEL_SET)
        assert menu == "BACKGROUND, OBJECTIVE, METHODS, RESULTS, CONCLUSIONS, OTHER"

    def test_query_ends_with_suffix_including_trailing_space(self, demo_doc):
        q = render_query(demo_doc, 0, DEFAULT_LABEL_SET)
        assert q.endswith(QUERY_SUFFIX)
        assert QUERY_SUFFIX.endswith(" ")
        assert "<End>" not in q

    def test_demo_has_one_clause_per_sentence(self, demo_doc):
        d = render_demonstration(demo_doc, DEFAULT_LABEL_SET)
        assert d.count(QUERY_SUFFIX) == len(demo_doc.sentences)
        assert d.startswith("<Start> The paragraph is ")
        assert d.endswith(" <End>")
        assert d.count("<End>") == 1

    def test_out_of_range_target_rejected(self, demo_doc):
        with pytest.raises(IndexError):
            render_query(demo_doc, 2, DEFAULT_LABEL_SET)
        with pytest.raises(IndexError):
            render_query(demo_doc, -1, DEFAULT_LABEL_SET)

    def test_prompt_must_end_with_query_pattern(self):
        with pytest.raises(ValueError, match="query pattern"):
            Prompt(text="dangling", n_shots=0, truncated=False, target_ref=("d", 0))

    def test_record_round_trip(self, demo_doc):
        prompt = assemble_prompt([], demo_doc, 0, DEFAULT_LABEL_SET, 10_000,
                                 ByteTokenizer())
        rec = prompt_record(prompt)
        assert rec == {"target_ref": ["demo-a", 0], "n_shots": 0,
                       "truncated": False, "text": prompt.text}


class TestBudget:
    def test_zero_shot_when_no_demos(self, demo_doc):
        prompt = assemble_prompt([], demo_doc, 0, DEFAULT_LABEL_SET, 10_000,
                                 ByteTokenizer())
        assert prompt.n_shots == 0 and not prompt.truncated
        assert prompt.text == render_query(demo_doc, 0, DEFAULT_LABEL_SET)

    def test_budget_exactly_at_boundary_fits(self, demo_doc, multilabel_doc):
        tok = ByteTokenizer()
        full = assemble_prompt([multilabel_doc], demo_doc, 1, DEFAULT_LABEL_SET,
                               10_000, tok)
        exact = tok.count(full.text)
        at = assemble_prompt([multilabel_doc], demo_doc, 1, DEFAULT_LABEL_SET,
                             exact, tok)
        assert at.n_shots == 1 and not at.truncated
        below = assemble_prompt([multilabel_doc], demo_doc, 1, DEFAULT_LABEL_SET,
                                exact - 1, tok)
        assert below.n_shots == 0 and below.truncated

    def test_stops_at_first_non_fitting_demo(self, demo_doc, multilabel_doc):
        tok = ByteTokenizer()
        # Budget admits the first (small) demo but not a second copy.
        one = assemble_prompt([multilabel_doc], demo_doc, 1, DEFAULT_LABEL_SET,
                              10_000, tok)
        budget = tok.count(one.text)
        prompt = assemble_prompt([multilabel_doc, multilabel_doc], demo_doc, 1,
                                 DEFAULT_LABEL_SET, budget, tok)
        assert prompt.n_shots == 1
        assert prompt.truncated
        assert prompt.text == one.text

    def test_query_over_budget_raises(self, demo_doc):
        with pytest.raises(PromptBudgetError):
            assemble_prompt([], demo_doc, 0, DEFAULT_LABEL_SET, 10, ByteTokenizer())

    def test_shot_count_monotone_in_budget(self, demo_doc, multilabel_doc):
        tok = ByteTokenizer()
        demos = [multilabel_doc] * 4
        prev = -1
        for budget in range(300, 2000, 100):
            try:
                prompt = assemble_prompt(demos, demo_doc, 0, DEFAULT_LABEL_SET,
                                         budget, tok)
            except PromptBudgetError:
                continue
            assert prompt.n_shots >= prev
            prev = prompt.n_shots
            assert tok.count(prompt.text) <= budget

    def test_whitespace_tokenizer_budget(self, demo_doc):
        tok = WhitespaceTokenizer()
        q = render_query(demo_doc, 0, DEFAULT_LABEL_SET)
        prompt = assemble_prompt([], demo_doc, 0, DEFAULT_LABEL_SET,
                                 tok.count(q), tok)
        assert prompt.n_shots == 0


class TestParsing:
    def test_single_label_exact(self):
        got = parse_generated_label("<METHODS> <End>", DEFAULT_LABEL_SET, "multi")
        assert got.tolist() == DEFAULT_LABEL_SET.vector(["METHODS"]).tolist()

    def test_multi_label_comma_joined(self):
        got = parse_generated_label("<BACKGROUND, OBJECTIVE> <End>",
                                    DEFAULT_LABEL_SET, "multi")
        assert got.tolist() == DEFAULT_LABEL_SET.vector(
            ["BACKGROUND", "OBJECTIVE"]).tolist()

    def test_single_mode_keeps_earliest_occurrence(self):
        got = parse_generated_label("<RESULTS, CONCLUSIONS> <End>",
                                    DEFAULT_LABEL_SET, "single")
        assert got.tolist() == DEFAULT_LABEL_SET.vector(["RESULTS"]).tolist()

    def test_case_insensitive(self):
        got = parse_generated_label("methods and results", DEFAULT_LABEL_SET, "multi")
        assert got.tolist() == DEFAULT_LABEL_SET.vector(
            ["METHODS", "RESULTS"]).tolist()

    def test_text_after_end_marker_ignored(self):
        got = parse_generated_label("<METHODS> <End> RESULTS RESULTS",
                                    DEFAULT_LABEL_SET, "multi")
        assert got.tolist() == DEFAULT_LABEL_SET.vector(["METHODS"]).tolist()

    def test_no_label_returns_parse_failure(self):
        got = parse_generated_label("gibberish output", DEFAULT_LABEL_SET, "multi")
        assert isinstance(got, ParseFailure)
        assert got.raw == "gibberish output"

    def test_everything_before_end_marker_is_failure_when_empty(self):
        got = parse_generated_label("<End> METHODS", DEFAULT_LABEL_SET, "multi")
        assert isinstance(got, ParseFailure)

    def test_bad_mode_rejected(self):
        with pytest.raises(ValueError, match="mode"):
            parse_generated_label("<METHODS>", DEFAULT_LABEL_SET, "both")

    def test_render_then_parse_is_identity(self):
        # Property: verbalizing any non-empty label subset and parsing it back
        # recovers the subset (multi mode).
        rng = np.random.default_rng(7)
        ls = DEFAULT_LABEL_SET
        for _ in range(200):
            bits = (rng.random(len(ls)) < 0.4).astype(np.int8)
            if bits.sum() == 0:
                bits[rng.integers(len(ls))] = 1
            rendered = f"<{', '.join(ls.labels_of(bits))}> <End>"
            got = parse_generated_label(rendered, ls, "multi")
            assert got.tolist() == bits.tolist()

    def test_unlabeled_demo_sentence_rejected(self, label_set):
        from ssclib.corpus import Document, Sentence

        doc = Document(
            doc_id="x",
            sentences=[Sentence(text="t", gold=np.zeros(6, dtype=np.int8), index=1)],
            source_kind="unstructured",
        )
        with pytest.raises(ValueError, match="no gold labels"):
            render_demonstration(doc, label_set)
