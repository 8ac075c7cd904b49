"""Prompt rendering, k-shot assembly under a token budget, and parsing of
generated label text.

The templates are fixed: a demonstration shows a whole labeled paragraph,

    <Start> The paragraph is [P]. Select from rhetorical labels including
    [U], the sentence [s_1] plays a rhetorical role as <[Y_1]>, ..., the
    sentence [s_n] plays a rhetorical role as <[Y_n]> <End>

and a query repeats the pattern for one target sentence but stops right
after "plays a rhetorical role as " so the model continues with a label.
Multi-label sentences render their names comma-joined inside one pair of
angle brackets.  Demonstrations are separated from each other and from the
query by a single newline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backends import Tokenizer
from .corpus import Document, LabelSet

QUERY_SUFFIX = "plays a rhetorical role as "


class PromptBudgetError(ValueError):
    """The query alone does not fit the token budget."""


@dataclass(frozen=True)
class ParseFailure:
    """No label name could be found in a generated string."""

    raw: str


@dataclass(frozen=True)
class Prompt:
    """Zero or more rendered demonstrations followed by exactly one query.

    target_ref is (doc_id, target_index) with target_index the 0-based
    position of the query sentence in its document.
    """

    text: str
    n_shots: int
    truncated: bool
    target_ref: tuple[str, int]

    def __post_init__(self):
        if self.n_shots < 0:
            raise ValueError("n_shots must be non-negative")
        if not self.text.endswith(QUERY_SUFFIX):
            raise ValueError("prompt text must end with the query pattern")


def render_label_set(label_set: LabelSet) -> str:
    return ", ".join(label_set.names)


def _labels_text(gold: np.ndarray, label_set: LabelSet, where: str) -> str:
    names = label_set.labels_of(gold)
    if not names:
        raise ValueError(f"{where} has no gold labels")
    return ", ".join(names)


def render_demonstration(doc: Document, label_set: LabelSet) -> str:
    """One fully labeled paragraph in the demonstration template."""
    clauses = []
    for i, sent in enumerate(doc.sentences):
        labels = _labels_text(sent.gold, label_set, f"doc {doc.doc_id!r} sentence {i}")
        clauses.append(f"the sentence {sent.text} plays a rhetorical role as <{labels}>")
    return (
        f"<Start> The paragraph is {doc.context}. "
        f"Select from rhetorical labels including {render_label_set(label_set)}, "
        + ", ".join(clauses)
        + " <End>"
    )


def render_query(doc: Document, target_index: int, label_set: LabelSet) -> str:
    """The query for one sentence: same pattern, no label, no <End> marker."""
    if not 0 <= target_index < len(doc.sentences):
        raise IndexError(
            f"target_index {target_index} out of range for doc {doc.doc_id!r} "
            f"of {len(doc.sentences)} sentences"
        )
    target = doc.sentences[target_index]
    return (
        f"<Start> The paragraph is {doc.context}. "
        f"Select from rhetorical labels including {render_label_set(label_set)}, "
        f"the sentence {target.text} {QUERY_SUFFIX}"
    )


def assemble_prompt(
    demos: list[Document],
    query_doc: Document,
    target_index: int,
    label_set: LabelSet,
    token_budget: int,
    tokenizer: Tokenizer,
) -> Prompt:
    """Prepend demonstrations in the given (ranked) order while the whole
    prompt stays within token_budget.

    Stops at the first demonstration that would push the prompt over budget;
    truncated is set when fewer demonstrations were included than offered.
    Raises PromptBudgetError when the query alone exceeds the budget.
    """
    query = render_query(query_doc, target_index, label_set)
    if tokenizer.count(query) > token_budget:
        raise PromptBudgetError(
            f"query of {tokenizer.count(query)} tokens exceeds budget {token_budget}"
        )
    parts: list[str] = []
    text = query
    n_shots = 0
    for demo in demos:
        candidate = "\n".join(parts + [render_demonstration(demo, label_set)] + [query])
        if tokenizer.count(candidate) > token_budget:
            break
        parts.append(render_demonstration(demo, label_set))
        text = candidate
        n_shots += 1
    return Prompt(
        text=text,
        n_shots=n_shots,
        truncated=n_shots < len(demos),
        target_ref=(query_doc.doc_id, target_index),
    )


def parse_generated_label(
    generated: str, label_set: LabelSet, mode: str
) -> np.ndarray | ParseFailure:
    """Map generated text back onto the label set.

    Searches case-insensitively in the text up to the first <End> (or the
    whole string if absent).  single mode keeps the earliest-occurring label;
    multi mode keeps every label that occurs.  Returns ParseFailure when no
    label name is present.
    """
    if mode not in ("single", "multi"):
        raise ValueError(f"mode must be 'single' or 'multi', got {mode!r}")
    cut = generated.find("<End>")
    region = (generated if cut < 0 else generated[:cut]).lower()
    hits: list[tuple[int, int]] = []  # (position, label index)
    for idx, name in enumerate(label_set.names):
        pos = region.find(name.lower())
        if pos >= 0:
            hits.append((pos, idx))
    if not hits:
        return ParseFailure(raw=generated)
    bits = np.zeros(len(label_set), dtype=np.int8)
    if mode == "single":
        bits[min(hits)[1]] = 1
    else:
        for _, idx in hits:
            bits[idx] = 1
    return bits


def prompt_record(prompt: Prompt) -> dict:
    """JSON-ready form of a prompt, used by the build-prompts output."""
    return {
        "target_ref": list(prompt.target_ref),
        "n_shots": prompt.n_shots,
        "truncated": prompt.truncated,
        "text": prompt.text,
    }
