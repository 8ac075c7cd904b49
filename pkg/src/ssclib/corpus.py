"""Multi-label sequential-sentence corpora: loading, validation, statistics,
annotator agreement, and stratified splitting.

Corpus files are JSONL (UTF-8, LF): the first line is a header
``{"label_set": [...]}``, every following line one document
``{"doc_id": ..., "source_kind": "structured"|"unstructured",
"sentences": [{"text": ..., "labels": [...]}, ...]}``.

All operations here are pure over immutable inputs; nothing caches or
mutates shared state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

DEFAULT_LABELS = (
    "BACKGROUND",
    "OBJECTIVE",
    "METHODS",
    "RESULTS",
    "CONCLUSIONS",
    "OTHER",
)

SOURCE_KINDS = ("structured", "unstructured")


class CorpusError(ValueError):
    """Malformed corpus content (bad record, unknown label, duplicate id)."""


class CoverageError(ValueError):
    """Two annotation rounds do not cover the same sentences."""


class SplitError(ValueError):
    """Stratified split cannot be formed (bad ratios or tiny stratum)."""


def normalize_text(text: str) -> str:
    """Collapse all whitespace runs to single spaces and trim."""
    return " ".join(text.split())


@dataclass(frozen=True)
class LabelSet:
    """Ordered label names; the order defines the vector index of each label."""

    names: tuple[str, ...]

    def __post_init__(self):
        if not self.names:
            raise CorpusError("label set must be non-empty")
        if len(set(self.names)) != len(self.names):
            raise CorpusError(f"duplicate label names in {self.names}")

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise CorpusError(f"unknown label name {name!r}") from None

    def vector(self, labels: Iterable[str]) -> np.ndarray:
        """Multi-hot vector for a collection of label names."""
        bits = np.zeros(len(self.names), dtype=np.int8)
        for name in labels:
            bits[self.index_of(name)] = 1
        return bits

    def labels_of(self, bits: np.ndarray) -> tuple[str, ...]:
        """Label names whose bit is set, in label-set order."""
        if len(bits) != len(self.names):
            raise CorpusError(
                f"label vector length {len(bits)} != label set size {len(self.names)}"
            )
        return tuple(n for n, b in zip(self.names, bits) if b)


DEFAULT_LABEL_SET = LabelSet(DEFAULT_LABELS)


@dataclass(eq=False)
class Sentence:
    """One sentence of a document with its multi-hot gold vector.

    ``index`` is the 1-based position within the owning document.
    """

    text: str
    gold: np.ndarray
    index: int


@dataclass(eq=False)
class Document:
    doc_id: str
    sentences: list[Sentence]
    source_kind: str

    def __post_init__(self):
        if self.source_kind not in SOURCE_KINDS:
            raise CorpusError(
                f"doc {self.doc_id!r}: source_kind must be one of {SOURCE_KINDS}"
            )
        if not self.sentences:
            raise CorpusError(f"doc {self.doc_id!r}: empty document")

    @property
    def context(self) -> str:
        """The paragraph: all sentence texts concatenated in order."""
        return " ".join(s.text for s in self.sentences)

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(eq=False)
class Corpus:
    label_set: LabelSet
    documents: list[Document]

    def __post_init__(self):
        seen = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
        self._by_id = {d.doc_id: d for d in self.documents}

    def __len__(self) -> int:
        return len(self.documents)

    def __getitem__(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    @property
    def n_sentences(self) -> int:
        return sum(len(d) for d in self.documents)

    def iter_sentences(self) -> Iterator[tuple[Document, Sentence]]:
        for doc in self.documents:
            for sent in doc.sentences:
                yield doc, sent


@dataclass
class CorpusStats:
    n_docs: int
    n_sentences: int
    n_multilabel_sentences: int
    label_counts: dict[str, int]
    avg_doc_len: float
    std_doc_len: float
    avg_sentence_len: float
    std_sentence_len: float

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pct_multilabel"] = (
            100.0 * self.n_multilabel_sentences / self.n_sentences
            if self.n_sentences
            else 0.0
        )
        return d


@dataclass(eq=False)
class AnnotationRound:
    """One annotator's label vectors, keyed by doc_id, one vector per sentence."""

    annotator_id: str
    label_set: LabelSet
    assignments: dict[str, list[np.ndarray]]

    @classmethod
    def from_corpus(cls, corpus: Corpus, annotator_id: str) -> "AnnotationRound":
        return cls(
            annotator_id=annotator_id,
            label_set=corpus.label_set,
            assignments={
                d.doc_id: [s.gold.copy() for s in d.sentences] for d in corpus.documents
            },
        )

    def check_matches(self, corpus: Corpus) -> None:
        for doc in corpus.documents:
            got = self.assignments.get(doc.doc_id)
            if got is None or len(got) != len(doc):
                raise CoverageError(
                    f"round {self.annotator_id!r} does not cover doc {doc.doc_id!r}"
                )


# -- JSONL I/O --


def _parse_doc_record(raw: dict, label_set: LabelSet, line_no: int) -> Document:
    try:
        doc_id = raw["doc_id"]
        source_kind = raw["source_kind"]
        sentences_raw = raw["sentences"]
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"line {line_no}: missing field {exc}") from None
    sentences = []
    for j, s in enumerate(sentences_raw, start=1):
        try:
            text = normalize_text(s["text"])
            labels = s["labels"]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"line {line_no}: malformed sentence ({exc})") from None
        if not text:
            raise CorpusError(f"line {line_no}: sentence {j} empty after normalization")
        if not labels:
            raise CorpusError(f"line {line_no}: sentence {j} has no labels")
        try:
            gold = label_set.vector(labels)
        except CorpusError as exc:
            raise CorpusError(f"line {line_no}: {exc}") from None
        sentences.append(Sentence(text=text, gold=gold, index=j))
    try:
        return Document(doc_id=str(doc_id), sentences=sentences, source_kind=source_kind)
    except CorpusError as exc:
        raise CorpusError(f"line {line_no}: {exc}") from None


def load_corpus(path: str | Path) -> Corpus:
    """Load and validate a corpus JSONL file.

    Raises CorpusError naming the offending line for any malformed record,
    unknown label, empty document, or duplicate doc_id.
    """
    path = Path(path)
    documents: list[Document] = []
    label_set: LabelSet | None = None
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            if label_set is None:
                if not isinstance(raw, dict) or "label_set" not in raw:
                    raise CorpusError(
                        f"line {line_no}: first record must be a label_set header"
                    )
                label_set = LabelSet(tuple(raw["label_set"]))
                continue
            doc = _parse_doc_record(raw, label_set, line_no)
            if doc.doc_id in seen_ids:
                raise CorpusError(f"line {line_no}: duplicate doc_id {doc.doc_id!r}")
            seen_ids.add(doc.doc_id)
            documents.append(doc)
    if label_set is None:
        raise CorpusError(f"{path}: empty corpus file")
    return Corpus(label_set=label_set, documents=documents)


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write the canonical JSONL form (fixed key order, LF endings)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps({"label_set": list(corpus.label_set.names)}, ensure_ascii=False))
        f.write("\n")
        for doc in corpus.documents:
            record = {
                "doc_id": doc.doc_id,
                "source_kind": doc.source_kind,
                "sentences": [
                    {
                        "text": s.text,
                        "labels": list(corpus.label_set.labels_of(s.gold)),
                    }
                    for s in doc.sentences
                ],
            }
            f.write(json.dumps(record, ensure_ascii=False))
            f.write("\n")


# -- statistics --


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Counts, label distribution, and length moments of a corpus.

    A sentence is multi-label iff its gold vector has two or more bits set.
    Sentence length is the whitespace-token count; standard deviations are
    population (ddof=0).
    """
    if not corpus.documents:
        raise CorpusError("corpus_stats requires a non-empty corpus")
    doc_lens = np.array([len(d) for d in corpus.documents], dtype=float)
    sent_lens = np.array(
        [len(s.text.split()) for _, s in corpus.iter_sentences()], dtype=float
    )
    label_counts = {name: 0 for name in corpus.label_set}
    n_multi = 0
    for _, sent in corpus.iter_sentences():
        if int(sent.gold.sum()) >= 2:
            n_multi += 1
        for name in corpus.label_set.labels_of(sent.gold):
            label_counts[name] += 1
    return CorpusStats(
        n_docs=len(corpus),
        n_sentences=int(doc_lens.sum()),
        n_multilabel_sentences=n_multi,
        label_counts=label_counts,
        avg_doc_len=float(doc_lens.mean()),
        std_doc_len=float(doc_lens.std()),
        avg_sentence_len=float(sent_lens.mean()),
        std_sentence_len=float(sent_lens.std()),
    )


# -- inter-annotator agreement --


def _binary_assignments(round_: AnnotationRound, label_idx: int) -> list[int]:
    out = []
    for doc_id in sorted(round_.assignments):
        for vec in round_.assignments[doc_id]:
            out.append(int(vec[label_idx]))
    return out


def cohens_kappa(a: AnnotationRound, b: AnnotationRound, target_label: str) -> float:
    """Chance-corrected agreement on the presence/absence of one label.

    kappa = (p_o - p_e) / (1 - p_e).  In the degenerate p_e = 1 case (both
    annotators constant and identical) returns 1.0; constant but disagreeing
    marginals cannot reach p_e = 1, the formula applies.
    """
    if a.label_set.names != b.label_set.names:
        raise CoverageError("annotation rounds use different label sets")
    if sorted(a.assignments) != sorted(b.assignments):
        raise CoverageError("annotation rounds cover different documents")
    for doc_id, vecs in a.assignments.items():
        if len(vecs) != len(b.assignments[doc_id]):
            raise CoverageError(f"sentence count mismatch in doc {doc_id!r}")
    idx = a.label_set.index_of(target_label)
    xs = _binary_assignments(a, idx)
    ys = _binary_assignments(b, idx)
    n = len(xs)
    p_o = sum(1 for x, y in zip(xs, ys) if x == y) / n
    pa1 = sum(xs) / n
    pb1 = sum(ys) / n
    p_e = pa1 * pb1 + (1 - pa1) * (1 - pb1)
    if math.isclose(p_e, 1.0):
        return 1.0 if math.isclose(p_o, 1.0) else 0.0
    return (p_o - p_e) / (1 - p_e)


def kappa_report(a: AnnotationRound, b: AnnotationRound) -> dict:
    """Per-label kappa plus the unweighted macro average."""
    per_label = {name: cohens_kappa(a, b, name) for name in a.label_set}
    macro = sum(per_label.values()) / len(per_label)
    return {"per_label": per_label, "macro": macro}


# -- splitting --


def _allocate(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of n items over ratios (exact partition)."""
    raw = [n * r for r in ratios]
    base = [int(math.floor(x)) for x in raw]
    remainder = n - sum(base)
    by_frac = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in by_frac[:remainder]:
        base[i] += 1
    return base


def stratified_split(
    corpus: Corpus, ratios: tuple[float, float, float], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Split into (train, dev, test) preserving the structured/unstructured mix.

    Deterministic for a fixed seed; the three splits partition the corpus
    exactly.  Documents keep their original corpus order inside each split.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise SplitError(f"ratios must be three non-negative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1, got sum {sum(ratios)}")
    n_active = sum(1 for r in ratios if r > 0)
    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    for kind in SOURCE_KINDS:
        stratum = [d for d in corpus.documents if d.source_kind == kind]
        if not stratum:
            continue
        if len(stratum) < n_active:
            raise SplitError(
                f"stratum {kind!r} has {len(stratum)} docs, fewer than the "
                f"{n_active} non-empty splits"
            )
        order = rng.permutation(len(stratum))
        counts = _allocate(len(stratum), ratios)
        cursor = 0
        for split_idx, count in enumerate(counts):
            for pos in order[cursor : cursor + count]:
                assignment[stratum[pos].doc_id] = split_idx
            cursor += count
    splits: list[list[Document]] = [[], [], []]
    for doc in corpus.documents:
        splits[assignment[doc.doc_id]].append(doc)
    return tuple(Corpus(label_set=corpus.label_set, documents=s) for s in splits)
