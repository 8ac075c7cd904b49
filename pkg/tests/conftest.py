from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent))

torch.set_num_threads(1)

from ssclib.corpus import DEFAULT_LABEL_SET, Corpus, Document, LabelSet, Sentence


@pytest.fixture(scope="session")
def label_set() -> LabelSet:
    return DEFAULT_LABEL_SET


def make_doc(
    doc_id: str,
    rows: list[tuple[str, list[str]]],
    label_set: LabelSet = DEFAULT_LABEL_SET,
    source_kind: str = "unstructured",
) -> Document:
    sentences = [
        Sentence(text=text, gold=label_set.vector(labels), index=i + 1)
        for i, (text, labels) in enumerate(rows)
    ]
    return Document(doc_id=doc_id, sentences=sentences, source_kind=source_kind)


def make_corpus(docs: list[Document], label_set: LabelSet = DEFAULT_LABEL_SET) -> Corpus:
    return Corpus(label_set=label_set, documents=docs)


@pytest.fixture()
def tiny_corpus(label_set) -> Corpus:
    docs = [
        make_doc("d1", [
            ("Sepsis remains a leading cause of mortality.", ["BACKGROUND"]),
            ("We aimed to test early vasopressin.", ["OBJECTIVE"]),
            ("Patients were randomized to two arms.", ["METHODS"]),
            ("Mortality fell from 30% to 24%.", ["RESULTS"]),
            ("Early vasopressin appears beneficial.", ["CONCLUSIONS"]),
        ], label_set, source_kind="structured"),
        make_doc("d2", [
            ("Little is known about recovery trajectories; we aimed to chart them.",
             ["BACKGROUND", "OBJECTIVE"]),
            ("A cohort of 120 adults was followed for one year.", ["METHODS"]),
            ("Grip strength improved at every visit.", ["RESULTS"]),
        ], label_set),
        make_doc("d3", [
            ("This trial was registered prospectively.", ["OTHER"]),
            ("We enrolled 40 children with asthma.", ["METHODS"]),
            ("Symptom scores dropped; we conclude the inhaler helps.",
             ["RESULTS", "CONCLUSIONS"]),
        ], label_set),
    ]
    return make_corpus(docs, label_set)


def seeded_rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
