"""Deterministic synthetic corpora for desk-scale experiments.

Documents follow the usual abstract arc (background, objective, methods,
results, conclusions, sometimes a funding note) with short sentences built
from label-specific templates, so the labels are separable from the words
alone.  A fixed seed always yields byte-identical corpora.
"""

from __future__ import annotations

import numpy as np

from .corpus import AnnotationRound, Corpus, DEFAULT_LABEL_SET, Document, LabelSet, Sentence

_TOPICS = ["asthma", "sepsis", "migraine", "anemia", "gout", "insomnia"]
_AGENTS = ["corvex", "zanemil", "relatox", "movexa", "pentra", "aldrin"]

# One entry per role: templates with {t} topic and {a} agent slots.  Each
# role keeps a small private vocabulary (burden/aimed/randomized/...) so a
# tiny model can tell them apart.
_TEMPLATES = {
    "BACKGROUND": [
        "{t} remains a common and costly burden",
        "prior reports on {t} remain inconclusive",
        "the mechanism behind {t} is poorly understood",
    ],
    "OBJECTIVE": [
        "we aimed to assess {a} for {t}",
        "our goal was to evaluate {a} efficacy",
        "this study aimed to compare {a} with placebo",
    ],
    "METHODS": [
        "participants were randomized to {a} or placebo",
        "we measured symptom scores weekly by protocol",
        "blood samples were collected and assayed blind",
    ],
    "RESULTS": [
        "symptom scores improved significantly with {a}",
        "response rates were higher in the {a} arm",
        "adverse events occurred rarely in both arms",
    ],
    "CONCLUSIONS": [
        "these findings support wider use of {a}",
        "overall {a} appears safe and effective",
        "larger trials of {a} are therefore warranted",
    ],
    "OTHER": [
        "the trial was funded by a public agency",
        "the authors declare no competing interests",
    ],
}

# Multi-label sentences merge two roles into one clause.
_COMBO_TEMPLATES = [
    (("OBJECTIVE", "METHODS"), "we aimed to test {a} using a randomized protocol"),
    (("RESULTS", "CONCLUSIONS"), "improved scores with {a} support its wider use"),
    (("BACKGROUND", "OBJECTIVE"), "because {t} is a burden we aimed to assess {a}"),
]

_SKELETONS = [
    ("BACKGROUND", "METHODS", "RESULTS"),
    ("OBJECTIVE", "METHODS", "RESULTS"),
    ("BACKGROUND", "OBJECTIVE", "METHODS", "RESULTS"),
    ("OBJECTIVE", "METHODS", "RESULTS", "CONCLUSIONS"),
    ("BACKGROUND", "OBJECTIVE", "METHODS", "RESULTS", "CONCLUSIONS"),
    ("BACKGROUND", "METHODS", "RESULTS", "CONCLUSIONS", "OTHER"),
]


def generate_corpus(
    n_docs: int,
    seed: int,
    label_set: LabelSet = DEFAULT_LABEL_SET,
    structured_fraction: float = 0.125,
    multilabel_rate: float = 0.12,
    max_sentences: int | None = None,
) -> Corpus:
    """Generate ``n_docs`` short synthetic abstracts, deterministically.

    max_sentences truncates every abstract arc; max_sentences = 1 yields
    single-sentence documents (each a random slice of an arc), the shape
    used for fast desk-scale training runs.
    """
    for name in _TEMPLATES:
        label_set.index_of(name)  # generator only supports the default schema
    rng = np.random.default_rng(seed)
    docs = []
    for i in range(n_docs):
        topic = _TOPICS[rng.integers(len(_TOPICS))]
        agent = _AGENTS[rng.integers(len(_AGENTS))]
        skeleton = _SKELETONS[rng.integers(len(_SKELETONS))]
        if max_sentences is not None and len(skeleton) > max_sentences:
            start = rng.integers(len(skeleton) - max_sentences + 1)
            skeleton = skeleton[start : start + max_sentences]
        sentences = []
        j = 1
        for role in skeleton:
            if rng.random() < multilabel_rate:
                combo_idx = rng.integers(len(_COMBO_TEMPLATES))
                roles, template = _COMBO_TEMPLATES[combo_idx]
            else:
                options = _TEMPLATES[role]
                roles, template = (role,), options[rng.integers(len(options))]
            text = template.format(t=topic, a=agent)
            sentences.append(Sentence(text=text, gold=label_set.vector(roles), index=j))
            j += 1
        source_kind = "structured" if i % round(1 / structured_fraction) == 0 else "unstructured"
        docs.append(Document(doc_id=f"syn{i:04d}", sentences=sentences, source_kind=source_kind))
    return Corpus(label_set=label_set, documents=docs)


def perturbed_round(
    corpus: Corpus, annotator_id: str, flip_rate: float, seed: int
) -> AnnotationRound:
    """A noisy re-annotation of a corpus: each bit flips with ``flip_rate``.

    A vector never goes empty; flips that would clear the last bit restore
    the first original label.  Useful for exercising the agreement tooling.
    """
    rng = np.random.default_rng(seed)
    assignments = {}
    for doc in corpus.documents:
        vecs = []
        for sent in doc.sentences:
            vec = sent.gold.copy()
            flips = rng.random(len(vec)) < flip_rate
            vec = np.where(flips, 1 - vec, vec).astype(np.int8)
            if vec.sum() == 0:
                vec[int(np.argmax(sent.gold))] = 1
            vecs.append(vec)
        assignments[doc.doc_id] = vecs
    return AnnotationRound(
        annotator_id=annotator_id, label_set=corpus.label_set, assignments=assignments
    )
