"""Prompt templates, token-budget assembly, and output parsing.

Run from the repository root:  python3 demos/02_prompt_assembly.py
"""

from ssclib.backends import ByteTokenizer
from ssclib.corpus import DEFAULT_LABEL_SET
from ssclib.prompting import (
    assemble_prompt,
    parse_generated_label,
    render_demonstration,
    render_query,
)
from ssclib.synthetic import generate_corpus

corpus = generate_corpus(n_docs=8, seed=3)
labels = DEFAULT_LABEL_SET
query_doc, demo_docs = corpus.documents[0], corpus.documents[1:]

# A demonstration is one fully labeled paragraph between <Start> and <End>;
# a query is the same pattern for a single target sentence, left open so
# the model completes the labels.
print("demonstration:")
print(render_demonstration(demo_docs[0], labels))
print("\nquery (sentence 1 of the first document):")
print(render_query(query_doc, 0, labels))

# Assembly prepends demonstrations (most similar first) while the whole
# prompt stays within the token budget; the byte tokenizer makes the
# budget easy to reason about here.
tokenizer = ByteTokenizer()
for budget in (400, 1200, 8000):
    prompt = assemble_prompt(
        demos=demo_docs, query_doc=query_doc, target_index=0,
        label_set=labels, token_budget=budget, tokenizer=tokenizer,
    )
    print(f"\nbudget {budget}: kept {prompt.n_shots}/{len(demo_docs)} shots, "
          f"{tokenizer.count(prompt.text)} tokens, truncated={prompt.truncated}")

# Parsing scans the generated continuation up to the first <End> and keeps
# every label name it finds (multi mode) or the earliest one (single mode).
generated = "<BACKGROUND, OBJECTIVE> <End> and some trailing chatter RESULTS"
multi = parse_generated_label(generated, labels, mode="multi")
single = parse_generated_label(generated, labels, mode="single")
print("\ngenerated:", generated)
print("parsed (multi): ", sorted(labels.labels_of(multi)))
print("parsed (single):", sorted(labels.labels_of(single)))
