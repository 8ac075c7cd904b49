"""Embedding backends, cosine, and demonstration ranking."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_corpus, make_doc, seeded_rng
from oracles import cos_sim
from ssclib.backends import BackendUnavailableError
from ssclib.retrieval import (
    CachedEmbeddingBackend,
    ExternalEmbeddingBackend,
    HashedBowBackend,
    cosine,
    document_key_similarity,
    rank_demonstrations,
)


class TestHashedBow:
    def test_deterministic_and_unit_norm(self):
        be = HashedBowBackend()
        a = be.embed("grip strength improved at every visit")
        b = be.embed("grip strength improved at every visit")
        assert np.array_equal(a, b)
        assert np.linalg.norm(a) == pytest.approx(1.0, abs=1e-12)

    def test_single_token_hits_one_bucket(self):
        be = HashedBowBackend(dim=32)
        vec = be.embed("mortality")
        assert np.count_nonzero(vec) == 1
        assert vec.max() == pytest.approx(1.0)

    def test_repetition_preserves_direction(self):
        be = HashedBowBackend()
        once = be.embed("relapse")
        thrice = be.embed("relapse relapse relapse")
        assert cosine(once, thrice) == pytest.approx(1.0, abs=1e-12)

    def test_case_insensitive(self):
        be = HashedBowBackend()
        assert np.array_equal(be.embed("Mortality Fell"), be.embed("mortality fell"))

    def test_known_two_token_geometry(self):
        # Two distinct tokens, equal counts: cosine with either single token
        # is 1/sqrt(2) whenever the buckets differ.
        be = HashedBowBackend(dim=512)
        joint = be.embed("alpha beta")
        assert be._bucket("alpha") != be._bucket("beta")
        assert cosine(joint, be.embed("alpha")) == pytest.approx(1 / math.sqrt(2))

    def test_empty_text_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            HashedBowBackend().embed("   ")

    def test_hash_seed_changes_layout(self):
        a = HashedBowBackend(hash_seed=13).embed("randomized controlled trial")
        b = HashedBowBackend(hash_seed=14).embed("randomized controlled trial")
        assert not np.array_equal(a, b)


class TestCosine:
    def test_known_value(self):
        # 1*4 + 2*5 + 3*6 = 32; |a| = sqrt(14), |b| = sqrt(77).
        got = cosine(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]))
        assert got == pytest.approx(32 / math.sqrt(14 * 77), abs=1e-12)

    def test_matches_reference_on_random_vectors(self):
        rng = seeded_rng(2)
        for _ in range(100):
            a = rng.normal(size=8)
            b = rng.normal(size=8)
            assert cosine(a, b) == pytest.approx(cos_sim(a, b), abs=1e-12)

    def test_bounds(self):
        rng = seeded_rng(3)
        for _ in range(100):
            v = cosine(rng.normal(size=5), rng.normal(size=5))
            assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12

    def test_mismatch_and_zero_rejected(self):
        with pytest.raises(ValueError, match="mismatch"):
            cosine(np.ones(3), np.ones(4))
        with pytest.raises(ValueError, match="zero"):
            cosine(np.zeros(3), np.ones(3))


class TestRanking:
    @pytest.fixture()
    def pool(self):
        return make_corpus([
            make_doc("p1", [("mortality fell sharply", ["RESULTS"])]),
            make_doc("p2", [("we aimed to reduce mortality", ["OBJECTIVE"]),
                            ("patients were randomized", ["METHODS"])]),
            make_doc("p3", [("asthma control improved", ["RESULTS"])]),
        ])

    def test_document_similarity_is_max_over_sentences(self, pool):
        be = HashedBowBackend()
        target = be.embed("mortality fell sharply")
        doc = pool["p2"]
        per_sentence = [cosine(target, be.embed(s.text)) for s in doc.sentences]
        assert document_key_similarity(target, doc, be) == pytest.approx(max(per_sentence))

    def test_rank_order_matches_brute_force(self, pool):
        be = HashedBowBackend()
        target = pool["p1"].sentences[0]
        ranked = rank_demonstrations(target, pool, k=3, backend=be)
        tv = be.embed(target.text)
        scores = {d.doc_id: document_key_similarity(tv, d, be) for d in pool.documents}
        expected = sorted(scores, key=lambda i: (-scores[i], i))
        assert [d.doc_id for d in ranked] == expected
        assert ranked[0].doc_id == "p1"  # the identical sentence wins

    def test_ties_break_by_doc_id(self):
        pool = make_corpus([
            make_doc("b", [("identical text", ["OTHER"])]),
            make_doc("a", [("identical text", ["OTHER"])]),
        ])
        target = make_doc("q", [("identical text", ["OTHER"])]).sentences[0]
        ranked = rank_demonstrations(target, pool, k=2, backend=HashedBowBackend())
        assert [d.doc_id for d in ranked] == ["a", "b"]

    def test_k_zero_returns_empty(self, pool):
        target = pool["p1"].sentences[0]
        assert rank_demonstrations(target, pool, k=0, backend=HashedBowBackend()) == []

    def test_k_beyond_pool_warns_and_truncates(self, pool, caplog):
        target = pool["p1"].sentences[0]
        with caplog.at_level("WARNING"):
            ranked = rank_demonstrations(target, pool, k=10, backend=HashedBowBackend())
        assert len(ranked) == 3
        assert any("pool" in r.message for r in caplog.records)

    def test_negative_k_rejected(self, pool):
        with pytest.raises(ValueError):
            rank_demonstrations(pool["p1"].sentences[0], pool, k=-1,
                                backend=HashedBowBackend())

    def test_exclude_doc_id_removes_self(self, pool):
        target = pool["p1"].sentences[0]
        ranked = rank_demonstrations(target, pool, k=3, backend=HashedBowBackend(),
                                     exclude_doc_id="p1")
        assert [d.doc_id for d in ranked] == ["p2", "p3"]

    def test_exclusion_emptying_pool_rejected(self):
        pool = make_corpus([make_doc("only", [("text", ["OTHER"])])])
        with pytest.raises(ValueError, match="empty"):
            rank_demonstrations(pool["only"].sentences[0], pool, k=1,
                                backend=HashedBowBackend(), exclude_doc_id="only")


class TestCachedBackend:
    def test_caches_and_round_trips(self, tmp_path):
        inner = HashedBowBackend(dim=16)
        cached = CachedEmbeddingBackend(inner)
        v1 = cached.embed("stable text")
        v2 = cached.embed("stable text")
        assert np.array_equal(v1, v2)
        path = tmp_path / "cache.jsonl"
        cached.save(path)

        class Exploding(HashedBowBackend):
            def embed(self, text):
                raise AssertionError("cache miss")

        reloaded = CachedEmbeddingBackend(Exploding(dim=16))
        reloaded.load(path)
        assert np.allclose(reloaded.embed("stable text"), v1)

    def test_cache_distinguishes_texts(self):
        cached = CachedEmbeddingBackend(HashedBowBackend(dim=16))
        a = cached.embed("first phrase here")
        b = cached.embed("second phrase here")
        assert not np.array_equal(a, b)


def test_external_backend_reports_unavailable():
    be = ExternalEmbeddingBackend(endpoint="https://embeddings.invalid/v1")
    with pytest.raises(BackendUnavailableError):
        be.embed("anything")
