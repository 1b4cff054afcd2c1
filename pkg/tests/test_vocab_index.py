import numpy as np
import pytest

from textbridge.errors import DegenerateEmbeddingError, DimError, FormatError, SizeError
from textbridge.vocab_index import (IndexKind, build_index, cosine_scores, index_from_vectors,
                                    load_vocabulary, top_k, wrap_text)


def brute_force_top_k(index, query, k):
    """Oracle: Python full sort of every score by (-score, insertion index)."""
    scores = cosine_scores(index, query)
    return [i for _, i in sorted((-float(s), i) for i, s in enumerate(scores))[:k]]


class CountingEmbedder:
    identity = "count"

    def __init__(self, dim=4):
        self.calls = []
        self.dim = dim

    def embed(self, text):
        self.calls.append(text)
        rng = np.random.default_rng(abs(hash(text)) % 2**32)
        return rng.normal(size=self.dim)


def test_wrap_text():
    assert wrap_text("dog", IndexKind.TAG) == "A photo of dog"
    assert wrap_text("dog which barks", IndexKind.ATTRIBUTE) == "dog which barks"


def test_top_k_small_example():
    idx = index_from_vectors(["a", "b", "c"], [[1, 0], [0, 1], [1, 1]], "tag")
    got = top_k(idx, [1, 0.2], 2)
    assert [t for t, _ in got] == ["a", "c"]
    assert got[0][1] == pytest.approx(1 / np.sqrt(1.04))


def test_ties_go_to_earlier_entry():
    idx = index_from_vectors(["x", "y", "z"], [[0, 1], [1, 0], [2, 0]], "tag")
    assert [t for t, _ in top_k(idx, [1, 0], 2)] == ["y", "z"]
    assert [t for t, _ in top_k(idx, [1, 0], 1)] == ["y"]


def test_cosine_scores_match_dense_formula():
    rng = np.random.default_rng(5)
    vecs, q = rng.normal(size=(20, 7)), rng.normal(size=7)
    idx = index_from_vectors([str(i) for i in range(20)], vecs, "tag")
    expected = vecs @ q / (np.linalg.norm(vecs, axis=1) * np.linalg.norm(q))
    assert np.allclose(cosine_scores(idx, q), expected, atol=1e-12)


def test_duplicate_rows_score_identically():
    idx = index_from_vectors(["a", "b", "c"], [[0.3, 0.7, 0.1], [0.5, 0.5, 0.5], [0.3, 0.7, 0.1]],
                             "tag")
    s = cosine_scores(idx, [0.2, 0.9, 0.4])
    assert s[0] == s[2]


def test_top_k_matches_brute_force_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n, d = int(rng.integers(1, 30)), int(rng.integers(1, 6))
        pool = rng.integers(-2, 3, size=(4, d)).astype(float)
        pool[np.all(pool == 0, axis=1)] = 1.0
        vecs = pool[rng.integers(0, 4, size=n)]  # many exact duplicates, hence ties
        q = rng.integers(-2, 3, size=d).astype(float)
        if not q.any():
            q[0] = 1
        k = int(rng.integers(1, n + 1))
        idx = index_from_vectors([f"t{i}" for i in range(n)], vecs, "tag")
        assert [t for t, _ in top_k(idx, q, k)] == [f"t{i}" for i in brute_force_top_k(idx, q, k)]


@pytest.mark.parametrize("k", [0, 4])
def test_k_out_of_range(k):
    idx = index_from_vectors(["a", "b", "c"], np.eye(3), "tag")
    with pytest.raises(SizeError):
        top_k(idx, [1, 0, 0], k)


def test_degenerate_inputs():
    with pytest.raises(DegenerateEmbeddingError):
        index_from_vectors(["a"], [[0, 0]], "tag")
    with pytest.raises(DegenerateEmbeddingError):
        index_from_vectors(["a"], [[np.nan, 1]], "tag")
    with pytest.raises(DimError):
        index_from_vectors(["a", "b"], [[1, 0], [1, 0, 0]], "tag")
    with pytest.raises(SizeError):
        index_from_vectors([], [], "tag")
    idx = index_from_vectors(["a"], [[1, 0]], "tag")
    with pytest.raises(DimError):
        cosine_scores(idx, [1, 0, 0])
    with pytest.raises(DegenerateEmbeddingError):
        cosine_scores(idx, [0, 0])


def test_build_index_wraps_tags_and_caches(tmp_path):
    emb = CountingEmbedder()
    idx = build_index(["dog", "cat"], "tag", emb, cache_dir=tmp_path)
    assert emb.calls == ["A photo of dog", "A photo of cat"]
    again = build_index(["dog", "cat"], "tag", emb, cache_dir=tmp_path)
    assert len(emb.calls) == 2
    assert np.array_equal(idx.matrix, again.matrix)
    assert np.allclose(np.linalg.norm(idx.matrix, axis=1), 1.0)


def test_load_vocabulary(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("dog\n\n cat \n")
    assert load_vocabulary(p) == ["dog", "cat"]
    p.write_text("dog\ndog\n")
    with pytest.raises(FormatError):
        load_vocabulary(p)
