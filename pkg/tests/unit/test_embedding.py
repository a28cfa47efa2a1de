"""Unit tests for the hashing embedder and cosine similarity."""

import numpy as np
import pytest

from app.errors import DimensionMismatch, EmptyText, ZeroVector
from app.utils.embedding import HashingEmbedder, cosine, embed, get_embedder


class TestHashingEmbedder:
    def test_is_deterministic(self):
        assert np.array_equal(embed("abc"), embed("abc"))
        assert np.array_equal(HashingEmbedder().embed("abc"), embed("abc"))

    def test_vectors_are_unit_norm(self):
        vector = embed("7-day return policy")
        assert vector.shape == (256,)
        assert np.linalg.norm(vector) == pytest.approx(1.0, abs=1e-12)

    def test_normalization_happens_before_hashing(self):
        assert np.array_equal(embed("Warranty  Period"), embed("warranty period"))

    def test_self_similarity(self):
        assert cosine(embed("x"), embed("x")) == pytest.approx(1.0, abs=1e-9)

    def test_unrelated_texts_are_dissimilar(self):
        assert cosine(embed("7-day return policy"), embed("orbital mechanics")) < 0.9

    def test_configurable_dimension(self):
        assert get_embedder(64).embed("hello").shape == (64,)
        assert get_embedder(64) is get_embedder(64)

    def test_empty_text_is_rejected(self):
        with pytest.raises(EmptyText):
            embed("   ")

    def test_vectors_are_read_only(self):
        with pytest.raises(ValueError):
            embed("abc")[0] = 1.0


class TestCosine:
    def test_opposite_vectors(self):
        u = embed("warranty")
        assert cosine(u, -u) == pytest.approx(-1.0)

    def test_orthogonal_basis_vectors(self):
        a = np.zeros(8)
        b = np.zeros(8)
        a[0] = 1.0
        b[1] = 1.0
        assert cosine(a, b) == 0.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine(np.ones(3), np.ones(4))

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine(np.zeros(3), np.ones(3))
