import numpy as np
import pytest
from hypothesis import given, strategies as st

from dismop.embedding import (
    DimMismatch,
    EmbedderConfig,
    EmptyText,
    ZeroNorm,
    cosine_similarity,
    embed_text,
    tokenize,
)

CFG = EmbedderConfig()


def ref_fnv1a64(data: bytes) -> int:
    h = 14695981039346656037
    for b in data:
        h ^= b
        h = (h * 1099511628211) % 2**64
    return h


def test_single_token_matches_hand_fnv():
    cfg = EmbedderConfig(dim=4, seed=0)
    h = ref_fnv1a64((0).to_bytes(8, "big") + b"a")
    expected = np.zeros(4)
    expected[h % 4] = 1.0 if h < 2**63 else -1.0
    np.testing.assert_array_equal(embed_text(cfg, "a"), expected)


def test_repeated_token_normalizes_away():
    np.testing.assert_array_equal(embed_text(CFG, "hello hello"), embed_text(CFG, "hello"))


def test_deterministic():
    t = "The quick brown fox, jumps over 3 lazy dogs!"
    np.testing.assert_array_equal(embed_text(CFG, t), embed_text(CFG, t))


def test_token_order_invariance_unigram():
    np.testing.assert_array_equal(embed_text(CFG, "alpha beta"), embed_text(CFG, "beta alpha"))


def test_ngram_changes_with_order():
    cfg = EmbedderConfig(ngram_max=2)
    a = embed_text(cfg, "alpha beta")
    b = embed_text(cfg, "beta alpha")
    assert not np.array_equal(a, b)


def test_tokenize_drops_punctuation_and_lowercases():
    assert tokenize("Hello, WORLD! 42_x") == ["hello", "world", "42", "x"]


def test_empty_text_raises():
    with pytest.raises(EmptyText):
        embed_text(CFG, "  ... !!! ")


@given(st.text(alphabet=st.characters(categories=("Ll", "Lu", "Nd", "Zs")), min_size=1, max_size=60))
def test_unit_norm(text):
    try:
        v = embed_text(CFG, text)
    except EmptyText:
        return
    assert abs(np.linalg.norm(v) - 1.0) <= 1e-12


def test_cosine_self_similarity():
    v = embed_text(CFG, "some sample words here")
    assert abs(cosine_similarity(v, v) - 1.0) <= 1e-12


def test_cosine_orthogonal():
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0


def test_cosine_analytic_value():
    got = cosine_similarity(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    assert abs(got - 0.70710678) <= 1e-8


def test_cosine_errors():
    with pytest.raises(ZeroNorm):
        cosine_similarity(np.zeros(3), np.ones(3))
    with pytest.raises(DimMismatch):
        cosine_similarity(np.ones(3), np.ones(4))


@given(
    st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
    st.lists(st.floats(-1e6, 1e6), min_size=3, max_size=3),
)
def test_cosine_bounded(a, b):
    u, v = np.array(a), np.array(b)
    if np.linalg.norm(u) == 0 or np.linalg.norm(v) == 0:
        return
    assert abs(cosine_similarity(u, v)) <= 1.0 + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        EmbedderConfig(dim=1)
    with pytest.raises(ValueError):
        EmbedderConfig(ngram_max=0)
    with pytest.raises(ValueError):
        EmbedderConfig(seed=-1)


def test_config_hash_stable():
    assert EmbedderConfig().config_hash() == EmbedderConfig().config_hash()
    assert EmbedderConfig().config_hash() != EmbedderConfig(dim=300).config_hash()
