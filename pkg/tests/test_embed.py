import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ragguard import datagen
from ragguard.embed import (
    EmbedConfig,
    EmbeddingVector,
    cosine,
    embed_batch,
    hash_embed,
    normalize,
)
from ragguard.errors import (
    ConfigError,
    DegenerateVectorError,
    DimensionError,
    EmptyInputError,
    ProtocolError,
    RemoteEmbedError,
)

finite_vectors = st.lists(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=2, max_size=16
)


def test_cosine_identity():
    e = EmbeddingVector(np.array([0.3, -0.4, 1.2]))
    assert cosine(e, e) == pytest.approx(1.0, abs=1e-12)


def test_cosine_orthogonal():
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_scalar_oracle():
    # <(1,2,3),(4,5,6)> = 32, |u|^2 = 14, |v|^2 = 77: integers by hand
    expected = 32.0 / math.sqrt(14.0 * 77.0)
    assert cosine([1, 2, 3], [4, 5, 6]) == pytest.approx(expected, abs=1e-15)


def test_cosine_dimension_mismatch():
    with pytest.raises(DimensionError):
        cosine([1.0, 2.0], [1.0, 2.0, 3.0])


def test_cosine_zero_vector():
    with pytest.raises(DegenerateVectorError):
        cosine([0.0, 0.0], [1.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(finite_vectors, finite_vectors)
def test_cosine_symmetric_and_bounded(u, v):
    n = min(len(u), len(v))
    a, b = np.array(u[:n]), np.array(v[:n])
    if np.linalg.norm(a) == 0.0 or np.linalg.norm(b) == 0.0:
        return
    c1, c2 = cosine(a, b), cosine(b, a)
    assert -1.0 <= c1 <= 1.0
    assert c1 == pytest.approx(c2, abs=1e-12)


def test_normalize_three_four_five():
    out = normalize([3.0, 4.0])
    assert np.allclose(out.values, [0.6, 0.8], atol=1e-12)
    assert abs(np.linalg.norm(out.values) - 1.0) <= 1e-9


def test_normalize_idempotent():
    v = normalize([1.0, 2.0, -3.0])
    again = normalize(v)
    assert np.allclose(v.values, again.values, atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(finite_vectors, st.floats(min_value=1e-3, max_value=1e3))
def test_normalize_scale_invariant(v, c):
    a = np.array(v)
    if np.linalg.norm(a) == 0.0 or np.linalg.norm(c * a) == 0.0:
        return
    assert np.allclose(normalize(a).values, normalize(c * a).values, atol=1e-9)


def test_normalize_zero_vector():
    with pytest.raises(DegenerateVectorError):
        normalize([0.0, 0.0, 0.0])


def test_embedding_vector_validates():
    with pytest.raises(DegenerateVectorError):
        EmbeddingVector(np.array([1.0, np.inf]))
    with pytest.raises(DimensionError):
        EmbeddingVector(np.zeros((2, 2)))


def test_hash_embed_deterministic():
    a = hash_embed("Paris is the capital of France.", 256, 7)
    b = hash_embed("Paris is the capital of France.", 256, 7)
    assert a.values.tobytes() == b.values.tobytes()
    assert cosine(a, b) == pytest.approx(1.0, abs=1e-12)


def test_hash_embed_unit_norm_and_dim():
    v = hash_embed("some text", 64, 0)
    assert v.dim == 64
    assert abs(np.linalg.norm(v.values) - 1.0) <= 1e-9
    assert v.source == "hash-fallback"


def test_hash_embed_seed_changes_vector():
    a = hash_embed("same text", 128, 1)
    b = hash_embed("same text", 128, 2)
    assert not np.allclose(a.values, b.values)


def test_hash_embed_rejects_small_dim():
    with pytest.raises(ConfigError):
        hash_embed("text", 4, 0)


def test_hash_embed_handles_tiny_text():
    for text in ("", "a", "ab"):
        v = hash_embed(text, 32, 0)
        assert abs(np.linalg.norm(v.values) - 1.0) <= 1e-9


def test_paraphrase_nearer_than_unrelated_on_corpus():
    # frozen from the seeded 100-triple corpus below
    triples = datagen.build_dataset(100, seed=3)
    para, unrel = [], []
    for t in triples:
        anchor = hash_embed(t.statement, 256, 7)
        para.append(cosine(anchor, hash_embed(t.paraphrase, 256, 7)))
        unrel.append(cosine(anchor, hash_embed(t.unrelated, 256, 7)))
    gap = float(np.mean(para) - np.mean(unrel))
    assert gap > 0.3
    assert gap == pytest.approx(0.5550624848500181, abs=1e-9)


def test_embed_batch_fallback_matches_hash_embed():
    cfg = EmbedConfig(url=None, dim=64, seed=3)
    texts = ["alpha", "beta", "gamma"]
    out = embed_batch(texts, cfg)
    assert len(out) == 3
    for text, vec in zip(texts, out):
        assert np.array_equal(vec.values, hash_embed(text, 64, 3).values)


def test_embed_batch_single_text():
    assert len(embed_batch(["one"], EmbedConfig(dim=32))) == 1


def test_embed_batch_empty_rejected():
    with pytest.raises(EmptyInputError):
        embed_batch([], EmbedConfig())


class _FakeResponse:
    def __init__(self, status_code=200, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


def test_embed_batch_remote_batching(monkeypatch):
    calls = []

    def fake_post(url, json=None, timeout=None):
        calls.append(len(json["texts"]))
        return _FakeResponse(payload={"embeddings": [[1.0, 0.0]] * len(json["texts"])})

    monkeypatch.setattr("ragguard.embed.requests.post", fake_post)
    out = embed_batch([f"t{i}" for i in range(130)], EmbedConfig(url="http://x/embed"))
    assert calls == [64, 64, 2]
    assert len(out) == 130
    assert all(v.source == "remote" for v in out)


def test_embed_batch_remote_error_status(monkeypatch):
    monkeypatch.setattr(
        "ragguard.embed.requests.post", lambda *a, **k: _FakeResponse(status_code=500)
    )
    with pytest.raises(RemoteEmbedError) as err:
        embed_batch(["x"], EmbedConfig(url="http://x/embed"))
    assert err.value.status == 500


def test_embed_batch_remote_malformed(monkeypatch):
    monkeypatch.setattr(
        "ragguard.embed.requests.post",
        lambda *a, **k: _FakeResponse(payload={"embeddings": [[1.0], [2.0]]}),
    )
    with pytest.raises(ProtocolError):
        embed_batch(["only one"], EmbedConfig(url="http://x/embed"))


def test_embed_batch_remote_inconsistent_dims(monkeypatch):
    monkeypatch.setattr(
        "ragguard.embed.requests.post",
        lambda *a, **k: _FakeResponse(payload={"embeddings": [[1.0, 0.0], [1.0]]}),
    )
    with pytest.raises(ProtocolError):
        embed_batch(["a", "b"], EmbedConfig(url="http://x/embed"))
