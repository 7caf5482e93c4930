import logging
import os

import numpy as np
import pytest

from selic.errors import BackendUnavailableError, ConfigError, InvalidInputError
from selic.semantic import (
    MAX_CAPTION_TOKENS,
    SemanticCache,
    StubCaptioner,
    StubEmbedder,
    backend_checksum,
    describe,
    make_captioner,
    make_embedder,
    truncate_caption,
)
from conftest import structured_image


def test_truncate_caption():
    short = "a small boat"
    assert truncate_caption(short) == short
    long = " ".join(f"w{i}" for i in range(200))
    truncated = truncate_caption(long)
    assert len(truncated.split()) == MAX_CAPTION_TOKENS
    assert truncated == " ".join(f"w{i}" for i in range(MAX_CAPTION_TOKENS))


def test_stub_captioner_deterministic():
    image = structured_image(0)
    captioner = StubCaptioner(seed=0)
    first = captioner.caption(image)
    assert first == captioner.caption(image)
    assert captioner.calls == 2
    assert first == StubCaptioner(seed=0).caption(image)
    assert len(first.split()) <= MAX_CAPTION_TOKENS


def test_stub_captioner_sensitivity():
    captioner = StubCaptioner(seed=0)
    a = captioner.caption(structured_image(0))
    b = captioner.caption(structured_image(1))
    assert a != b
    assert a != StubCaptioner(seed=1).caption(structured_image(0))
    with pytest.raises(InvalidInputError):
        captioner.caption(np.zeros((4, 4), dtype=np.float32))


def test_stub_embedder():
    embedder = StubEmbedder(32)
    vec = embedder.embed("a calm lake at dawn")
    assert vec.shape == (32,) and vec.dtype == np.float32
    assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-5)
    assert np.array_equal(vec, StubEmbedder(32).embed("a calm lake at dawn"))
    assert not np.array_equal(vec, embedder.embed("a stormy lake at dusk"))
    with pytest.raises(InvalidInputError):
        embedder.embed("   ")
    with pytest.raises(ConfigError):
        StubEmbedder(0)


def test_stub_embedder_truncates_before_hashing():
    embedder = StubEmbedder(16)
    long = " ".join(f"w{i}" for i in range(100))
    head = " ".join(f"w{i}" for i in range(MAX_CAPTION_TOKENS))
    assert np.array_equal(embedder.embed(long), embedder.embed(head))


def test_factories():
    assert isinstance(make_captioner("stub", seed=3), StubCaptioner)
    assert isinstance(make_embedder("stub", 8), StubEmbedder)
    with pytest.raises(ConfigError):
        make_captioner("oracle")
    with pytest.raises(ConfigError):
        make_embedder("oracle", 8)


def test_pretrained_backends_degrade_cleanly(monkeypatch):
    """Without downloaded weights the pretrained backends must raise the
    backend error (which the CLI maps to its own exit code), not crash."""
    monkeypatch.setenv("HF_HUB_OFFLINE", "1")
    monkeypatch.setenv("TRANSFORMERS_OFFLINE", "1")
    try:
        captioner = make_captioner("pretrained")
    except BackendUnavailableError:
        pytest.skip("pretrained captioner weights not available in this environment")
    caption = captioner.caption(structured_image(0))
    assert caption.strip()


def test_backend_checksum_tracks_identity():
    a = backend_checksum(StubCaptioner(seed=0))
    assert a == backend_checksum(StubCaptioner(seed=0))
    assert a != backend_checksum(StubCaptioner(seed=1))
    assert a != backend_checksum(StubEmbedder(8))


def test_cache_hits_and_isolation(tmp_path):
    captioner = StubCaptioner(seed=0)
    embedder = StubEmbedder(16)
    cache = SemanticCache(str(tmp_path), captioner, embedder)
    image = structured_image(0)

    vec = cache.embedding("img0", image)
    calls = (captioner.calls, embedder.calls)
    assert np.array_equal(cache.embedding("img0", image), vec)
    assert cache.caption("img0", image) == captioner.caption(image)
    # Repeat lookups served from disk; only the direct .caption call above
    # touched the backend again.
    assert (captioner.calls, embedder.calls) == (calls[0] + 1, calls[1])

    # A different captioner seed gets its own cache directory.
    other = SemanticCache(str(tmp_path), StubCaptioner(seed=1), embedder)
    assert other._dir != cache._dir


def test_cache_recovers_from_corruption(tmp_path, caplog):
    captioner = StubCaptioner(seed=0)
    embedder = StubEmbedder(16)
    cache = SemanticCache(str(tmp_path), captioner, embedder)
    image = structured_image(1)
    vec = cache.embedding("img1", image)

    # Wrong length: must warn, recompute, and rewrite the entry.
    with open(cache._embed_path("img1"), "wb") as f:
        f.write(b"\x00" * 7)
    with caplog.at_level(logging.WARNING, logger="selic.semantic"):
        recovered = cache.embedding("img1", image)
    assert np.array_equal(recovered, vec)
    assert any("recomputing" in r.message for r in caplog.records)
    assert os.path.getsize(cache._embed_path("img1")) == 16 * 4

    # Empty caption file: same recovery path.
    caption = cache.caption("img1", image)
    with open(cache._caption_path("img1"), "wb") as f:
        f.write(b"")
    assert cache.caption("img1", image) == caption


def test_describe_with_and_without_cache(tmp_path):
    captioner = StubCaptioner(seed=0)
    embedder = StubEmbedder(16)
    image = structured_image(2)
    caption, vec = describe(image, captioner, embedder)
    assert caption == captioner.caption(image)
    assert vec.shape == (16,)

    cache = SemanticCache(str(tmp_path), captioner, embedder)
    caption2, vec2 = describe(image, captioner, embedder, cache=cache)
    assert caption2 == caption
    assert np.array_equal(vec2, vec)
    # Cached under a content-derived id: a second call is a pure hit.
    before = captioner.calls
    describe(image, captioner, embedder, cache=cache)
    assert captioner.calls == before
