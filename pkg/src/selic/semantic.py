"""Semantic side information: image captioning and text embedding.

Two backends per stage. The "stub" backends are fully deterministic
functions of their inputs (hash-seeded), so the rest of the pipeline can be
exercised and tested without model weights. The "pretrained" backends wrap a
captioning model and a text encoder loaded through `transformers`; they
require downloaded weights and raise BackendUnavailableError otherwise.

Captions and embeddings are cached on disk per backend identity so repeated
runs over a corpus pay the model cost once.
"""

from __future__ import annotations

import hashlib
import logging
import os
import tempfile

import numpy as np

from .config import validate_image
from .errors import BackendUnavailableError, ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

MAX_CAPTION_TOKENS = 64


def truncate_caption(text: str) -> str:
    """Clamp a caption to the first 64 whitespace tokens."""
    tokens = text.split()
    if len(tokens) > MAX_CAPTION_TOKENS:
        tokens = tokens[:MAX_CAPTION_TOKENS]
    return " ".join(tokens)

_STUB_VOCAB = (
    "a", "photo", "of", "the", "scene", "with", "sky", "water", "trees",
    "people", "buildings", "grass", "light", "shadows", "red", "green",
    "blue", "bright", "rough", "smooth", "near", "distant", "detailed",
    "textured", "open", "closed", "natural", "urban",
)
_STUB_CAPTION_WORDS = 12


def _image_digest(image: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(image, dtype=np.float32)
    h = hashlib.sha256()
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.digest()


class StubCaptioner:
    """Hash-derived caption: stable across runs, sensitive to every pixel."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.identity = f"stub-captioner-v1-s{seed}"
        self.calls = 0

    def caption(self, image: np.ndarray) -> str:
        validate_image(image)
        self.calls += 1
        h = hashlib.sha256()
        h.update(_image_digest(image))
        h.update(str(self.seed).encode())
        digest = h.digest()
        words = [
            _STUB_VOCAB[digest[i] % len(_STUB_VOCAB)]
            for i in range(_STUB_CAPTION_WORDS)
        ]
        return " ".join(words)


class StubEmbedder:
    """Hash-seeded unit-norm embedding of a caption string."""

    identity = "stub-embedder-v1"

    def __init__(self, dim: int):
        if dim <= 0:
            raise ConfigError(f"embedding dim must be positive, got {dim}")
        self.dim = dim
        self.calls = 0

    def embed(self, caption: str) -> np.ndarray:
        if not caption.strip():
            raise InvalidInputError("cannot embed an empty caption")
        caption = truncate_caption(caption)
        self.calls += 1
        digest = hashlib.sha256(caption.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "little")
        rng = np.random.Generator(np.random.PCG64(seed))
        vec = rng.standard_normal(self.dim).astype(np.float32)
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


class PretrainedCaptioner:
    """Image captioner backed by a pretrained vision-language model."""

    model_name = "Salesforce/blip-image-captioning-base"
    identity = "blip-captioning-base"

    def __init__(self):
        try:
            import torch
            from transformers import BlipForConditionalGeneration, BlipProcessor

            self._torch = torch
            self._processor = BlipProcessor.from_pretrained(self.model_name)
            self._model = BlipForConditionalGeneration.from_pretrained(self.model_name)
            self._model.eval()
        except Exception as exc:
            raise BackendUnavailableError(
                f"cannot load captioning model {self.model_name!r}: {exc}"
            ) from exc
        self.calls = 0

    def caption(self, image: np.ndarray) -> str:
        validate_image(image)
        self.calls += 1
        from PIL import Image

        pil = Image.fromarray(
            np.clip(np.asarray(image) * 255.0 + 0.5, 0, 255).astype(np.uint8)
        )
        inputs = self._processor(pil, return_tensors="pt")
        with self._torch.no_grad():
            out = self._model.generate(**inputs, max_new_tokens=40)
        text = self._processor.decode(out[0], skip_special_tokens=True).strip()
        return truncate_caption(text)


class PretrainedEmbedder:
    """Sentence embedding from a pretrained text encoder (mean-pooled, unit norm)."""

    model_name = "bert-base-uncased"
    identity = "bert-base-uncased-meanpool"

    def __init__(self, dim: int = 768):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer

            self._torch = torch
            self._tokenizer = AutoTokenizer.from_pretrained(self.model_name)
            self._model = AutoModel.from_pretrained(self.model_name)
            self._model.eval()
        except Exception as exc:
            raise BackendUnavailableError(
                f"cannot load text encoder {self.model_name!r}: {exc}"
            ) from exc
        hidden = int(self._model.config.hidden_size)
        if dim != hidden:
            raise ConfigError(
                f"text encoder produces {hidden}-dim embeddings, config wants {dim}"
            )
        self.dim = dim
        self.calls = 0

    def embed(self, caption: str) -> np.ndarray:
        if not caption.strip():
            raise InvalidInputError("cannot embed an empty caption")
        caption = truncate_caption(caption)
        self.calls += 1
        tokens = self._tokenizer(caption, return_tensors="pt", truncation=True)
        with self._torch.no_grad():
            hidden = self._model(**tokens).last_hidden_state
        mask = tokens["attention_mask"][0].unsqueeze(-1).float()
        pooled = (hidden[0] * mask).sum(dim=0) / mask.sum().clamp(min=1.0)
        vec = pooled.numpy().astype(np.float32)
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm > 0 else vec


def make_captioner(backend: str, seed: int = 0):
    if backend == "stub":
        return StubCaptioner(seed=seed)
    if backend == "pretrained":
        return PretrainedCaptioner()
    raise ConfigError(f"unknown semantic backend {backend!r}")


def make_embedder(backend: str, dim: int):
    if backend == "stub":
        return StubEmbedder(dim)
    if backend == "pretrained":
        return PretrainedEmbedder(dim)
    raise ConfigError(f"unknown semantic backend {backend!r}")


def backend_checksum(backend) -> str:
    """Digest of a backend's parameters (or identity for weightless stubs).

    Training must leave this unchanged: the semantic backends are frozen.
    """
    h = hashlib.sha256()
    h.update(backend.identity.encode("utf-8"))
    model = getattr(backend, "_model", None)
    if model is not None:
        for name, param in sorted(model.state_dict().items()):
            h.update(name.encode("utf-8"))
            h.update(param.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def _atomic_write(path: str, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path), prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class SemanticCache:
    """Disk cache of captions and embeddings keyed by (backend identity, id).

    Layout: `<root>/<backend_identity>/<image_id>.caption.txt` and
    `<image_id>.embed.f32` (little-endian float32). Writes are atomic;
    unreadable entries are recomputed and overwritten.
    """

    def __init__(self, root: str, captioner, embedder):
        self.captioner = captioner
        self.embedder = embedder
        self._dir = os.path.join(
            root, f"{captioner.identity}--{embedder.identity}"
        )
        os.makedirs(self._dir, exist_ok=True)

    def _caption_path(self, image_id: str) -> str:
        return os.path.join(self._dir, f"{image_id}.caption.txt")

    def _embed_path(self, image_id: str) -> str:
        return os.path.join(self._dir, f"{image_id}.embed.f32")

    def caption(self, image_id: str, image: np.ndarray) -> str:
        path = self._caption_path(image_id)
        if os.path.exists(path):
            try:
                with open(path, "rb") as f:
                    text = f.read().decode("utf-8")
                if text:
                    return text
                logger.warning("empty cached caption at %s; recomputing", path)
            except (OSError, UnicodeDecodeError) as exc:
                logger.warning("unreadable cached caption at %s (%s); recomputing", path, exc)
        text = self.captioner.caption(image)
        _atomic_write(path, text.encode("utf-8"))
        return text

    def embedding(self, image_id: str, image: np.ndarray) -> np.ndarray:
        path = self._embed_path(image_id)
        dim = self.embedder.dim
        if os.path.exists(path):
            try:
                with open(path, "rb") as f:
                    raw = f.read()
                # A truncated file whose size is not a multiple of 4 makes
                # frombuffer raise; treat it like any other corruption.
                vec = np.frombuffer(raw, dtype="<f4") if len(raw) % 4 == 0 else None
                if vec is not None and vec.shape[0] == dim and np.all(np.isfinite(vec)):
                    return vec.astype(np.float32)
                logger.warning("malformed cached embedding at %s; recomputing", path)
            except OSError as exc:
                logger.warning("unreadable cached embedding at %s (%s); recomputing", path, exc)
        caption = self.caption(image_id, image)
        vec = self.embedder.embed(caption)
        _atomic_write(path, vec.astype("<f4").tobytes())
        return vec


def describe(image: np.ndarray, captioner, embedder, cache: SemanticCache | None = None,
             image_id: str | None = None) -> tuple[str, np.ndarray]:
    """Caption an image and embed the caption, through the cache when given."""
    if cache is not None:
        if image_id is None:
            image_id = _image_digest(image).hex()[:24]
        return cache.caption(image_id, image), cache.embedding(image_id, image)
    caption = captioner.caption(image)
    return caption, embedder.embed(caption)
