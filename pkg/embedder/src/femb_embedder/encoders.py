"""Sentence encoders producing 768-dimensional vectors.

Two families:

* ``hash``: a deterministic feature-hashing encoder with no model
  download. Each token lands in a bucket (with a sign) derived from its
  SHA-256 digest; the sentence vector is the L2-normalized bucket sum.
  Useful for tests and air-gapped runs; carries no semantics.
* anything else is treated as a sentence-transformers model name. The
  model must produce 768-dim embeddings and runs in eval mode.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

DIM = 768
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EncoderError(ValueError):
    """Encoder cannot be constructed or violates the 768-dim contract."""


class HashEncoder:
    """Deterministic bag-of-hashed-tokens embedding."""

    name = "hash"

    def encode(self, sentences: list[str]) -> np.ndarray:
        out = np.zeros((len(sentences), DIM), dtype=np.float32)
        for i, sentence in enumerate(sentences):
            vec = np.zeros(DIM, dtype=np.float64)
            for token in _TOKEN_RE.findall(sentence.lower()):
                digest = hashlib.sha256(token.encode("utf-8")).digest()
                bucket = int.from_bytes(digest[:4], "little") % DIM
                sign = 1.0 if digest[4] % 2 == 0 else -1.0
                vec[bucket] += sign
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm
            out[i] = vec.astype(np.float32)
        return out


class SentenceTransformerEncoder:
    """Adapter over a pretrained sentence-transformers checkpoint."""

    def __init__(self, model_name: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(
                f"model {model_name!r} needs the sentence-transformers extra") from exc
        self.name = model_name
        try:
            self._model = SentenceTransformer(model_name)
        except Exception as exc:
            raise EncoderError(f"cannot load model {model_name!r}: {exc}") from exc
        self._model.eval()
        dim = self._model.get_sentence_embedding_dimension()
        if dim != DIM:
            raise EncoderError(f"model {model_name!r} produces {dim}-dim vectors, need {DIM}")

    def encode(self, sentences: list[str]) -> np.ndarray:
        vecs = self._model.encode(sentences, convert_to_numpy=True,
                                  show_progress_bar=False, batch_size=32)
        return np.asarray(vecs, dtype=np.float32)


def build_encoder(model_name: str):
    if model_name == "hash":
        return HashEncoder()
    return SentenceTransformerEncoder(model_name)
