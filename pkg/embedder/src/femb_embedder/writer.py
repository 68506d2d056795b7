"""FEMB corpus writer.

Wire format (little-endian): magic "FEMB0001", u32 record count, then per
record u32 meeting-id length + UTF-8 bytes, u32 member-id length + UTF-8
bytes, u16 sentence count, and a 256x768 float32 row-major matrix whose
rows past the sentence count are zero padding. Documents longer than 256
sentences are truncated (the count is recorded); empty documents are
skipped and logged.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import DIM, EncoderError, build_encoder

MAGIC = b"FEMB0001"
MAX_SENTENCES = 256


@dataclass
class SentenceDoc:
    meeting_id: str
    member_id: str
    sentences: list[str]


@dataclass
class EmbedReport:
    n_documents: int = 0
    n_skipped_empty: int = 0
    n_truncated: int = 0
    skipped: list = field(default_factory=list)
    truncated: list = field(default_factory=list)


def read_docs_jsonl(path) -> list[SentenceDoc]:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            body = json.loads(line)
            try:
                docs.append(SentenceDoc(
                    meeting_id=str(body["meeting_id"]),
                    member_id=str(body["member_id"]),
                    sentences=[str(s) for s in body["sentences"]],
                ))
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
    return docs


def embed_corpus(docs: list[SentenceDoc], model_name: str, out_path) -> EmbedReport:
    """Encode every document and write the corpus file plus its manifest.

    Re-running with identical inputs produces a bit-identical file: the
    encoders are deterministic and the writer carries no timestamps.
    """
    encoder = build_encoder(model_name)
    report = EmbedReport()
    out_path = Path(out_path)
    with open(out_path, "wb") as fh:
        fh.write(MAGIC)
        count_pos = fh.tell()
        fh.write(struct.pack("<I", 0))  # patched after the loop
        written = 0
        for doc in docs:
            sentences = doc.sentences
            if not sentences:
                report.n_skipped_empty += 1
                report.skipped.append(f"{doc.meeting_id}/{doc.member_id}")
                continue
            if len(sentences) > MAX_SENTENCES:
                report.n_truncated += 1
                report.truncated.append(
                    f"{doc.meeting_id}/{doc.member_id}: {len(sentences)} -> {MAX_SENTENCES}")
                sentences = sentences[:MAX_SENTENCES]
            vectors = encoder.encode(sentences)
            if vectors.shape != (len(sentences), DIM):
                raise EncoderError(
                    f"encoder returned {vectors.shape}, need ({len(sentences)}, {DIM})")
            if not np.all(np.isfinite(vectors)):
                raise EncoderError(
                    f"encoder produced non-finite values for {doc.meeting_id}/{doc.member_id}")
            matrix = np.zeros((MAX_SENTENCES, DIM), dtype="<f4")
            matrix[:len(sentences)] = vectors
            mid = doc.meeting_id.encode("utf-8")
            pid = doc.member_id.encode("utf-8")
            fh.write(struct.pack("<I", len(mid)))
            fh.write(mid)
            fh.write(struct.pack("<I", len(pid)))
            fh.write(pid)
            fh.write(struct.pack("<H", len(sentences)))
            fh.write(matrix.tobytes())
            written += 1
        fh.seek(count_pos)
        fh.write(struct.pack("<I", written))
    report.n_documents = written

    digest = hashlib.sha256(out_path.read_bytes()).hexdigest()
    manifest = {
        "model": getattr(encoder, "name", model_name),
        "output": out_path.name,
        "output_sha256": digest,
        "n_documents": report.n_documents,
        "n_skipped_empty": report.n_skipped_empty,
        "n_truncated": report.n_truncated,
        "skipped": report.skipped,
        "truncated": report.truncated,
    }
    with open(str(out_path) + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report
