"""Annotation job: corpus in, two CoNLL-U files plus a manifest out.

Emitted documents follow the interchange conventions of the consumer:
one ``# doc_id = <id>#passage`` / ``<id>#question`` header per document,
10 tab-separated columns per token, entities as ``NER=`` entries in the
MISC column, sentences separated by blank lines. All output files are
written atomically (temp + rename), and a rerun over the same inputs is
byte-identical.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import FORMATS, Record, read_corpus
from .pipeline import BUILTIN_MODEL, TokenAnnotation, load_pipeline

PASSAGES_FILE = "passages.conllu"
QUESTIONS_FILE = "questions.conllu"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class AdaptorJob:
    corpus: str
    format: str
    output_dir: str
    model: str = BUILTIN_MODEL
    batch_size: int = 32

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {', '.join(FORMATS)}, "
                             f"got {self.format!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def _serialize_document(
    doc_id: str, sentences: Sequence[Sequence[TokenAnnotation]],
) -> list[str]:
    lines = [f"# doc_id = {doc_id}"]
    for sentence in sentences:
        for index, tok in enumerate(sentence, start=1):
            misc = f"NER={tok.entity}" if tok.entity != "O" else "_"
            lines.append("\t".join([
                str(index), tok.form, tok.lemma, tok.upos, "_", "_",
                str(tok.head), tok.deprel, "_", misc,
            ]))
        lines.append("")
    return lines


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def annotate_corpus(job: AdaptorJob) -> dict:
    """Run the job; returns the manifest that was also written to disk.

    Per-record problems (duplicate or unusable ids, empty texts, records
    the reader could not interpret) are skipped and listed; only missing
    models, unreadable corpora, and unwritable outputs are fatal.
    """
    pipeline = load_pipeline(job.model)
    records, skips = read_corpus(job.corpus, job.format)

    seen: set[str] = set()
    usable: list[Record] = []
    for rec in records:
        if any(ch in rec.id for ch in "\t\n\r"):
            skips.append((rec.id.replace("\n", "\\n").replace("\t", "\\t")
                          .replace("\r", "\\r"), "invalid id"))
            continue
        if rec.id in seen:
            skips.append((rec.id, "duplicate id"))
            continue
        seen.add(rec.id)
        usable.append(rec)

    ids: list[str] = []
    passage_lines: list[str] = []
    question_lines: list[str] = []
    for start in range(0, len(usable), job.batch_size):
        batch = usable[start:start + job.batch_size]
        annotated_p = pipeline.annotate_many(
            [r.passage for r in batch], batch_size=job.batch_size)
        annotated_q = pipeline.annotate_many(
            [r.question for r in batch], batch_size=job.batch_size)
        for rec, p_sents, q_sents in zip(batch, annotated_p, annotated_q):
            if not p_sents:
                skips.append((rec.id, "passage produced no tokens"))
                continue
            if not q_sents:
                skips.append((rec.id, "question produced no tokens"))
                continue
            ids.append(rec.id)
            passage_lines.extend(
                _serialize_document(f"{rec.id}#passage", p_sents))
            question_lines.extend(
                _serialize_document(f"{rec.id}#question", q_sents))

    out_dir = Path(job.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "corpus": str(job.corpus),
        "format": job.format,
        "model": pipeline.name,
        "counts": {
            "annotated": len(ids),
            "skipped": len(skips),
            "passage_documents": len(ids),
            "question_documents": len(ids),
        },
        "ids": ids,
        "skipped": [{"id": sid, "reason": reason} for sid, reason in skips],
    }

    def block(lines: list[str]) -> str:
        return "\n".join(lines) + ("\n" if lines else "")

    _atomic_write(out_dir / PASSAGES_FILE, block(passage_lines))
    _atomic_write(out_dir / QUESTIONS_FILE, block(question_lines))
    _atomic_write(out_dir / MANIFEST_FILE,
                  json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
