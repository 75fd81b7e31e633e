"""Tolerant corpus readers for the three supported input shapes.

Unlike a training loader, the adaptor must not die on one bad record:
malformed entries are returned as (locator, reason) skips so the caller
can list them in the manifest. Only file-level problems (missing file,
invalid JSON, wrong top-level shape) raise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

FORMATS = ("squad", "hotpotqa", "plain")


class CorpusError(ValueError):
    """The corpus file itself cannot be read or has the wrong shape."""


@dataclass(frozen=True)
class Record:
    id: str
    passage: str
    question: str


Skip = tuple[str, str]  # (record id or positional locator, reason)


def _text(value) -> str:
    return value.strip() if isinstance(value, str) else ""


def _read_squad(payload, skips: list[Skip]) -> list[Record]:
    if not isinstance(payload, dict) or not isinstance(payload.get("data"), list):
        raise CorpusError("squad corpus must be an object with a 'data' list")
    records = []
    for a_i, article in enumerate(payload["data"]):
        paragraphs = article.get("paragraphs", []) if isinstance(article, dict) else []
        if not isinstance(paragraphs, list):
            skips.append((f"data[{a_i}]", "paragraphs is not a list"))
            continue
        for p_i, para in enumerate(paragraphs):
            where = f"data[{a_i}].paragraphs[{p_i}]"
            if not isinstance(para, dict):
                skips.append((where, "paragraph is not an object"))
                continue
            context = _text(para.get("context"))
            qas = para.get("qas", [])
            if not isinstance(qas, list):
                skips.append((where, "qas is not a list"))
                continue
            for q_i, qa in enumerate(qas):
                locator = f"{where}.qas[{q_i}]"
                if not isinstance(qa, dict):
                    skips.append((locator, "qa entry is not an object"))
                    continue
                rec_id = _text(str(qa.get("id", "")))
                if not rec_id:
                    skips.append((locator, "missing id"))
                    continue
                if not context:
                    skips.append((rec_id, "empty passage"))
                    continue
                question = _text(qa.get("question"))
                if not question:
                    skips.append((rec_id, "empty question"))
                    continue
                records.append(Record(rec_id, context, question))
    return records


def _read_hotpotqa(payload, skips: list[Skip]) -> list[Record]:
    if not isinstance(payload, list):
        raise CorpusError("hotpotqa corpus must be a top-level list")
    records = []
    for r_i, rec in enumerate(payload):
        locator = f"[{r_i}]"
        if not isinstance(rec, dict):
            skips.append((locator, "record is not an object"))
            continue
        rec_id = _text(str(rec.get("_id", "")))
        if not rec_id:
            skips.append((locator, "missing _id"))
            continue
        context = rec.get("context")
        if not isinstance(context, list):
            skips.append((rec_id, "missing context"))
            continue
        parts = []
        ok = True
        for pair in context:
            if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                    or not isinstance(pair[1], list)):
                ok = False
                break
            parts.append(" ".join(str(s) for s in pair[1]))
        if not ok:
            skips.append((rec_id, "malformed context"))
            continue
        passage = _text(" ".join(parts))
        if not passage:
            skips.append((rec_id, "empty passage"))
            continue
        question = _text(rec.get("question"))
        if not question:
            skips.append((rec_id, "empty question"))
            continue
        records.append(Record(rec_id, passage, question))
    return records


def _read_plain(text: str, skips: list[Skip]) -> list[Record]:
    """JSON Lines with at least id/passage/question keys per object."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        locator = f"line {lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            skips.append((locator, "invalid json"))
            continue
        if not isinstance(rec, dict):
            skips.append((locator, "record is not an object"))
            continue
        rec_id = _text(str(rec.get("id", "")))
        if not rec_id:
            skips.append((locator, "missing id"))
            continue
        passage = _text(rec.get("passage"))
        if not passage:
            skips.append((rec_id, "empty passage"))
            continue
        question = _text(rec.get("question"))
        if not question:
            skips.append((rec_id, "empty question"))
            continue
        records.append(Record(rec_id, passage, question))
    return records


def read_corpus(path: str | Path, format: str) -> tuple[list[Record], list[Skip]]:
    """Read a corpus file into records plus per-record skips."""
    if format not in FORMATS:
        raise CorpusError(f"unknown corpus format {format!r}; "
                          f"expected one of {', '.join(FORMATS)}")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc
    skips: list[Skip] = []
    if format == "plain":
        return _read_plain(text, skips), skips
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: invalid json: {exc}") from exc
    reader = _read_squad if format == "squad" else _read_hotpotqa
    return reader(payload, skips), skips
