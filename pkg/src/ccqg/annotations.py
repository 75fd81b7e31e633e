"""Annotated-text data model, CoNLL-U interchange, and token-level counts.

Documents arrive either as CoNLL-U files produced by an external annotation
pipeline or through the degraded heuristic tokenizer in
:func:`tokenize_fallback`. All types are immutable after construction, so
they are safe to share across workers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .stopwords import STOPWORDS

CLAUSE_RELATIONS = frozenset({
    "csubj", "csubjpass", "ccomp", "xcomp", "advcl", "acl", "acl:relcl",
    "relcl",
})

MODIFIER_RELATIONS = frozenset({
    "advmod", "amod", "nmod", "nmod:npmod", "npmod", "nmod:poss", "poss",
})


class ConlluParseError(ValueError):
    """Raised when a CoNLL-U file violates the interchange conventions."""


@dataclass(frozen=True)
class Token:
    """One annotated token; ``index`` is 1-based within its sentence."""

    index: int
    form: str
    lemma: str
    upos: str
    head: int        # 0 marks the root
    deprel: str
    entity: str = "O"  # BIO tag, "O" when not part of an entity

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"token index must be >= 1, got {self.index}")
        if self.head < 0:
            raise ValueError(f"token head must be >= 0, got {self.head}")
        if not self.deprel:
            raise ValueError("token deprel must be nonempty")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    char_span: tuple[int, int] = (0, 0)

    def __post_init__(self):
        for pos, tok in enumerate(self.tokens, start=1):
            if tok.index != pos:
                raise ValueError(
                    f"token indices must be contiguous 1..n; expected {pos}, "
                    f"got {tok.index}"
                )
        n = len(self.tokens)
        for tok in self.tokens:
            if tok.head > n:
                raise ValueError(
                    f"token head {tok.head} exceeds sentence length {n}"
                )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class AnnotatedDocument:
    doc_id: str
    sentences: tuple[Sentence, ...]
    source_text: str = ""

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def flat_tokens(self) -> list[Token]:
        return [t for s in self.sentences for t in s.tokens]


@dataclass(frozen=True)
class EntityProfile:
    """Canonical entity string -> (sentence index, token index) occurrences.

    Canonical strings are the lowercased surface forms of maximal B-/I-
    tagged spans; token indices are the 1-based span start positions.
    """

    mentions: dict[str, tuple[tuple[int, int], ...]] = field(default_factory=dict)

    @property
    def total_mentions(self) -> int:
        return sum(len(v) for v in self.mentions.values())


def _rebuild_text(sentences: list[list[Token]]) -> tuple[str, list[tuple[int, int]]]:
    """Join token forms into a synthetic source text and compute char spans."""
    parts = []
    spans = []
    offset = 0
    for tokens in sentences:
        text = " ".join(t.form for t in tokens)
        if parts:
            offset += 1  # separating space
        spans.append((offset, offset + len(text)))
        offset += len(text)
        parts.append(text)
    return " ".join(parts), spans


def _make_document(doc_id: str, sentences: list[list[Token]]) -> AnnotatedDocument:
    text, spans = _rebuild_text(sentences)
    sents = tuple(
        Sentence(tokens=tuple(toks), char_span=span)
        for toks, span in zip(sentences, spans)
    )
    return AnnotatedDocument(doc_id=doc_id, sentences=sents, source_text=text)


def _entity_from_misc(misc: str) -> str:
    if misc == "_" or not misc:
        return "O"
    for part in misc.split("|"):
        if part.startswith("NER="):
            return part[len("NER="):]
    return "O"


def parse_conllu(text: str) -> list[AnnotatedDocument]:
    """Parse CoNLL-U text into documents.

    Documents are delimited by ``# doc_id = <id>`` comment lines, sentences
    by blank lines. Each token line must carry exactly 10 tab-separated
    columns; entities are read from ``NER=`` entries in the MISC column.
    Multiword-token range lines (``i-j`` ids) are skipped.
    """
    docs: list[AnnotatedDocument] = []
    seen_ids: set[str] = set()
    doc_id: str | None = None
    doc_sentences: list[list[Token]] = []
    current: list[Token] = []

    def close_sentence():
        nonlocal current
        if current:
            doc_sentences.append(current)
            current = []

    def close_document():
        nonlocal doc_sentences
        close_sentence()
        if doc_id is not None:
            if doc_id in seen_ids:
                raise ConlluParseError(f"duplicate doc_id {doc_id!r}")
            seen_ids.add(doc_id)
            docs.append(_make_document(doc_id, doc_sentences))
        elif doc_sentences:
            raise ConlluParseError(
                "token lines before any '# doc_id =' header"
            )
        doc_sentences = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            close_sentence()
            continue
        if line.startswith("#"):
            m = re.match(r"#\s*doc_id\s*=\s*(.+)$", line)
            if m:
                close_document()
                doc_id = m.group(1).strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(
                f"line {lineno}: expected 10 tab-separated columns, "
                f"got {len(cols)}"
            )
        tok_id = cols[0]
        if "-" in tok_id:
            continue  # multiword-token range line
        try:
            index = int(tok_id)
        except ValueError:
            raise ConlluParseError(
                f"line {lineno}: non-integer token id {tok_id!r}"
            ) from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(
                f"line {lineno}: non-integer head {cols[6]!r}"
            ) from None
        current.append(Token(
            index=index,
            form=cols[1],
            lemma=cols[2],
            upos=cols[3],
            head=head,
            deprel=cols[7],
            entity=_entity_from_misc(cols[9]),
        ))
    close_document()
    return docs


def to_conllu(docs: list[AnnotatedDocument]) -> str:
    """Serialize documents back to the CoNLL-U conventions of parse_conllu."""
    lines: list[str] = []
    for doc in docs:
        lines.append(f"# doc_id = {doc.doc_id}")
        for sent in doc.sentences:
            for tok in sent.tokens:
                misc = f"NER={tok.entity}" if tok.entity != "O" else "_"
                lines.append("\t".join([
                    str(tok.index), tok.form, tok.lemma, tok.upos, "_", "_",
                    str(tok.head), tok.deprel, "_", misc,
                ]))
            lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


_SENT_BOUNDARY = re.compile(r"(?<=[.?!])\s+")
_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize_fallback(raw: str, doc_id: str = "fallback") -> AnnotatedDocument:
    """Heuristic annotation when no parser output exists.

    Sentences split on ``.?!`` followed by whitespace; tokens on whitespace
    and punctuation boundaries. Every token gets upos "X" and deprel "dep";
    sentence-internal runs of capitalized tokens become "ENT" entities.
    """
    if not raw or not raw.strip():
        raise ValueError("tokenize_fallback requires nonempty input")
    sentences: list[list[Token]] = []
    for chunk in _SENT_BOUNDARY.split(raw.strip()):
        forms = _TOKEN.findall(chunk)
        if not forms:
            continue
        entities = ["O"] * len(forms)
        i = 0
        while i < len(forms):
            if forms[i][0].isupper() and i > 0:
                j = i
                while j < len(forms) and forms[j][0].isupper():
                    j += 1
                entities[i] = "B-ENT"
                for k in range(i + 1, j):
                    entities[k] = "I-ENT"
                i = j
            else:
                i += 1
        tokens = [
            Token(
                index=pos + 1,
                form=form,
                lemma=form.lower(),
                upos="X",
                head=0 if pos == 0 else 1,
                deprel="dep",
                entity=entities[pos],
            )
            for pos, form in enumerate(forms)
        ]
        sentences.append(tokens)
    if not sentences:
        raise ValueError("tokenize_fallback produced no sentences")
    return _make_document(doc_id, sentences)


def clause_count(sentence: Sentence) -> int:
    """1 for the main clause plus one per clause-introducing relation."""
    return 1 + sum(1 for t in sentence.tokens if t.deprel in CLAUSE_RELATIONS)


def mod_relation_count(sentence: Sentence) -> int:
    return sum(1 for t in sentence.tokens if t.deprel in MODIFIER_RELATIONS)


def entity_mentions(doc: AnnotatedDocument) -> EntityProfile:
    """Group maximal BIO spans into lowercased canonical entities.

    A span starts at each B- tag and extends over following I- tags; an I-
    tag with no open span is ignored, so total_mentions equals the number
    of B- tags in the document.
    """
    mentions: dict[str, list[tuple[int, int]]] = {}
    for s_idx, sent in enumerate(doc.sentences):
        open_start: int | None = None
        parts: list[str] = []

        def close():
            nonlocal open_start, parts
            if open_start is not None:
                canonical = " ".join(parts).lower()
                mentions.setdefault(canonical, []).append((s_idx, open_start))
            open_start = None
            parts = []

        for tok in sent.tokens:
            tag = tok.entity
            if tag.startswith("B-"):
                close()
                open_start = tok.index
                parts = [tok.form]
            elif tag.startswith("I-") and open_start is not None:
                parts.append(tok.form)
            else:
                close()
        close()
    return EntityProfile(mentions={k: tuple(v) for k, v in mentions.items()})


def content_lemmas(sentence: Sentence) -> list[str]:
    """Lemmas of non-punctuation, non-stopword tokens, lowercased."""
    return [
        t.lemma.lower()
        for t in sentence.tokens
        if t.upos != "PUNCT" and t.lemma.lower() not in STOPWORDS
    ]


def unigram_topic(sentence: Sentence, vocab: list[str], alpha: float) -> np.ndarray:
    """Additively smoothed unigram distribution over ``vocab``.

    p[w] = (count(w) + alpha) / (total + alpha * |vocab|), where counts run
    over the sentence's content lemmas that appear in vocab. A sentence
    with no in-vocab content tokens yields the uniform distribution.
    """
    if not vocab:
        raise ValueError("unigram_topic requires a nonempty vocab")
    if alpha <= 0:
        raise ValueError("unigram_topic requires alpha > 0")
    index = {w: i for i, w in enumerate(vocab)}
    counts = np.zeros(len(vocab), dtype=np.float64)
    for lemma in content_lemmas(sentence):
        i = index.get(lemma)
        if i is not None:
            counts[i] += 1.0
    total = counts.sum()
    return (counts + alpha) / (total + alpha * len(vocab))
