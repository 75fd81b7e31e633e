"""Five surface features behind the question-complexity score.

f1 counts clauses in the question, f2 counts modifier relations, f3 turns
passage topic drift into a coherence number, f4 is the inverse passage
frequency of the question's entities, and f5 is the token distance between
those entities and the answer span. All are computed from annotated
documents only; no trained components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotations import (
    AnnotatedDocument,
    clause_count,
    content_lemmas,
    entity_mentions,
    mod_relation_count,
    unigram_topic,
)

F3_EPSILON = 1e-6


@dataclass(frozen=True)
class ComplexityFeatures:
    f1: float
    f2: float
    f3: float
    f4: float
    f5: float

    def __post_init__(self):
        values = (self.f1, self.f2, self.f3, self.f4, self.f5)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"features must be finite, got {values}")
        if self.f1 < 1:
            raise ValueError(f"f1 must be >= 1, got {self.f1}")
        if min(self.f2, self.f3, self.f4, self.f5) < 0:
            raise ValueError(f"features must be >= 0, got {values}")

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3, self.f4, self.f5],
                        dtype=np.float64)


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence in base 2, so the result lies in [0,1].

    0*log(0) terms contribute 0.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if (v < 0).any():
            raise ValueError(f"{name} has negative entries")
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} sums to {v.sum()}, not 1")
    m = (p + q) / 2.0

    def kl(a: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / m[mask])))

    return 0.5 * kl(p) + 0.5 * kl(q)


def feature_topic_coherence(
    passage: AnnotatedDocument, alpha: float, mode: str = "inverse",
) -> float:
    """f3 from pairwise topic divergence between passage sentences.

    d_JS is the mean JS divergence over sentence pairs, using additively
    smoothed unigram distributions over the passage's content lemmas. The
    default "inverse" mode returns 1/max(d_JS, eps); "direct" returns d_JS
    itself. Fewer than two sentences (or no content lemmas at all) count
    as maximally coherent: d_JS = 0.
    """
    if mode not in ("inverse", "direct"):
        raise ValueError(f"unknown f3 mode {mode!r}")
    vocab = sorted({
        lemma for sent in passage.sentences for lemma in content_lemmas(sent)
    })
    n = len(passage.sentences)
    if n < 2 or not vocab:
        d_js = 0.0
    else:
        topics = [unigram_topic(s, vocab, alpha) for s in passage.sentences]
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                total += js_divergence(topics[i], topics[j])
        d_js = total / (n * (n - 1) / 2)
    if mode == "direct":
        return d_js
    return 1.0 / max(d_js, F3_EPSILON)


def feature_entity_frequency(
    question: AnnotatedDocument, passage: AnnotatedDocument,
) -> float:
    """f4: inverse of the mean passage frequency of shared entities.

    Frequency of entity e is its passage mention count over the passage's
    total entity mentions. No shared entities -> T + 1; no passage
    entities at all -> 1.
    """
    passage_profile = entity_mentions(passage)
    total = passage_profile.total_mentions
    if total == 0:
        return 1.0
    shared = set(entity_mentions(question).mentions) & set(
        passage_profile.mentions
    )
    if not shared:
        return float(total + 1)
    avg = sum(
        len(passage_profile.mentions[e]) / total for e in shared
    ) / len(shared)
    return 1.0 / avg


def _flat_positions(doc: AnnotatedDocument) -> dict[str, list[int]]:
    """Entity -> 0-based span-start positions in the flattened passage."""
    offsets = []
    off = 0
    for sent in doc.sentences:
        offsets.append(off)
        off += len(sent)
    profile = entity_mentions(doc)
    return {
        entity: [offsets[s_idx] + tok_idx - 1 for s_idx, tok_idx in occs]
        for entity, occs in profile.mentions.items()
    }


def feature_entity_answer_distance(
    question: AnnotatedDocument,
    passage: AnnotatedDocument,
    answer_span: tuple[int, int],
) -> float:
    """f5: mean over shared entities of the min token gap to the answer.

    answer_span is a half-open [start, stop) range over the flattened
    passage tokens. An occurrence inside the span contributes 0; otherwise
    the count of tokens strictly between. Questions without
    passage-matching entities fall back to the passage token count.
    """
    n_tokens = passage.token_count()
    start, stop = answer_span
    if not (0 <= start < stop <= n_tokens):
        raise ValueError(
            f"answer span [{start}, {stop}) invalid for a "
            f"{n_tokens}-token passage"
        )
    passage_positions = _flat_positions(passage)
    question_entities = set(entity_mentions(question).mentions)
    gaps = []
    for entity in question_entities:
        positions = passage_positions.get(entity)
        if not positions:
            continue
        best = min(
            0 if start <= p < stop else (start - p - 1 if p < start else p - stop)
            for p in positions
        )
        gaps.append(best)
    if not gaps:
        return float(n_tokens)
    return float(sum(gaps) / len(gaps))


def compute_raw_features(
    question: AnnotatedDocument,
    passage: AnnotatedDocument,
    answer_span: tuple[int, int],
    alpha: float = 0.01,
    f3_mode: str = "inverse",
) -> ComplexityFeatures:
    """All five raw features for one question/passage/answer triple."""
    return ComplexityFeatures(
        f1=float(sum(clause_count(s) for s in question.sentences)),
        f2=float(sum(mod_relation_count(s) for s in question.sentences)),
        f3=feature_topic_coherence(passage, alpha, f3_mode),
        f4=feature_entity_frequency(question, passage),
        f5=feature_entity_answer_distance(question, passage, answer_span),
    )


def locate_answer_span(
    passage: AnnotatedDocument, answer_tokens: list[str],
) -> tuple[int, int] | None:
    """First case-insensitive match of answer_tokens in the flat passage.

    Returns a half-open token range, or None when no contiguous match
    exists (annotation tokenization can disagree with the source span).
    """
    if not answer_tokens:
        return None
    target = [t.lower() for t in answer_tokens]
    forms = [t.form.lower() for t in passage.flat_tokens()]
    k = len(target)
    for i in range(len(forms) - k + 1):
        if forms[i:i + k] == target:
            return (i, i + k)
    return None
