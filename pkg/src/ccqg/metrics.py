"""Automatic generation metrics: corpus BLEU-4, ROUGE-L, consistency F1,
and a mechanical proxy for cross-level output diversity.

BLEU smoothing: any n-gram order whose clipped-match count is zero gets
1e-9 added to both numerator and denominator, so degenerate orders (for
example 4-grams of a 3-token candidate) contribute a factor of 1 rather
than collapsing the geometric mean.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from .estimator import ComplexityLabel, EstimatorReport, evaluate_estimator

BLEU_EPSILON = 1e-9

Tokens = Sequence[str]


def _ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(
        tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)
    )


def bleu4(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    """Corpus BLEU-4 with a single reference per candidate."""
    if len(candidates) != len(references):
        raise ValueError(
            f"length mismatch: {len(candidates)} candidates vs "
            f"{len(references)} references"
        )
    if not candidates:
        raise ValueError("bleu4 requires at least one pair")
    c_len = sum(len(c) for c in candidates)
    r_len = sum(len(r) for r in references)
    if c_len == 0:
        return 0.0
    log_p_sum = 0.0
    for n in range(1, 5):
        num = 0
        den = 0
        for cand, ref in zip(candidates, references):
            cand_grams = _ngram_counts(cand, n)
            ref_grams = _ngram_counts(ref, n)
            num += sum(min(v, ref_grams[g]) for g, v in cand_grams.items())
            den += sum(cand_grams.values())
        if num == 0:
            p = (num + BLEU_EPSILON) / (den + BLEU_EPSILON)
        else:
            p = num / den
        log_p_sum += math.log(p)
    brevity = math.exp(min(0.0, 1.0 - r_len / c_len))
    return math.exp(log_p_sum / 4.0) * brevity


def sentence_bleu4(candidate: Tokens, reference: Tokens) -> float:
    return bleu4([candidate], [reference])


def _lcs_length(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """LCS F-measure with beta = 1; 0 when nothing is shared."""
    if not candidate or not reference:
        raise ValueError("rouge_l requires nonempty token lists")
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


def corpus_rouge_l(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> float:
    if len(candidates) != len(references):
        raise ValueError(
            f"length mismatch: {len(candidates)} vs {len(references)}"
        )
    if not candidates:
        raise ValueError("corpus_rouge_l requires at least one pair")
    return sum(rouge_l(c, r) for c, r in zip(candidates, references)) / len(candidates)


@dataclass(frozen=True)
class ConsistencyReport:
    f1_simple: float
    f1_complex: float
    macro_f1: float
    details: EstimatorReport


def consistency_f1(
    questions: Sequence[str],
    targets: Sequence[ComplexityLabel],
    pipeline: Callable[[int, str], ComplexityLabel],
) -> ConsistencyReport:
    """Label each generated question and score it against its target level.

    pipeline(i, question) must return the estimator's label for the i-th
    question; the closure carries whatever passage and answer context the
    feature computation needs.
    """
    if len(questions) != len(targets):
        raise ValueError(
            f"length mismatch: {len(questions)} questions vs "
            f"{len(targets)} targets"
        )
    predicted = [pipeline(i, q) for i, q in enumerate(questions)]
    details = evaluate_estimator(predicted, list(targets))
    return ConsistencyReport(
        f1_simple=details.f1_simple,
        f1_complex=details.f1_complex,
        macro_f1=details.macro_f1,
        details=details,
    )


def pairwise_diversity(
    simple_outputs: Sequence[Tokens], complex_outputs: Sequence[Tokens],
) -> float:
    """Mean over instance pairs of 1 - sentence BLEU-4(simple, complex)."""
    if len(simple_outputs) != len(complex_outputs):
        raise ValueError(
            f"unpaired inputs: {len(simple_outputs)} vs {len(complex_outputs)}"
        )
    if not simple_outputs:
        raise ValueError("pairwise_diversity requires at least one pair")
    total = sum(
        1.0 - sentence_bleu4(s, c)
        for s, c in zip(simple_outputs, complex_outputs)
    )
    return total / len(simple_outputs)


@dataclass(frozen=True)
class EvalReport:
    bleu4: float
    rouge_l: float
    consistency_simple: float
    consistency_complex: float
    consistency_macro: float
    diversity: float
    n_simple: int
    n_complex: int

    def __post_init__(self):
        for name in ("bleu4", "rouge_l", "consistency_simple",
                     "consistency_complex", "consistency_macro", "diversity"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name} must lie in [0,1], got {v}")

    def to_text(self) -> str:
        return "\n".join([
            f"bleu4={self.bleu4:.6f}",
            f"rouge_l={self.rouge_l:.6f}",
            f"consistency_simple={self.consistency_simple:.6f}",
            f"consistency_complex={self.consistency_complex:.6f}",
            f"consistency_macro={self.consistency_macro:.6f}",
            f"diversity={self.diversity:.6f}",
            f"n_simple={self.n_simple}",
            f"n_complex={self.n_complex}",
        ]) + "\n"

    ROW_HEADER = ("bleu4\trouge_l\tconsistency_simple\tconsistency_complex"
                  "\tconsistency_macro\tdiversity\tn_simple\tn_complex")

    def to_row(self) -> str:
        return "\t".join([
            f"{self.bleu4:.6f}", f"{self.rouge_l:.6f}",
            f"{self.consistency_simple:.6f}", f"{self.consistency_complex:.6f}",
            f"{self.consistency_macro:.6f}", f"{self.diversity:.6f}",
            str(self.n_simple), str(self.n_complex),
        ])
