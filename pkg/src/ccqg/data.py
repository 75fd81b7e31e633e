"""Corpus ingestion, filtering, splitting, labeling, and vocabulary.

Two input schemas are understood: SQuAD-shaped JSON (data -> paragraphs ->
qas) and HotpotQA-shaped JSON (flat records with [title, sentences]
context pairs). Everything downstream works on QAInstance records and
line-delimited JSON artifacts.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .annotations import AnnotatedDocument, tokenize_fallback
from .estimator import (
    ComplexityLabel,
    FeatureNormalizer,
    classify,
    coerce_label,
    cpx_score,
    normalize,
)
from .features import compute_raw_features, locate_answer_span

log = logging.getLogger(__name__)

PAD, SOS, EOS, UNK = "<pad>", "<sos>", "<eos>", "<unk>"
SPECIALS = (PAD, SOS, EOS, UNK)
PAD_ID, SOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3


def _find_token_span(passage: str, answer_text: str) -> tuple[int, int] | None:
    """First whitespace-token match of answer_text, case-insensitive."""
    needle = answer_text.lower().split()
    hay = passage.lower().split()
    if not needle:
        return None
    k = len(needle)
    for i in range(len(hay) - k + 1):
        if hay[i:i + k] == needle:
            return (i, i + k)
    return None


@dataclass(frozen=True)
class QAInstance:
    id: str
    passage: str
    question: str
    answer_text: str
    answer_span: tuple[int, int] | None = None
    gold_complexity: ComplexityLabel | None = None
    predicted_complexity: ComplexityLabel | None = None

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError(f"instance {self.id}: question must be nonempty")
        if self.answer_span is not None:
            start, stop = self.answer_span
            tokens = self.passage.split()
            if not (0 <= start < stop <= len(tokens)):
                raise ValueError(
                    f"instance {self.id}: span [{start}, {stop}) invalid "
                    f"for a {len(tokens)}-token passage"
                )
            covered = " ".join(tokens[start:stop]).lower()
            if covered != " ".join(self.answer_text.split()).lower():
                raise ValueError(
                    f"instance {self.id}: span text {covered!r} does not "
                    f"match answer {self.answer_text!r}"
                )


def _load_squad(payload, path: str) -> list[QAInstance]:
    out = []
    if not isinstance(payload, dict) or "data" not in payload:
        raise ValueError(f"{path}: squad file must have a top-level 'data' list")
    for a_i, article in enumerate(payload["data"]):
        for p_i, para in enumerate(article.get("paragraphs", [])):
            where = f"{path}: data[{a_i}].paragraphs[{p_i}]"
            context = para.get("context")
            if context is None:
                raise ValueError(f"{where}: missing 'context'")
            for q_i, qa in enumerate(para.get("qas", [])):
                rec = f"{where}.qas[{q_i}]"
                if "question" not in qa or "id" not in qa:
                    raise ValueError(f"{rec}: missing 'question' or 'id'")
                question = qa["question"]
                if not str(question).strip():
                    log.warning("%s: empty question, skipped", rec)
                    continue
                answers = qa.get("answers", [])
                answer_text = answers[0]["text"] if answers else ""
                out.append(QAInstance(
                    id=str(qa["id"]),
                    passage=context,
                    question=str(question),
                    answer_text=str(answer_text),
                    answer_span=_find_token_span(context, str(answer_text)),
                ))
    return out


_LEVEL_MAP = {"easy": ComplexityLabel.SIMPLE, "hard": ComplexityLabel.COMPLEX}


def _load_hotpotqa(payload, path: str) -> list[QAInstance]:
    if not isinstance(payload, list):
        raise ValueError(f"{path}: hotpotqa file must be a top-level list")
    out = []
    for r_i, rec in enumerate(payload):
        where = f"{path}: [{r_i}]"
        for key in ("_id", "question", "answer", "context"):
            if key not in rec:
                raise ValueError(f"{where}: missing {key!r}")
        question = str(rec["question"])
        if not question.strip():
            log.warning("%s: empty question, skipped", where)
            continue
        paragraphs = []
        for c_i, pair in enumerate(rec["context"]):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ValueError(
                    f"{where}.context[{c_i}]: expected [title, sentences]"
                )
            paragraphs.append(" ".join(pair[1]))
        passage = " ".join(paragraphs)
        answer_text = str(rec["answer"])
        out.append(QAInstance(
            id=str(rec["_id"]),
            passage=passage,
            question=question,
            answer_text=answer_text,
            answer_span=_find_token_span(passage, answer_text),
            gold_complexity=_LEVEL_MAP.get(rec.get("level")),
        ))
    return out


def load_qa_json(path: str | Path, format: str) -> list[QAInstance]:
    """Load a SQuAD- or HotpotQA-shaped JSON corpus into QAInstances."""
    if format not in ("squad", "hotpotqa"):
        raise ValueError(f"unknown corpus format {format!r}")
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON: {exc}") from exc
    loader = _load_squad if format == "squad" else _load_hotpotqa
    return loader(payload, str(path))


def filter_answerable(instances: Sequence[QAInstance]) -> list[QAInstance]:
    """Keep instances whose answer occurs contiguously in the passage."""
    kept = []
    for inst in instances:
        span = inst.answer_span or _find_token_span(inst.passage, inst.answer_text)
        if span is None:
            continue
        if inst.answer_span is None:
            inst = dataclasses.replace(inst, answer_span=span)
        kept.append(inst)
    removed = len(instances) - len(kept)
    if removed:
        log.info("filter_answerable removed %d of %d instances",
                 removed, len(instances))
    return kept


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[QAInstance, ...]
    dev: tuple[QAInstance, ...]
    test: tuple[QAInstance, ...]
    seed: int

    def __post_init__(self):
        ids = [i.id for part in (self.train, self.dev, self.test) for i in part]
        if len(ids) != len(set(ids)):
            raise ValueError("split parts must be disjoint by id")


def split_dataset(instances: Sequence[QAInstance], seed: int) -> DatasetSplit:
    """Deterministic shuffle, then an 80/10/10 partition.

    Train takes floor(0.8 n); the remainder splits evenly with any odd
    leftover going to test.
    """
    n = len(instances)
    if n < 10:
        raise ValueError(f"need at least 10 instances to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [instances[i] for i in order]
    n_train = int(0.8 * n)
    rest = n - n_train
    n_dev = rest // 2
    return DatasetSplit(
        train=tuple(shuffled[:n_train]),
        dev=tuple(shuffled[n_train:n_train + n_dev]),
        test=tuple(shuffled[n_train + n_dev:]),
        seed=seed,
    )


def annotate_fallback_corpus(
    instances: Sequence[QAInstance],
) -> dict[str, AnnotatedDocument]:
    """Heuristic annotations keyed `<id>#passage` / `<id>#question`."""
    out: dict[str, AnnotatedDocument] = {}
    for inst in instances:
        out[f"{inst.id}#passage"] = tokenize_fallback(
            inst.passage, doc_id=f"{inst.id}#passage",
        )
        out[f"{inst.id}#question"] = tokenize_fallback(
            inst.question, doc_id=f"{inst.id}#question",
        )
    return out


def corpus_features(
    instances: Sequence[QAInstance],
    annotations: Mapping[str, AnnotatedDocument],
    alpha: float = 0.01,
    f3_mode: str = "inverse",
) -> tuple[list[QAInstance], list, list[str]]:
    """Raw feature vectors for every instance whose annotations resolve.

    Returns (scored instances, their features, skipped ids). An instance
    is skipped when either document is missing or the answer cannot be
    located in the annotated passage.
    """
    scored: list[QAInstance] = []
    features = []
    skipped: list[str] = []
    for inst in instances:
        question = annotations.get(f"{inst.id}#question")
        passage = annotations.get(f"{inst.id}#passage")
        span = None
        if passage is not None and inst.answer_text.strip():
            answer_forms = [
                t.form for t in tokenize_fallback(inst.answer_text).flat_tokens()
            ]
            span = locate_answer_span(passage, answer_forms)
        if question is None or passage is None or span is None:
            skipped.append(inst.id)
            continue
        scored.append(inst)
        features.append(compute_raw_features(
            question, passage, span, alpha=alpha, f3_mode=f3_mode,
        ))
    return scored, features, skipped


def label_corpus(
    instances: Sequence[QAInstance],
    normalizer: FeatureNormalizer,
    annotations: Mapping[str, AnnotatedDocument],
    alpha: float = 0.01,
    f3_mode: str = "inverse",
) -> tuple[list[QAInstance], dict]:
    """Attach predicted_complexity via features -> normalize -> threshold.

    Instances whose annotations are missing, or whose answer cannot be
    located in the annotated passage, are passed through unlabeled and
    reported. Relabeling with the same normalizer is idempotent.
    """
    scored, features, skipped = corpus_features(
        instances, annotations, alpha=alpha, f3_mode=f3_mode,
    )
    labels = {}
    counts = Counter()
    for inst, feats in zip(scored, features):
        label = classify(cpx_score(normalize(feats, normalizer)), normalizer.lam)
        counts[label.value] += 1
        labels[inst.id] = label
    labeled = [
        dataclasses.replace(inst, predicted_complexity=labels[inst.id])
        if inst.id in labels else inst
        for inst in instances
    ]
    report = {
        "simple": counts["simple"],
        "complex": counts["complex"],
        "skipped": skipped,
    }
    if skipped:
        log.info("label_corpus skipped %d instances", len(skipped))
    return labeled, report


class Vocab:
    """Token/id bijection with fixed specials at ids 0..3."""

    def __init__(self, tokens: Sequence[str]):
        self.id_to_token: list[str] = list(SPECIALS) + [
            t for t in tokens if t not in SPECIALS
        ]
        self.token_to_id: dict[str, int] = {
            t: i for i, t in enumerate(self.id_to_token)
        }
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.id_to_token == other.id_to_token

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self.id_to_token[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.token(i) for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "\n".join(self.id_to_token) + "\n", encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[:4] != list(SPECIALS):
            raise ValueError(f"{path}: vocab file must start with the specials")
        return cls(lines[4:])


def model_tokens(text: str) -> list[str]:
    """Model-side tokenization: lowercased whitespace tokens."""
    return text.lower().split()


def build_vocab(instances: Sequence[QAInstance], max_size: int) -> Vocab:
    """Frequency-ranked vocabulary with lexicographic tie-breaking."""
    if not instances:
        raise ValueError("cannot build a vocabulary from no instances")
    if max_size <= len(SPECIALS):
        raise ValueError(f"max_size must exceed {len(SPECIALS)}")
    counts = Counter()
    for inst in instances:
        counts.update(model_tokens(inst.passage))
        counts.update(model_tokens(inst.question))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocab([t for t, _ in ranked[:max_size - len(SPECIALS)]])


def instance_to_record(inst: QAInstance) -> dict:
    return {
        "id": inst.id,
        "passage": inst.passage,
        "question": inst.question,
        "answer_text": inst.answer_text,
        "answer_span": list(inst.answer_span) if inst.answer_span else None,
        "gold_complexity": inst.gold_complexity.value if inst.gold_complexity else None,
        "predicted_complexity":
            inst.predicted_complexity.value if inst.predicted_complexity else None,
    }


def record_to_instance(rec: dict) -> QAInstance:
    return QAInstance(
        id=rec["id"],
        passage=rec["passage"],
        question=rec["question"],
        answer_text=rec["answer_text"],
        answer_span=tuple(rec["answer_span"]) if rec.get("answer_span") else None,
        gold_complexity=coerce_label(rec["gold_complexity"])
            if rec.get("gold_complexity") else None,
        predicted_complexity=coerce_label(rec["predicted_complexity"])
            if rec.get("predicted_complexity") else None,
    )


def write_instances(path: str | Path, instances: Iterable[QAInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), sort_keys=True) + "\n")


def read_instances(path: str | Path) -> list[QAInstance]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_to_instance(json.loads(line)))
    return out


def write_split_manifest(path: str | Path, split: DatasetSplit) -> None:
    manifest = {
        "seed": split.seed,
        "train": [i.id for i in split.train],
        "dev": [i.id for i in split.dev],
        "test": [i.id for i in split.test],
    }
    Path(path).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8",
    )


def read_split_manifest(path: str | Path) -> dict:
    manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    for key in ("seed", "train", "dev", "test"):
        if key not in manifest:
            raise ValueError(f"{path}: manifest missing {key!r}")
    return manifest
