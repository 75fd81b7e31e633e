"""Corpus-to-CoNLL-U annotation adaptor.

Reads SQuAD-, HotpotQA-, or JSONL-shaped QA corpora and emits the
CoNLL-U + NER interchange files (plus a manifest) that the ccqg
estimator consumes. Annotation comes from a pluggable pipeline: a
deterministic built-in rule pipeline that needs no downloads, or an
installed spacy model.
"""

from .adaptor import AdaptorJob, annotate_corpus
from .corpus import CorpusError, Record, read_corpus
from .pipeline import (
    BUILTIN_MODEL,
    PipelineUnavailable,
    RulePipeline,
    TokenAnnotation,
    load_pipeline,
)

__all__ = [
    "AdaptorJob",
    "annotate_corpus",
    "CorpusError",
    "Record",
    "read_corpus",
    "BUILTIN_MODEL",
    "PipelineUnavailable",
    "RulePipeline",
    "TokenAnnotation",
    "load_pipeline",
]
