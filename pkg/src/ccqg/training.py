"""Hard-EM training for the mixture-of-experts generator.

Template banks start from k-means centroids of question embeddings per
complexity level. Each epoch runs a per-example E-step (pick the expert
with the lowest noise-free NLL, ties to the lowest index) and M-step
(one Adam update on that expert's noisy NLL). Training stops when the
dev NLL moves by less than convergence_eps between consecutive epochs,
and the best-dev parameters are restored at the end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import no_grad
from .clustering import EmbeddingSource, embed_questions, instance_level, kmeans
from .data import QAInstance, Vocab, build_vocab, model_tokens
from .estimator import ComplexityLabel
from .model import CCQGModel, LEVELS, ModelConfig, PreparedInstance, _seeded_rng
from .optim import Adam

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    convergence_eps: float = 1e-6
    max_epochs: int = 30
    batch_size: int = 1
    seed: int = 0
    embedding_source: str = "internal"
    vectors_path: str | None = None
    kmeans_restarts: int = 4
    kmeans_max_iter: int = 100
    freeze_templates: bool = False

    def __post_init__(self):
        # lr = 0 is allowed so a run can be frozen for convergence probes
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if self.convergence_eps <= 0:
            raise ValueError(f"convergence_eps must be > 0, got {self.convergence_eps}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.embedding_source not in ("internal", "file"):
            raise ValueError(
                f"embedding_source must be internal|file, got {self.embedding_source!r}"
            )


@dataclass(frozen=True)
class EpochStats:
    train_nll: float
    selection_counts: tuple[int, ...]
    dev_nll: float = math.nan


@dataclass(frozen=True)
class TrainReport:
    epochs: tuple[EpochStats, ...]
    best_epoch: int
    converged: bool

    def __post_init__(self):
        sizes = {sum(row.selection_counts) for row in self.epochs}
        if len(sizes) > 1:
            raise ValueError(f"selection counts disagree on dataset size: {sizes}")


TrainExample = tuple[PreparedInstance, ComplexityLabel]


def prepare_instances(model: CCQGModel,
                      instances: Sequence[QAInstance]) -> list[TrainExample]:
    """Tokenize and id-encode labeled instances for training."""
    out: list[TrainExample] = []
    for inst in instances:
        level = instance_level(inst)
        if level is None:
            raise ValueError(f"instance {inst.id}: no complexity level assigned")
        prep = model.prepare(model_tokens(inst.passage),
                             model_tokens(inst.answer_text),
                             model_tokens(inst.question))
        out.append((prep, level))
    return out


def init_template_bank(instances: Sequence[QAInstance], d: ComplexityLabel,
                       model_config: ModelConfig,
                       train_config: TrainConfig) -> np.ndarray:
    """Level-d bank rows = k-means centroids of the question embeddings.

    When the level has fewer questions than n_pi, the embedding set is
    padded with slightly perturbed duplicates before clustering.
    """
    source = EmbeddingSource(mode=train_config.embedding_source,
                             path=train_config.vectors_path,
                             seed=train_config.seed,
                             dim=model_config.d_template)
    vectors = embed_questions(instances, d, source)
    n_pi = model_config.n_pi
    if vectors.shape[0] < n_pi:
        rng = _seeded_rng(train_config.seed, f"bank_pad:{d.value}")
        rows = [vectors]
        missing = n_pi - vectors.shape[0]
        base = vectors[np.arange(missing) % vectors.shape[0]]
        rows.append(base + rng.normal(0.0, 1e-3, size=base.shape))
        vectors = np.concatenate(rows, axis=0)
    return kmeans(vectors, n_pi, seed=train_config.seed,
                  restarts=train_config.kmeans_restarts,
                  max_iter=train_config.kmeans_max_iter)


def install_template_banks(model: CCQGModel, instances: Sequence[QAInstance],
                           train_config: TrainConfig) -> None:
    for d, name in zip(LEVELS, ("tpl_simple", "tpl_complex")):
        bank = init_template_bank(instances, d, model.config, train_config)
        model.params[name].data[...] = bank


def _trainable_params(model: CCQGModel, config: TrainConfig) -> dict:
    params = dict(model.params)
    if config.freeze_templates:
        params.pop("tpl_simple")
        params.pop("tpl_complex")
    return params


def hard_em_epoch(model: CCQGModel, examples: Iterable[TrainExample],
                  optimizer: Adam) -> EpochStats:
    """One pass of per-example E-step selection and M-step updates."""
    n_z = model.config.n_z
    counts = [0] * n_z
    total = 0.0
    n = 0
    for idx, (prep, d) in enumerate(examples):
        with no_grad():
            losses = [
                -model.sequence_log_prob(prep, d, z, noisy=False).item()
                for z in range(n_z)
            ]
        if not all(math.isfinite(v) for v in losses):
            raise RuntimeError(
                f"non-finite E-step loss at example {idx} "
                f"(level {d.value}, losses {losses})"
            )
        z_star = int(np.argmin(losses))  # ties go to the lowest index
        counts[z_star] += 1
        total += losses[z_star]
        n += 1
        optimizer.zero_grad()
        loss = ad.mul(model.sequence_log_prob(prep, d, z_star, noisy=True),
                      ad.scalar(-1.0))
        if not math.isfinite(loss.item()):
            raise RuntimeError(
                f"non-finite M-step loss at example {idx} "
                f"(level {d.value}, expert {z_star})"
            )
        ad.backward(loss)
        optimizer.step()
    if n == 0:
        raise ValueError("hard_em_epoch: no training examples")
    return EpochStats(train_nll=total / n, selection_counts=tuple(counts))


def dataset_nll(model: CCQGModel, examples: Sequence[TrainExample]) -> float:
    """Mean per-example mixture NLL, noise-free."""
    if not examples:
        raise ValueError("dataset_nll: no examples")
    with no_grad():
        total = sum(
            -model.mixture_log_prob(prep, d, noisy=False).item()
            for prep, d in examples
        )
    return total / len(examples)


def train_loop(model: CCQGModel, train: Sequence[TrainExample],
               dev: Sequence[TrainExample], config: TrainConfig) -> TrainReport:
    """Run hard-EM epochs until the dev NLL settles; keep the best epoch."""
    if not train:
        raise ValueError("train_loop: no training examples")
    if not dev:
        raise ValueError("train_loop: no dev examples")
    optimizer = Adam(_trainable_params(model, config), lr=config.lr)
    rows: list[EpochStats] = []
    best_epoch = -1
    best_dev = math.inf
    best_params: dict[str, np.ndarray] = {}
    prev_dev = None
    converged = False
    for epoch in range(config.max_epochs):
        stats = hard_em_epoch(model, train, optimizer)
        dev_nll = dataset_nll(model, dev)
        rows.append(replace(stats, dev_nll=dev_nll))
        logger.info("epoch %d: train NLL %.6f dev NLL %.6f counts %s",
                    epoch, stats.train_nll, dev_nll, stats.selection_counts)
        if dev_nll < best_dev:
            best_dev = dev_nll
            best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in model.params.items()}
        if prev_dev is not None and abs(dev_nll - prev_dev) < config.convergence_eps:
            converged = True
            break
        prev_dev = dev_nll
    for name, values in best_params.items():
        model.params[name].data[...] = values
    return TrainReport(epochs=tuple(rows), best_epoch=best_epoch,
                       converged=converged)


class QuestionGenerator(BaseEstimator):
    """Estimator-style facade: fit on labeled instances, predict questions.

    fit builds the vocabulary, initializes template banks from question
    clusters, and runs the hard-EM loop; predict greedily decodes one
    question per (passage, answer, level) triple.
    """

    def __init__(self, n_z: int = 3, n_pi: int = 12, top_k: int = 4,
                 d_complexity: int = 30, d_expert: int = 50,
                 d_template: int = 50, hidden: int = 256, d_word: int = 128,
                 max_decode_len: int = 30, use_moe: bool = True,
                 use_templates: bool = True, length_normalize: bool = False,
                 lr: float = 0.001, convergence_eps: float = 1e-6,
                 max_epochs: int = 30, seed: int = 0,
                 max_vocab: int = 20000, embedding_source: str = "internal",
                 vectors_path: str | None = None, kmeans_restarts: int = 4,
                 kmeans_max_iter: int = 100, freeze_templates: bool = False):
        self.n_z = n_z
        self.n_pi = n_pi
        self.top_k = top_k
        self.d_complexity = d_complexity
        self.d_expert = d_expert
        self.d_template = d_template
        self.hidden = hidden
        self.d_word = d_word
        self.max_decode_len = max_decode_len
        self.use_moe = use_moe
        self.use_templates = use_templates
        self.length_normalize = length_normalize
        self.lr = lr
        self.convergence_eps = convergence_eps
        self.max_epochs = max_epochs
        self.seed = seed
        self.max_vocab = max_vocab
        self.embedding_source = embedding_source
        self.vectors_path = vectors_path
        self.kmeans_restarts = kmeans_restarts
        self.kmeans_max_iter = kmeans_max_iter
        self.freeze_templates = freeze_templates

    def _configs(self) -> tuple[ModelConfig, TrainConfig]:
        model_config = ModelConfig(
            n_z=self.n_z, n_pi=self.n_pi, top_k=self.top_k,
            d_complexity=self.d_complexity, d_expert=self.d_expert,
            d_template=self.d_template, hidden=self.hidden,
            d_word=self.d_word, max_decode_len=self.max_decode_len,
            use_moe=self.use_moe, use_templates=self.use_templates,
            length_normalize=self.length_normalize)
        train_config = TrainConfig(
            lr=self.lr, convergence_eps=self.convergence_eps,
            max_epochs=self.max_epochs, seed=self.seed,
            embedding_source=self.embedding_source,
            vectors_path=self.vectors_path,
            kmeans_restarts=self.kmeans_restarts,
            kmeans_max_iter=self.kmeans_max_iter,
            freeze_templates=self.freeze_templates)
        return model_config, train_config

    def fit(self, X: Sequence[QAInstance], y=None,
            dev: Sequence[QAInstance] | None = None) -> "QuestionGenerator":
        model_config, train_config = self._configs()
        self.vocab_: Vocab = build_vocab(X, self.max_vocab)
        self.model_ = CCQGModel(model_config, self.vocab_, seed=self.seed)
        install_template_banks(self.model_, X, train_config)
        train = prepare_instances(self.model_, X)
        dev_prepared = prepare_instances(self.model_, dev) if dev else train
        self.report_ = train_loop(self.model_, train, dev_prepared, train_config)
        return self

    def predict(self, X: Sequence[tuple[str, str, ComplexityLabel]]) -> list[str]:
        self._check_fitted()
        out = []
        for passage, answer, level in X:
            tokens, _, _ = self.model_.generate(model_tokens(passage),
                                                model_tokens(answer), level)
            out.append(" ".join(tokens))
        return out

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("generator is not fitted; call fit first")
