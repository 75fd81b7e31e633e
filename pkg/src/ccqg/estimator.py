"""Threshold classifier on top of the five complexity features.

Min-max normalization is fitted on a corpus, the cpx score is the mean of
the five normalized features, and a question is Complex when the score
exceeds the threshold (strictly). The threshold ships with a calibrated
default of 0.682 but can be refitted by grid search against gold labels.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .features import ComplexityFeatures

DEFAULT_LAMBDA = 0.682
FEATURE_NAMES = ("f1", "f2", "f3", "f4", "f5")


class ComplexityLabel(enum.Enum):
    SIMPLE = "simple"
    COMPLEX = "complex"


def coerce_label(value) -> ComplexityLabel:
    if isinstance(value, ComplexityLabel):
        return value
    return ComplexityLabel(str(value).lower())


def _as_matrix(features) -> np.ndarray:
    """Accept ComplexityFeatures sequences or (n, 5) arrays."""
    if isinstance(features, np.ndarray):
        x = np.asarray(features, dtype=np.float64)
    else:
        rows = [
            f.as_array() if isinstance(f, ComplexityFeatures) else np.asarray(f, dtype=np.float64)
            for f in features
        ]
        if not rows:
            return np.zeros((0, 5))
        x = np.stack(rows)
    if x.ndim != 2 or x.shape[1] != 5:
        raise ValueError(f"expected an (n, 5) feature matrix, got {x.shape}")
    return x


@dataclass(frozen=True)
class FeatureNormalizer:
    mins: tuple[float, float, float, float, float]
    maxs: tuple[float, float, float, float, float]
    lam: float

    def __post_init__(self):
        if len(self.mins) != 5 or len(self.maxs) != 5:
            raise ValueError("normalizer needs exactly five min/max pairs")
        for lo, hi in zip(self.mins, self.maxs):
            if lo > hi:
                raise ValueError(f"min {lo} exceeds max {hi}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0,1], got {self.lam}")


def fit_normalizer(features, lam: float = DEFAULT_LAMBDA) -> FeatureNormalizer:
    x = _as_matrix(features)
    if x.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on an empty corpus")
    return FeatureNormalizer(
        mins=tuple(x.min(axis=0).tolist()),
        maxs=tuple(x.max(axis=0).tolist()),
        lam=float(lam),
    )


def normalize(features, normalizer: FeatureNormalizer) -> np.ndarray:
    """(x - min)/(max - min) per feature, clamped to [0,1]; 0 when max = min."""
    if isinstance(features, ComplexityFeatures):
        x = features.as_array()
    else:
        x = np.asarray(features, dtype=np.float64)
    mins = np.array(normalizer.mins)
    maxs = np.array(normalizer.maxs)
    span = maxs - mins
    out = np.where(span > 0, (x - mins) / np.where(span > 0, span, 1.0), 0.0)
    return np.clip(out, 0.0, 1.0)


def cpx_score(normalized: np.ndarray) -> float:
    x = np.asarray(normalized, dtype=np.float64)
    if x.shape != (5,):
        raise ValueError(f"expected five normalized features, got {x.shape}")
    if (x < 0).any() or (x > 1).any():
        raise ValueError("normalized features must lie in [0,1]")
    return float(x.mean())


def classify(score: float, lam: float) -> ComplexityLabel:
    """Complex strictly above the threshold, Simple at or below it."""
    return ComplexityLabel.COMPLEX if score > lam else ComplexityLabel.SIMPLE


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts keyed as true-simple/true-complex x predicted-simple/complex."""

    ts_ps: int
    ts_pc: int
    tc_ps: int
    tc_pc: int

    def __post_init__(self):
        if min(self.ts_ps, self.ts_pc, self.tc_ps, self.tc_pc) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.ts_ps + self.ts_pc + self.tc_ps + self.tc_pc


@dataclass(frozen=True)
class EstimatorReport:
    confusion: ConfusionMatrix
    f1_simple: float
    f1_complex: float
    macro_f1: float
    weighted_f1: float


def _f1(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def evaluate_estimator(
    pred: Sequence[ComplexityLabel], gold: Sequence[ComplexityLabel],
) -> EstimatorReport:
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if not pred:
        raise ValueError("cannot evaluate an empty label list")
    pred = [coerce_label(p) for p in pred]
    gold = [coerce_label(g) for g in gold]
    s, c = ComplexityLabel.SIMPLE, ComplexityLabel.COMPLEX
    cm = ConfusionMatrix(
        ts_ps=sum(1 for p, g in zip(pred, gold) if g == s and p == s),
        ts_pc=sum(1 for p, g in zip(pred, gold) if g == s and p == c),
        tc_ps=sum(1 for p, g in zip(pred, gold) if g == c and p == s),
        tc_pc=sum(1 for p, g in zip(pred, gold) if g == c and p == c),
    )
    return report_from_confusion(cm)


def report_from_confusion(cm: ConfusionMatrix) -> EstimatorReport:
    f1_s = _f1(tp=cm.ts_ps, fp=cm.tc_ps, fn=cm.ts_pc)
    f1_c = _f1(tp=cm.tc_pc, fp=cm.ts_pc, fn=cm.tc_ps)
    support_s = cm.ts_ps + cm.ts_pc
    support_c = cm.tc_ps + cm.tc_pc
    total = support_s + support_c
    weighted = (support_s * f1_s + support_c * f1_c) / total if total else 0.0
    return EstimatorReport(
        confusion=cm,
        f1_simple=f1_s,
        f1_complex=f1_c,
        macro_f1=(f1_s + f1_c) / 2,
        weighted_f1=weighted,
    )


def calibrate_threshold(
    scores: Sequence[float], gold_labels: Sequence[ComplexityLabel],
) -> float:
    """Grid search over {0.00, 0.01, ..., 1.00} maximizing macro-F1.

    Ties resolve to the smallest threshold. Requires both classes in the
    gold labels, otherwise any threshold on one side is vacuously perfect.
    """
    if len(scores) != len(gold_labels):
        raise ValueError(
            f"length mismatch: {len(scores)} vs {len(gold_labels)}"
        )
    gold = [coerce_label(g) for g in gold_labels]
    if len(set(gold)) < 2:
        raise ValueError("calibration needs both classes in the gold labels")
    best_lam = 0.0
    best_f1 = -1.0
    for step in range(101):
        lam = step / 100.0
        pred = [classify(s, lam) for s in scores]
        f1 = evaluate_estimator(pred, gold).macro_f1
        if f1 > best_f1:
            best_f1 = f1
            best_lam = lam
    return best_lam


def save_normalizer(path: str | Path, normalizer: FeatureNormalizer) -> None:
    """Persist as flat key=value text; repr round-trips float64 exactly."""
    lines = []
    for name, lo, hi in zip(FEATURE_NAMES, normalizer.mins, normalizer.maxs):
        lines.append(f"{name}_min={lo!r}")
        lines.append(f"{name}_max={hi!r}")
    lines.append(f"lambda={normalizer.lam!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_normalizer(path: str | Path) -> FeatureNormalizer:
    values: dict[str, float] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip()] = float(value.strip())
    try:
        return FeatureNormalizer(
            mins=tuple(values[f"{n}_min"] for n in FEATURE_NAMES),
            maxs=tuple(values[f"{n}_max"] for n in FEATURE_NAMES),
            lam=values["lambda"],
        )
    except KeyError as missing:
        raise ValueError(f"{path}: missing key {missing}") from None


def write_feature_records(path: str | Path, records: Iterable[dict]) -> None:
    """One JSON object per line: id, raw, normalized, score, label."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_feature_records(path: str | Path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


class ComplexityEstimator(BaseEstimator):
    """Estimator facade over the feature normalizer and threshold rule.

    fit(X[, y]) learns per-feature min/max from an (n, 5) raw-feature
    matrix; with calibrate=True and gold labels it also grid-searches the
    threshold. transform yields normalized features, decision_function
    the cpx scores, predict the labels.
    """

    def __init__(self, lam: float = DEFAULT_LAMBDA, calibrate: bool = False):
        self.lam = lam
        self.calibrate = calibrate

    def fit(self, X, y=None):
        x = _as_matrix(X)
        if x.shape[0] == 0:
            raise ValueError("cannot fit on an empty corpus")
        self.normalizer_ = fit_normalizer(x, lam=self.lam)
        if self.calibrate:
            if y is None:
                raise ValueError("calibrate=True requires gold labels")
            scores = self.decision_function(x)
            lam = calibrate_threshold(scores.tolist(), list(y))
            self.normalizer_ = FeatureNormalizer(
                mins=self.normalizer_.mins,
                maxs=self.normalizer_.maxs,
                lam=lam,
            )
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        x = _as_matrix(X)
        return np.stack([normalize(row, self.normalizer_) for row in x])

    def decision_function(self, X) -> np.ndarray:
        return np.array([cpx_score(row) for row in self.transform(X)])

    def predict(self, X) -> list[ComplexityLabel]:
        self._check_fitted()
        lam = self.normalizer_.lam
        return [classify(s, lam) for s in self.decision_function(X)]

    def score(self, X, y) -> float:
        """Macro-F1 of predict(X) against gold labels."""
        return evaluate_estimator(self.predict(X), list(y)).macro_f1

    def _check_fitted(self):
        if not hasattr(self, "normalizer_"):
            raise ValueError("estimator is not fitted; call fit first")
