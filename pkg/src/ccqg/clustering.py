"""Question embeddings and k-means used to seed the template banks.

Questions are embedded as mean-pooled per-token vectors, either from a
deterministic seeded lookup table or from a word2vec-style text file.
Clustering is k-means++ plus Lloyd iterations with empty-cluster
reseeding, best of several restarts by within-cluster sum of squares.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import QAInstance, model_tokens
from .estimator import ComplexityLabel

DEFAULT_EMBED_DIM = 50


@dataclass(frozen=True)
class EmbeddingSource:
    """Where token vectors come from.

    mode "internal" draws each token's vector from a generator seeded by
    (seed, token); mode "file" reads a word2vec-style text file and maps
    unknown tokens to the zero vector.
    """

    mode: str = "internal"
    path: str | Path | None = None
    seed: int = 0
    dim: int = DEFAULT_EMBED_DIM

    def __post_init__(self):
        if self.mode not in ("internal", "file"):
            raise ValueError(f"embedding mode must be internal|file, got {self.mode!r}")
        if self.mode == "file" and self.path is None:
            raise ValueError("file embedding mode requires a path")
        if self.dim < 1:
            raise ValueError(f"embedding dim must be >= 1, got {self.dim}")


def _token_vector(token: str, seed: int, dim: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:tok:{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    return rng.standard_normal(dim)


def read_vector_file(path: str | Path, dim: int) -> dict[str, np.ndarray]:
    """Parse "count dim" header plus one token-and-floats line per entry.

    Vectors wider than `dim` are truncated, narrower ones zero-padded.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty vector file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"{path}: header must be 'count dim', got {lines[0]!r}")
    try:
        count, file_dim = int(header[0]), int(header[1])
    except ValueError:
        raise ValueError(f"{path}: header must be 'count dim', got {lines[0]!r}")
    if count < 0 or file_dim < 1:
        raise ValueError(f"{path}: invalid header counts {lines[0]!r}")
    table: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != file_dim + 1:
            raise ValueError(
                f"{path}:{lineno}: expected token plus {file_dim} floats, "
                f"got {len(parts) - 1}"
            )
        vec = np.array([float(x) for x in parts[1:]])
        if file_dim >= dim:
            vec = vec[:dim]
        else:
            vec = np.concatenate([vec, np.zeros(dim - file_dim)])
        table[parts[0]] = vec
    if len(table) != count:
        raise ValueError(f"{path}: header promised {count} vectors, found {len(table)}")
    return table


def instance_level(inst: QAInstance) -> ComplexityLabel | None:
    """Gold level when annotated, otherwise the estimator's label."""
    if inst.gold_complexity is not None:
        return inst.gold_complexity
    return inst.predicted_complexity


def embed_questions(
    instances: Sequence[QAInstance],
    d: ComplexityLabel,
    source: EmbeddingSource,
) -> np.ndarray:
    """One mean-pooled vector per level-d question, stacked (n, dim)."""
    questions = [i.question for i in instances if instance_level(i) is d]
    if not questions:
        raise ValueError(f"no questions at level {d.value}")
    table = None
    if source.mode == "file":
        table = read_vector_file(source.path, source.dim)
    out = np.zeros((len(questions), source.dim))
    for row, question in enumerate(questions):
        tokens = model_tokens(question)
        if not tokens:
            continue
        if table is None:
            vecs = [_token_vector(t, source.seed, source.dim) for t in tokens]
        else:
            vecs = [table.get(t, np.zeros(source.dim)) for t in tokens]
        out[row] = np.mean(vecs, axis=0)
    return out


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = _pairwise_sq_dists(points, np.array(centers)).min(axis=1)
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers.append(points[idx])
    return np.array(centers)


def _lloyd(points: np.ndarray, centers: np.ndarray,
           max_iter: int) -> tuple[np.ndarray, np.ndarray]:
    assign = np.full(points.shape[0], -1)
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(points, centers)
        new_assign = d2.argmin(axis=1)
        # empty clusters grab the point currently farthest from its center
        own = d2[np.arange(points.shape[0]), new_assign].copy()
        for c in range(centers.shape[0]):
            if (new_assign == c).any():
                continue
            farthest = int(own.argmax())
            new_assign[farthest] = c
            own[farthest] = -1.0
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(centers.shape[0]):
            members = points[assign == c]
            if members.size:
                centers[c] = members.mean(axis=0)
    return centers, assign


def wcss(points: np.ndarray, centers: np.ndarray) -> float:
    return float(_pairwise_sq_dists(points, centers).min(axis=1).sum())


def kmeans(vectors: np.ndarray, k: int, seed: int, restarts: int = 4,
           max_iter: int = 100) -> np.ndarray:
    """Best-of-restarts cluster centers, deterministic under seed."""
    points = np.asarray(vectors, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError(f"need a nonempty (n, dim) array, got {points.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    best_centers = None
    best_score = np.inf
    for restart in range(restarts):
        rng = np.random.default_rng([seed, restart])
        centers = _kmeanspp(points, k, rng)
        centers, _ = _lloyd(points, centers, max_iter)
        score = wcss(points, centers)
        if score < best_score:
            best_score = score
            best_centers = centers
    return best_centers
