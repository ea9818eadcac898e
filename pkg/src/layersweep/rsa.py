"""Representational similarity analysis over perturbation centroids.

Two |P| x |P| similarity matrices are compared: one from embedding-space
centroid cosines, one from Spearman correlations of differential-expression
profiles. The layer score is the Spearman correlation of their strictly
upper-triangular entries.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AlignmentError,
    EmptyResultError,
    ParameterError,
    ShapeError,
    SmallGroupWarning,
    UndefinedCorrelationError,
    ValidationError,
    ZeroNormWarning,
)
from .prep import DEProfile
from .stats import CorrelationResult, _centered_unit_ranks, spearman

_SYMMETRY_TOL = 1e-9
SMALL_GROUP = 10


@dataclass
class PerturbationCentroids:
    """Mean embedding per perturbation label within one layer."""

    labels: list[str]
    matrix: np.ndarray  # labels x dims
    counts: np.ndarray  # cells contributing per label

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.labels):
            raise ShapeError(
                f"centroid matrix {self.matrix.shape} for {len(self.labels)} labels"
            )
        if self.counts.shape != (len(self.labels),) or (self.counts < 1).any():
            raise ValidationError("every retained label needs >= 1 cell")


@dataclass
class SimilarityMatrix:
    """Symmetric label-by-label similarity with unit diagonal."""

    labels: list[str]
    values: np.ndarray
    kind: str  # "bio" or "embedding"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        p = len(self.labels)
        if self.values.shape != (p, p):
            raise ShapeError(f"similarity shape {self.values.shape} for {p} labels")
        if self.kind not in ("bio", "embedding"):
            raise ParameterError(f"unknown similarity kind {self.kind!r}")
        if p and np.abs(self.values - self.values.T).max() > _SYMMETRY_TOL:
            raise ValidationError("similarity matrix is not symmetric")
        if p and np.abs(np.diag(self.values) - 1.0).max() > _SYMMETRY_TOL:
            raise ValidationError("similarity diagonal must be 1")


def centroids(
    E: np.ndarray,
    labels: Sequence[str | None],
    min_cells: int = 1,
) -> PerturbationCentroids:
    """Arithmetic mean of embeddings per label, in first-appearance order.

    Labels under min_cells are dropped; None labels never participate.
    """
    E = np.asarray(E, dtype=np.float64)
    if E.ndim != 2:
        raise ShapeError(f"expected cells x dims matrix, got shape {E.shape}")
    if len(labels) != E.shape[0]:
        raise AlignmentError(f"{len(labels)} labels for {E.shape[0]} rows")
    if min_cells < 1:
        raise ParameterError(f"min_cells must be >= 1, got {min_cells}")
    groups: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        if lab is None:
            continue
        groups.setdefault(lab, []).append(i)
    kept: list[str] = []
    rows: list[np.ndarray] = []
    counts: list[int] = []
    dropped: list[str] = []
    for lab, idx in groups.items():
        if len(idx) < min_cells:
            dropped.append(lab)
            continue
        if len(idx) < SMALL_GROUP:
            warnings.warn(
                f"label {lab!r} has only {len(idx)} cells", SmallGroupWarning
            )
        kept.append(lab)
        rows.append(E[np.asarray(idx, dtype=np.intp)].mean(axis=0))
        counts.append(len(idx))
    if dropped:
        warnings.warn(
            f"dropped {len(dropped)} labels under min_cells={min_cells}: "
            + ", ".join(repr(d) for d in sorted(dropped)[:5]),
            SmallGroupWarning,
        )
    if not kept:
        raise EmptyResultError("no label met the min_cells threshold")
    return PerturbationCentroids(
        labels=kept, matrix=np.vstack(rows), counts=np.asarray(counts)
    )


def embedding_similarity(c: PerturbationCentroids) -> SimilarityMatrix:
    """Pairwise cosine of centroids; zero-norm rows contribute 0 off-diagonal."""
    if len(c.labels) < 2:
        raise ParameterError("need >= 2 labels for a similarity matrix")
    norms = np.linalg.norm(c.matrix, axis=1)
    zero = norms == 0
    if zero.any():
        bad = [c.labels[i] for i in np.flatnonzero(zero)[:5]]
        warnings.warn(
            f"zero-norm centroid for {', '.join(repr(b) for b in bad)}; "
            "similarities set to 0",
            ZeroNormWarning,
        )
    safe = np.where(zero, 1.0, norms)
    unit = c.matrix / safe[:, None]
    S = unit @ unit.T
    np.clip(S, -1.0, 1.0, out=S)
    S[zero, :] = 0.0
    S[:, zero] = 0.0
    np.fill_diagonal(S, 1.0)
    return SimilarityMatrix(labels=list(c.labels), values=S, kind="embedding")


def bio_similarity(profiles: Sequence[DEProfile]) -> SimilarityMatrix:
    """Spearman correlation of logFC vectors for every pair of profiles."""
    if len(profiles) < 2:
        raise ParameterError("need >= 2 profiles for a similarity matrix")
    genes = profiles[0].gene_ids
    for prof in profiles[1:]:
        if prof.gene_ids != genes:
            raise AlignmentError(
                f"profile {prof.perturbation!r} uses a different gene universe "
                f"than {profiles[0].perturbation!r}"
            )
    ranks = np.empty((len(profiles), len(genes)))
    for i, prof in enumerate(profiles):
        try:
            ranks[i] = _centered_unit_ranks(prof.logfc)
        except UndefinedCorrelationError:
            raise UndefinedCorrelationError(
                f"profile {prof.perturbation!r} has constant logfc; "
                "Spearman similarity is undefined"
            ) from None
    S = ranks @ ranks.T
    np.clip(S, -1.0, 1.0, out=S)
    # pairs with identical or opposite rank vectors must land on exactly +/-1
    # (matches the pairwise spearman definition); the dot product can fall an
    # ulp inside, so resolve near-unit candidates exactly
    for i, j in np.argwhere(np.abs(S) >= 1.0 - 1e-9):
        if i >= j:
            continue
        if np.array_equal(ranks[i], ranks[j]):
            S[i, j] = S[j, i] = 1.0
        elif np.array_equal(ranks[i], -ranks[j]):
            S[i, j] = S[j, i] = -1.0
    np.fill_diagonal(S, 1.0)
    labels = [p.perturbation for p in profiles]
    return SimilarityMatrix(labels=labels, values=S, kind="bio")


def upper_tri(S: SimilarityMatrix) -> np.ndarray:
    """Strictly-above-diagonal entries in row-major order."""
    p = len(S.labels)
    if p < 2:
        raise ParameterError("need >= 2 labels to extract the upper triangle")
    iu = np.triu_indices(p, k=1)
    return S.values[iu]


def rsa_score(S_bio: SimilarityMatrix, S_emb: SimilarityMatrix) -> CorrelationResult:
    """Spearman correlation of the two upper-triangular similarity vectors."""
    if S_bio.labels != S_emb.labels:
        only_bio = sorted(set(S_bio.labels) - set(S_emb.labels))
        only_emb = sorted(set(S_emb.labels) - set(S_bio.labels))
        parts = ["label order mismatch between similarity matrices"]
        if only_bio:
            parts.append(f"only in bio: {only_bio[:5]}")
        if only_emb:
            parts.append(f"only in embedding: {only_emb[:5]}")
        if not (only_bio or only_emb):
            parts.append("same labels, different order")
        raise AlignmentError("; ".join(parts))
    return spearman(upper_tri(S_bio), upper_tri(S_emb))


def dump_similarity_csv(path, S: SimilarityMatrix) -> None:
    """Square CSV with the label list as header row and first column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + S.labels)
        for lab, row in zip(S.labels, S.values):
            w.writerow([lab] + [repr(float(v)) for v in row])
