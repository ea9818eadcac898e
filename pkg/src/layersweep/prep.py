"""Count preprocessing: QC filtering, normalization, pseudobulk, and
log-fold-change profiles.

Differential expression is deliberately lightweight: median-of-ratios size
factors followed by pseudocounted log2 ratios against a control column.
Dispersion estimation and significance testing are out of scope because the
downstream similarity analysis consumes only the logFC vectors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    AlignmentError,
    EmptyResultError,
    NonFiniteError,
    ParameterError,
    ValidationError,
)
from .container import CountMatrix

DEFAULT_CONTROL = "non-targeting"
DEFAULT_PSEUDOCOUNT = 1.0
DEFAULT_MIN_LABELS = 2


@dataclass
class PseudobulkTable:
    """Summed raw counts per perturbation label, genes x labels."""

    gene_ids: list[str]
    labels: list[str]
    values: np.ndarray  # genes x labels, float64, nonnegative

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.gene_ids), len(self.labels)):
            raise ValidationError(
                f"pseudobulk shape {self.values.shape} does not match "
                f"{len(self.gene_ids)} genes x {len(self.labels)} labels"
            )
        if self.values.size and self.values.min() < 0:
            raise ValidationError("pseudobulk counts must be nonnegative")

    def column(self, label: str) -> np.ndarray:
        return self.values[:, self.labels.index(label)]


@dataclass(frozen=True)
class DEProfile:
    """Per-gene log2 fold change of one perturbation against the control."""

    perturbation: str
    gene_ids: list[str]
    logfc: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "logfc", np.asarray(self.logfc, dtype=np.float64))
        if self.logfc.shape != (len(self.gene_ids),):
            raise ValidationError(
                f"profile {self.perturbation!r}: {self.logfc.shape[0]} values "
                f"for {len(self.gene_ids)} genes"
            )
        if not np.isfinite(self.logfc).all():
            raise NonFiniteError(
                f"profile {self.perturbation!r} contains non-finite logfc"
            )


def filter_cells(counts: CountMatrix, min_genes: int) -> CountMatrix:
    """Keep cells expressing at least min_genes genes with count > 0."""
    if min_genes < 0:
        raise ParameterError(f"min_genes must be >= 0, got {min_genes}")
    if min_genes == 0:
        return counts
    expressed = np.asarray((counts.matrix > 0).sum(axis=0)).ravel()
    keep = expressed >= min_genes
    if not keep.any():
        raise EmptyResultError(
            f"no cell expresses >= {min_genes} genes; nothing left after filtering"
        )
    kept_ids = [c for c, ok in zip(counts.cell_ids, keep) if ok]
    return CountMatrix(
        gene_ids=counts.gene_ids,
        cell_ids=kept_ids,
        matrix=counts.matrix[:, np.flatnonzero(keep)],
    )


def library_normalize_log1p(counts: CountMatrix, scale: float = 1e4) -> sp.csr_matrix:
    """ln(1 + scale * count / library_size), computed per cell.

    Library sizes are recomputed from the matrix as given, so filtering must
    happen first.
    """
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    totals = np.asarray(counts.matrix.sum(axis=0), dtype=np.float64).ravel()
    zero = np.flatnonzero(totals == 0)
    if zero.size:
        raise ValidationError(
            f"cell {counts.cell_ids[zero[0]]!r} has zero total count; "
            "filter before normalizing"
        )
    out = counts.matrix.astype(np.float64) @ sp.diags(scale / totals)
    out = sp.csr_matrix(out)
    np.log1p(out.data, out=out.data)
    return out


def pseudobulk(
    counts: CountMatrix,
    labels: Sequence[str | None],
    label_order: Sequence[str] | None = None,
) -> PseudobulkTable:
    """Sum raw counts per label. Cells labeled None are excluded.

    Column order follows first appearance unless label_order is given, in
    which case every requested label must have at least one cell.
    """
    if len(labels) != counts.n_cells:
        raise AlignmentError(
            f"{len(labels)} labels for {counts.n_cells} cells"
        )
    groups: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        if lab is None:
            continue
        groups.setdefault(lab, []).append(i)
    if label_order is None:
        ordered = list(groups)
    else:
        ordered = list(label_order)
        missing = [lab for lab in ordered if lab not in groups]
        if missing:
            raise EmptyResultError(
                "labels with zero cells: " + ", ".join(repr(m) for m in missing)
            )
    if not ordered:
        raise EmptyResultError("no labeled cells to aggregate")
    values = np.zeros((counts.n_genes, len(ordered)))
    csc = counts.matrix.tocsc()
    for j, lab in enumerate(ordered):
        cols = np.asarray(groups[lab], dtype=np.intp)
        values[:, j] = np.asarray(csc[:, cols].sum(axis=1)).ravel()
    return PseudobulkTable(gene_ids=list(counts.gene_ids), labels=ordered, values=values)


def size_factors(pb: PseudobulkTable, pseudocount: float = 0.0) -> np.ndarray:
    """Median-of-ratios normalization constants, one per label column.

    Ratios are taken against the per-gene geometric mean and the median runs
    over genes positive in every column. A positive pseudocount is added to
    all entries first, which makes every gene eligible.
    """
    if pseudocount < 0:
        raise ParameterError(f"pseudocount must be >= 0, got {pseudocount}")
    vals = pb.values + pseudocount
    positive = (vals > 0).all(axis=1)
    if not positive.any():
        raise EmptyResultError(
            "no gene has positive counts in every label; rerun with a "
            "positive pseudocount"
        )
    vals = vals[positive]
    log_geomean = np.log(vals).mean(axis=1)
    sf = np.exp(np.median(np.log(vals) - log_geomean[:, None], axis=0))
    return sf


def gene_universe(pb: PseudobulkTable, min_labels: int = DEFAULT_MIN_LABELS) -> np.ndarray:
    """Indices of genes with nonzero pseudobulk count in >= min_labels labels."""
    if min_labels < 1:
        raise ParameterError(f"min_labels must be >= 1, got {min_labels}")
    support = (pb.values > 0).sum(axis=1)
    idx = np.flatnonzero(support >= min_labels)
    if idx.size == 0:
        raise EmptyResultError(
            f"no gene is expressed in >= {min_labels} labels"
        )
    return idx


def log_fold_change(
    pb: PseudobulkTable,
    sf: np.ndarray,
    control: str = DEFAULT_CONTROL,
    pseudocount: float = DEFAULT_PSEUDOCOUNT,
    min_labels: int = DEFAULT_MIN_LABELS,
) -> list[DEProfile]:
    """log2((pert/sf + pc) / (ctrl/sf + pc)) per gene, control excluded.

    Genes outside the support universe (nonzero in fewer than min_labels
    columns) are dropped before the ratio so rare dropouts do not dominate.
    """
    if pseudocount <= 0:
        raise ParameterError(f"pseudocount must be > 0, got {pseudocount}")
    sf = np.asarray(sf, dtype=np.float64)
    if sf.shape != (len(pb.labels),):
        raise AlignmentError(
            f"{sf.shape[0] if sf.ndim == 1 else sf.shape} size factors for "
            f"{len(pb.labels)} labels"
        )
    if (sf <= 0).any():
        raise ValidationError("size factors must be positive")
    if control not in pb.labels:
        raise ValidationError(
            f"control label {control!r} not found among: "
            + ", ".join(repr(l) for l in pb.labels)
        )
    keep = gene_universe(pb, min_labels=min_labels)
    genes = [pb.gene_ids[i] for i in keep]
    norm = pb.values[keep] / sf  # broadcasts over columns
    ctrl = norm[:, pb.labels.index(control)]
    denom = np.log2(ctrl + pseudocount)
    profiles = []
    for j, lab in enumerate(pb.labels):
        if lab == control:
            continue
        logfc = np.log2(norm[:, j] + pseudocount) - denom
        profiles.append(DEProfile(perturbation=lab, gene_ids=genes, logfc=logfc))
    if not profiles:
        raise EmptyResultError("only the control label is present")
    return profiles


def write_de_profiles(path, profiles: Sequence[DEProfile]) -> None:
    """CSV with columns perturbation,gene,logfc; floats via repr for fidelity."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["perturbation", "gene", "logfc"])
        for prof in profiles:
            for gene, val in zip(prof.gene_ids, prof.logfc):
                w.writerow([prof.perturbation, gene, repr(float(val))])


def read_de_profiles(path) -> list[DEProfile]:
    """Parse the perturbation,gene,logfc schema into aligned profiles.

    Every perturbation must cover the identical gene set; gene order is taken
    from the first perturbation encountered.
    """
    per_label: dict[str, dict[str, float]] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is None or [h.strip() for h in header[:3]] != ["perturbation", "gene", "logfc"]:
            raise ValidationError(
                f"{path}: expected header perturbation,gene,logfc, got {header}"
            )
        for lineno, row in enumerate(r, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            lab, gene, raw = row
            try:
                val = float(raw)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: bad logfc {raw!r}") from None
            if not math.isfinite(val):
                raise NonFiniteError(f"{path}:{lineno}: non-finite logfc for {lab!r}/{gene!r}")
            if lab not in per_label:
                per_label[lab] = {}
                order.append(lab)
            if gene in per_label[lab]:
                raise ValidationError(f"{path}:{lineno}: duplicate gene {gene!r} for {lab!r}")
            per_label[lab][gene] = val
    if not order:
        raise EmptyResultError(f"{path}: no profiles found")
    genes = list(per_label[order[0]])
    ref = set(genes)
    profiles = []
    for lab in order:
        got = per_label[lab]
        if set(got) != ref:
            extra = sorted(set(got) - ref)[:5]
            missing = sorted(ref - set(got))[:5]
            raise AlignmentError(
                f"{path}: gene set of {lab!r} differs from {order[0]!r}"
                + (f"; extra: {extra}" if extra else "")
                + (f"; missing: {missing}" if missing else "")
            )
        profiles.append(
            DEProfile(
                perturbation=lab,
                gene_ids=genes,
                logfc=np.array([got[g] for g in genes]),
            )
        )
    return profiles
