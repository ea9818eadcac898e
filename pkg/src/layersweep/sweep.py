"""Per-layer evaluation sweeps, summaries, and report emission.

Each layer is scored independently (trajectory: diffusion pseudotime vs the
reference ordering; perturbation: similarity-structure alignment against DE
profiles), so a pathological layer is recorded as an error row instead of
aborting the run. Outputs are byte-deterministic for a fixed configuration
and seed, regardless of the thread count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .container import CellAnnotations, EmbeddingStack
from .diffusion import (
    DEFAULT_N_COMPONENTS,
    dpt_distances,
    pick_root,
    spectral_decompose,
    transition_operator,
)
from .errors import (
    AlignmentError,
    EmptyResultError,
    LayersweepError,
    ParameterError,
    ValidationError,
)
from .neighbors import knn_graph, symmetrize
from .prep import DEFAULT_CONTROL, DEProfile
from .rsa import SimilarityMatrix, bio_similarity, centroids, embedding_similarity, rsa_score, upper_tri
from .stats import spearman, spearman_permutation_p

DEFAULT_K = 15
_SVG_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class SweepConfig:
    """Knobs shared by both sweep flavors.

    `jobs` controls scheduling only and is excluded from the digest so
    parallel and serial runs of the same analysis share an identity.
    """

    k: int = DEFAULT_K
    n_dcs: int = DEFAULT_N_COMPONENTS
    kernel: str = "gauss"
    symmetrize: str = "union"
    control: str = DEFAULT_CONTROL
    min_cells: int = 1
    pvalue: str = "asymptotic"
    n_perm: int = 1000
    seed: int = 0
    jobs: int = 1
    intersect_labels: bool = False
    min_labels: int = 2
    pseudocount: float = 1.0

    def validate(self) -> None:
        if self.kernel not in ("gauss", "binary"):
            raise ParameterError(f"kernel must be gauss or binary, got {self.kernel!r}")
        if self.symmetrize not in ("union", "mutual"):
            raise ParameterError(
                f"symmetrize must be union or mutual, got {self.symmetrize!r}"
            )
        if self.pvalue not in ("asymptotic", "permutation"):
            raise ParameterError(
                f"pvalue must be asymptotic or permutation, got {self.pvalue!r}"
            )
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.n_dcs < 1:
            raise ParameterError(f"n_dcs must be >= 1, got {self.n_dcs}")
        if self.n_perm < 1:
            raise ParameterError(f"n_perm must be >= 1, got {self.n_perm}")
        if self.min_cells < 1:
            raise ParameterError(f"min_cells must be >= 1, got {self.min_cells}")
        if self.jobs < 1:
            raise ParameterError(f"jobs must be >= 1, got {self.jobs}")

    def digest(self) -> str:
        payload = asdict(self)
        del payload["jobs"]
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class LayerRow:
    layer: int  # 1-based
    depth: float
    rho: float
    p_value: float
    error: str | None = None


@dataclass
class LayerScoreReport:
    task: str  # "trajectory" or "perturbation"
    condition: str | None
    rows: list[LayerRow]
    config_digest: str

    def __post_init__(self) -> None:
        if self.task not in ("trajectory", "perturbation"):
            raise ParameterError(f"unknown task {self.task!r}")
        layers = [r.layer for r in self.rows]
        if layers != list(range(1, len(layers) + 1)):
            raise ValidationError("report rows must cover layers 1..L in order")

    @property
    def n_layers(self) -> int:
        return len(self.rows)

    def scored_rows(self) -> list[LayerRow]:
        return [r for r in self.rows if r.error is None and math.isfinite(r.rho)]


@dataclass(frozen=True)
class SweepSummary:
    peak_layer: int
    peak_depth: float
    peak_rho: float
    final_rho: float
    rel_improvement_vs_final: float
    rho_range: tuple[float, float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rho_range"] = list(self.rho_range)
        return d


def normalized_depth(layer: int, L: int) -> float:
    """(layer - 1) / (L - 1): first block 0, final block 1."""
    if L < 2:
        raise ParameterError(f"need >= 2 layers to normalize depth, got {L}")
    if not 1 <= layer <= L:
        raise ParameterError(f"layer {layer} outside 1..{L}")
    return (layer - 1) / (L - 1)


def _layer_seed(seed: int, layer: int) -> int:
    # Stable per-layer stream: a single layer evaluated alone must match its
    # row in the full sweep.
    return seed * 1_000_003 + layer


def evaluate_trajectory_layer(
    E: np.ndarray, reference: np.ndarray, root: int, cfg: SweepConfig, layer: int = 1
) -> tuple[float, float]:
    """One layer's pseudotime score: graph -> diffusion -> DPT -> Spearman."""
    g = symmetrize(knn_graph(E, k=cfg.k), mode=cfg.symmetrize)
    op = spectral_decompose(transition_operator(g, kernel=cfg.kernel), m=cfg.n_dcs)
    pt = dpt_distances(op, root)
    if cfg.pvalue == "permutation":
        res = spearman_permutation_p(
            reference, pt.dpt, n_perm=cfg.n_perm, seed=_layer_seed(cfg.seed, layer)
        )
    else:
        res = spearman(reference, pt.dpt)
    return res.rho, res.p_value


def evaluate_perturbation_layer(
    E: np.ndarray,
    labels: Sequence[str | None],
    S_bio: SimilarityMatrix,
    cfg: SweepConfig,
    layer: int = 1,
) -> tuple[float, float]:
    """One layer's alignment score between centroid cosines and S_bio."""
    eval_set = set(S_bio.labels)
    masked = [lab if lab in eval_set else None for lab in labels]
    cents = centroids(E, masked, min_cells=cfg.min_cells)
    order = [cents.labels.index(lab) for lab in S_bio.labels]
    cents = replace(
        cents,
        labels=list(S_bio.labels),
        matrix=cents.matrix[order],
        counts=cents.counts[order],
    )
    S_emb = embedding_similarity(cents)
    res = rsa_score(S_bio, S_emb)
    if cfg.pvalue == "permutation":
        res = spearman_permutation_p(
            upper_tri(S_bio),
            upper_tri(S_emb),
            n_perm=cfg.n_perm,
            seed=_layer_seed(cfg.seed, layer),
        )
    return res.rho, res.p_value


def _run_layers(
    stack: EmbeddingStack,
    cfg: SweepConfig,
    score_one: Callable[[np.ndarray, int], tuple[float, float]],
) -> list[LayerRow]:
    L = stack.layer_count
    if L < 2:
        raise ValidationError(f"a sweep needs >= 2 layers, got {L}")

    def job(idx: int) -> LayerRow:
        layer = idx + 1
        depth = normalized_depth(layer, L)
        try:
            rho, p = score_one(stack.layers[idx], layer)
        except LayersweepError as exc:
            return LayerRow(layer, depth, float("nan"), float("nan"), error=str(exc))
        return LayerRow(layer, depth, rho, p)

    if cfg.jobs == 1:
        return [job(i) for i in range(L)]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(job, range(L)))


def trajectory_sweep(
    stack: EmbeddingStack, ann: CellAnnotations, cfg: SweepConfig
) -> LayerScoreReport:
    """Score every layer's DPT ordering against the reference pseudotime."""
    cfg.validate()
    if ann.reference_pseudotime is None:
        raise ValidationError("trajectory sweep needs reference_pseudotime annotations")
    if ann.n_cells != stack.n_cells:
        raise AlignmentError(
            f"{ann.n_cells} annotated cells for {stack.n_cells} embedding rows"
        )
    reference = ann.reference_pseudotime
    if not np.isfinite(reference).all():
        raise ValidationError(
            "reference_pseudotime contains missing values; trajectory scoring "
            "needs a complete reference"
        )
    root = pick_root(ann)

    def score_one(E: np.ndarray, layer: int) -> tuple[float, float]:
        return evaluate_trajectory_layer(E, reference, root, cfg, layer=layer)

    rows = _run_layers(stack, cfg, score_one)
    return LayerScoreReport(
        task="trajectory", condition=None, rows=rows, config_digest=cfg.digest()
    )


def resolve_eval_labels(
    cell_labels: Sequence[str | None],
    profiles: Sequence[DEProfile],
    cfg: SweepConfig,
) -> list[str]:
    """Labels scored by a perturbation sweep, in DE-profile order.

    Strict by default: the non-control labels with at least min_cells cells
    must equal the profile label set, otherwise the mismatch is spelled out.
    With intersect_labels the intersection is used instead.
    """
    profile_labels = [p.perturbation for p in profiles]
    if len(set(profile_labels)) != len(profile_labels):
        raise ValidationError("duplicate perturbation in DE profiles")
    tally: dict[str, int] = {}
    for lab in cell_labels:
        if lab is None or lab == cfg.control:
            continue
        tally[lab] = tally.get(lab, 0) + 1
    eligible = {lab for lab, n in tally.items() if n >= cfg.min_cells}
    if cfg.intersect_labels:
        kept = [lab for lab in profile_labels if lab in eligible]
        if len(kept) < 2:
            raise EmptyResultError(
                f"only {len(kept)} labels shared between cells and DE profiles"
            )
        return kept
    missing = sorted(set(profile_labels) - eligible)
    extra = sorted(eligible - set(profile_labels))
    if missing or extra:
        parts = ["cell labels do not match DE profile labels"]
        if missing:
            parts.append(f"profiles without enough cells: {missing[:5]}")
        if extra:
            parts.append(f"cell labels without profiles: {extra[:5]}")
        parts.append("pass --intersect-labels to score the overlap")
        raise AlignmentError("; ".join(parts))
    return profile_labels


def perturbation_sweep(
    stack: EmbeddingStack,
    ann: CellAnnotations,
    profiles: Sequence[DEProfile],
    cfg: SweepConfig,
    condition: str | None = None,
) -> LayerScoreReport:
    """Score every layer's centroid-similarity structure against S_bio."""
    cfg.validate()
    if ann.perturbation is None:
        raise ValidationError("perturbation sweep needs perturbation annotations")
    if ann.n_cells != stack.n_cells:
        raise AlignmentError(
            f"{ann.n_cells} annotated cells for {stack.n_cells} embedding rows"
        )
    eval_labels = resolve_eval_labels(ann.perturbation, profiles, cfg)
    by_label = {p.perturbation: p for p in profiles}
    S_bio = bio_similarity([by_label[lab] for lab in eval_labels])
    cell_labels = ann.perturbation

    def score_one(E: np.ndarray, layer: int) -> tuple[float, float]:
        return evaluate_perturbation_layer(E, cell_labels, S_bio, cfg, layer=layer)

    rows = _run_layers(stack, cfg, score_one)
    return LayerScoreReport(
        task="perturbation", condition=condition, rows=rows, config_digest=cfg.digest()
    )


def summarize(report: LayerScoreReport) -> SweepSummary:
    """Peak layer (ties go to the shallower one), final-layer score, and range."""
    if len(report.rows) < 2:
        raise ParameterError("summarize needs >= 2 layers")
    scored = report.scored_rows()
    if not scored:
        raise EmptyResultError("no layer produced a score")
    peak = scored[0]
    for row in scored[1:]:
        if row.rho > peak.rho:
            peak = row
    final = report.rows[-1]
    rhos = [r.rho for r in scored]
    rel = (peak.rho - final.rho) / final.rho if final.rho else float("inf")
    return SweepSummary(
        peak_layer=peak.layer,
        peak_depth=peak.depth,
        peak_rho=peak.rho,
        final_rho=final.rho,
        rel_improvement_vs_final=rel,
        rho_range=(min(rhos), max(rhos)),
    )


def read_scores_csv(
    path: str | Path, task: str = "trajectory", condition: str | None = None
) -> LayerScoreReport:
    """Parse a scores.csv back into a report; the digest covers the file bytes."""
    with open(path, newline="") as fh:
        records = list(csv.reader(fh))
    if not records or records[0] != ["layer", "depth", "rho", "p_value"]:
        raise ValidationError(
            f"{path}: expected header layer,depth,rho,p_value, got "
            f"{records[0] if records else 'an empty file'}"
        )
    rows = []
    for lineno, rec in enumerate(records[1:], start=2):
        if len(rec) != 4:
            raise ValidationError(f"{path}:{lineno}: expected 4 fields, got {len(rec)}")
        try:
            rows.append(
                LayerRow(int(rec[0]), float(rec[1]), float(rec[2]), float(rec[3]))
            )
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return LayerScoreReport(task=task, condition=condition, rows=rows, config_digest=digest)


def write_scores_csv(report: LayerScoreReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "depth", "rho", "p_value"])
        for r in report.rows:
            w.writerow([r.layer, repr(r.depth), repr(r.rho), repr(r.p_value)])


def emit_report(
    report: LayerScoreReport, summary: SweepSummary, out_dir: str | Path
) -> list[Path]:
    """Write scores.csv, summary.json, and curve.svg into out_dir."""
    out = Path(out_dir)
    os.makedirs(out, exist_ok=True)
    scores = out / "scores.csv"
    write_scores_csv(report, scores)

    payload = {
        "task": report.task,
        "condition": report.condition,
        "config_digest": report.config_digest,
        "n_layers": report.n_layers,
        "layer_errors": {str(r.layer): r.error for r in report.rows if r.error},
        **summary.to_dict(),
    }
    summary_path = out / "summary.json"
    with open(summary_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    svg_path = out / "curve.svg"
    render_curve_svg([report], svg_path)
    return [scores, summary_path, svg_path]


def _svg_points(rows: Sequence[LayerRow], xmap, ymap) -> str:
    return " ".join(
        f"{xmap(r.depth):.2f},{ymap(r.rho):.2f}"
        for r in rows
        if r.error is None and math.isfinite(r.rho)
    )


def render_curve_svg(reports: Sequence[LayerScoreReport], path: str | Path) -> None:
    """Depth-vs-rho line plot, one polyline per report, peaks circled.

    Hand-assembled markup so identical inputs give identical bytes.
    """
    if not reports:
        raise ParameterError("nothing to plot")
    width, height = 640.0, 420.0
    left, right, top, bottom = 64.0, 20.0, 24.0, 48.0
    all_rho = [r.rho for rep in reports for r in rep.scored_rows()]
    ymin = -1.0 if (all_rho and min(all_rho) < 0) else 0.0
    ymax = 1.0

    def xmap(depth: float) -> float:
        return left + depth * (width - left - right)

    def ymap(rho: float) -> float:
        frac = (rho - ymin) / (ymax - ymin)
        return (height - bottom) - frac * (height - bottom - top)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    n_yticks = 5 if ymin == 0 else 9
    for i in range(n_yticks):
        v = ymin + (ymax - ymin) * i / (n_yticks - 1)
        y = ymap(v)
        parts.append(
            f'<line x1="{left:.2f}" y1="{y:.2f}" x2="{width - right:.2f}" '
            f'y2="{y:.2f}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 8:.2f}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12">{v:.2f}</text>'
        )
    for i in range(5):
        v = i / 4
        x = xmap(v)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top:.2f}" x2="{x:.2f}" '
            f'y2="{height - bottom:.2f}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{height - bottom + 18:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{v:.2f}</text>'
        )
    parts.append(
        f'<text x="{(left + width - right) / 2:.2f}" y="{height - 10:.2f}" '
        f'text-anchor="middle" font-family="sans-serif" font-size="13">'
        "normalized depth</text>"
    )
    parts.append(
        f'<text x="16" y="{(top + height - bottom) / 2:.2f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 16 {(top + height - bottom) / 2:.2f})">'
        "Spearman rho</text>"
    )
    for idx, rep in enumerate(reports):
        color = _SVG_PALETTE[idx % len(_SVG_PALETTE)]
        pts = _svg_points(rep.rows, xmap, ymap)
        if pts:
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                'stroke-width="2"/>'
            )
        scored = rep.scored_rows()
        if scored:
            peak = max(scored, key=lambda r: (r.rho, -r.layer))
            parts.append(
                f'<circle cx="{xmap(peak.depth):.2f}" cy="{ymap(peak.rho):.2f}" '
                f'r="5" fill="none" stroke="{color}" stroke-width="2"/>'
            )
        label = rep.condition if rep.condition is not None else rep.task
        parts.append(
            f'<text x="{width - right - 8:.2f}" y="{top + 16 + 16 * idx:.2f}" '
            f'text-anchor="end" font-family="sans-serif" font-size="12" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
