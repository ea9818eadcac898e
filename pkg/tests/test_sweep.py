"""Layer sweeps: per-layer scoring, summaries, reports, and determinism."""

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import replace

import numpy as np
import pytest

from layersweep.container import CellAnnotations, EmbeddingStack, make_cell_ids
from layersweep.errors import (
    AlignmentError,
    EmptyResultError,
    ParameterError,
    ValidationError,
)
from layersweep.prep import DEProfile, log_fold_change, pseudobulk, size_factors
from layersweep.rsa import bio_similarity
from layersweep.sweep import (
    LayerRow,
    LayerScoreReport,
    SweepConfig,
    emit_report,
    evaluate_perturbation_layer,
    evaluate_trajectory_layer,
    normalized_depth,
    perturbation_sweep,
    read_scores_csv,
    render_curve_svg,
    resolve_eval_labels,
    summarize,
    trajectory_sweep,
    write_scores_csv,
)
from layersweep.synth import PerturbationScenario, gen_perturbation


def chain_stack(n=300, n_layers=2):
    """Noiseless 1-D chain embedded in the plane; reference order = t."""
    t = np.linspace(0.0, 2.0, n)
    layer = np.column_stack([t, np.ones_like(t)]).astype(np.float32)
    stack = EmbeddingStack(layers=[layer.copy() for _ in range(n_layers)])
    ann = CellAnnotations(cell_ids=make_cell_ids(n), reference_pseudotime=t)
    return stack, ann


def report_from_rhos(rhos, task="trajectory"):
    L = len(rhos)
    rows = [
        LayerRow(i + 1, normalized_depth(i + 1, L), float(r), 1e-6) for i, r in enumerate(rhos)
    ]
    return LayerScoreReport(task=task, condition=None, rows=rows, config_digest="0" * 64)


def test_normalized_depth():
    assert normalized_depth(1, 24) == 0.0
    assert normalized_depth(24, 24) == 1.0
    assert normalized_depth(23, 24) == pytest.approx(22.0 / 23.0)
    assert normalized_depth(10, 12) == pytest.approx(9.0 / 11.0)
    with pytest.raises(ParameterError):
        normalized_depth(1, 1)
    with pytest.raises(ParameterError):
        normalized_depth(0, 5)
    with pytest.raises(ParameterError):
        normalized_depth(6, 5)


def test_sweep_config_validation():
    SweepConfig().validate()
    bad = [
        SweepConfig(kernel="triangle"),
        SweepConfig(symmetrize="max"),
        SweepConfig(pvalue="none"),
        SweepConfig(k=0),
        SweepConfig(n_dcs=0),
        SweepConfig(n_perm=0),
        SweepConfig(min_cells=0),
        SweepConfig(jobs=0),
    ]
    for cfg in bad:
        with pytest.raises(ParameterError):
            cfg.validate()


def test_sweep_config_digest():
    base = SweepConfig()
    digest = base.digest()
    assert len(digest) == 64
    int(digest, 16)
    # jobs is scheduling-only and excluded from analysis identity
    assert SweepConfig(jobs=8).digest() == digest
    assert SweepConfig(k=10).digest() != digest
    assert SweepConfig(seed=1).digest() != digest
    assert SweepConfig(kernel="binary").digest() != digest


def test_report_requires_contiguous_layers():
    row = LayerRow(2, 0.5, 0.1, 0.5)
    with pytest.raises(ValidationError, match="1..L"):
        LayerScoreReport(task="trajectory", condition=None, rows=[row], config_digest="x")
    with pytest.raises(ParameterError, match="task"):
        LayerScoreReport(task="banana", condition=None, rows=[], config_digest="x")


def test_trajectory_sweep_perfect_chain():
    stack, ann = chain_stack()
    report = trajectory_sweep(stack, ann, SweepConfig())
    assert report.n_layers == 2
    assert [r.layer for r in report.rows] == [1, 2]
    for row in report.rows:
        assert row.error is None
        assert row.rho == 1.0
        assert row.p_value <= 1e-6


def test_trajectory_sweep_isolates_layer_errors():
    # layer 2 is two antipodal clusters: the kNN graph disconnects and that
    # layer alone reports the failure
    stack, ann = chain_stack(n=100)
    rng = np.random.default_rng(0)
    half = np.repeat([1.0, -1.0], 50)
    u = np.array([1.0, 0.5, 0.25])
    split = half[:, None] * u + 1e-6 * rng.normal(size=(100, 3))
    stack = EmbeddingStack(layers=[stack.layers[0], split.astype(np.float32)])
    report = trajectory_sweep(stack, ann, SweepConfig())
    assert report.rows[0].error is None
    assert report.rows[0].rho == 1.0
    assert report.rows[1].error is not None
    assert "multiplicity" in report.rows[1].error
    assert math.isnan(report.rows[1].rho)
    assert [r.layer for r in report.rows] == [1, 2]


def test_trajectory_sweep_input_errors():
    stack, ann = chain_stack(n=50)
    no_ref = CellAnnotations(cell_ids=ann.cell_ids)
    with pytest.raises(ValidationError, match="reference_pseudotime"):
        trajectory_sweep(stack, no_ref, SweepConfig())
    short = CellAnnotations(
        cell_ids=make_cell_ids(10), reference_pseudotime=np.linspace(0, 1, 10)
    )
    with pytest.raises(AlignmentError):
        trajectory_sweep(stack, short, SweepConfig())
    holes = np.linspace(0, 1, 50)
    holes[3] = np.nan
    gappy = CellAnnotations(cell_ids=ann.cell_ids, reference_pseudotime=holes)
    with pytest.raises(ValidationError, match="missing"):
        trajectory_sweep(stack, gappy, SweepConfig())
    single = EmbeddingStack(layers=[stack.layers[0]])
    with pytest.raises(ValidationError, match="2 layers"):
        trajectory_sweep(single, ann, SweepConfig())


def test_trajectory_noise_layer_scores_near_zero():
    # pure i.i.d. noise carries no ordering signal
    cfg = SweepConfig()
    reference = np.linspace(0.0, 1.0, 1000)
    rhos = []
    for seed in range(20):
        E = np.random.default_rng(seed).normal(size=(1000, 16))
        rho, _ = evaluate_trajectory_layer(E, reference, 0, cfg)
        rhos.append(abs(rho))
    assert float(np.mean(rhos)) <= 0.1


def small_perturbation_case(seed=0):
    sc = PerturbationScenario(
        n_labels=12,
        n_cells_per_label=40,
        n_genes=150,
        n_blocks=4,
        embed_dim=64,
        seed=seed,
    )
    stack, ann, counts = gen_perturbation(sc)
    pb = pseudobulk(counts, ann.perturbation)
    sf = size_factors(pb, pseudocount=1.0)
    profiles = log_fold_change(pb, sf, control=sc.control)
    return stack, ann, profiles


def test_perturbation_sweep_signal_vs_scrambled():
    stack, ann, profiles = small_perturbation_case()
    report = perturbation_sweep(stack, ann, profiles, SweepConfig())
    assert report.task == "perturbation"
    signal, scrambled = report.rows
    assert signal.error is None and scrambled.error is None
    assert signal.rho >= 0.9
    assert abs(scrambled.rho) <= 0.3


def test_perturbation_sweep_errors():
    stack, ann, profiles = small_perturbation_case()
    no_labels = CellAnnotations(cell_ids=ann.cell_ids)
    with pytest.raises(ValidationError, match="perturbation"):
        perturbation_sweep(stack, no_labels, profiles, SweepConfig())
    missing = profiles + [
        DEProfile(
            perturbation="ghost",
            gene_ids=profiles[0].gene_ids,
            logfc=np.arange(len(profiles[0].gene_ids), dtype=float),
        )
    ]
    with pytest.raises(AlignmentError, match="without enough cells"):
        perturbation_sweep(stack, ann, missing, SweepConfig())


def test_resolve_eval_labels_strict_and_intersect():
    cfg = SweepConfig()
    profiles = [
        DEProfile(perturbation=p, gene_ids=["g1", "g2", "g3"], logfc=np.arange(3.0))
        for p in ("a", "b", "c")
    ]
    cells = ["a"] * 3 + ["b"] * 2 + ["c"] * 4 + ["non-targeting"] * 5
    assert resolve_eval_labels(cells, profiles, cfg) == ["a", "b", "c"]

    extra_cells = cells + ["d"] * 3
    with pytest.raises(AlignmentError, match="without profiles.*intersect-labels"):
        resolve_eval_labels(extra_cells, profiles, cfg)
    inter = replace(cfg, intersect_labels=True)
    assert resolve_eval_labels(extra_cells, profiles, inter) == ["a", "b", "c"]

    few = ["a"] * 3 + ["non-targeting"] * 2
    with pytest.raises(AlignmentError, match="without enough cells"):
        resolve_eval_labels(few, profiles, cfg)
    with pytest.raises(EmptyResultError):
        resolve_eval_labels(few, profiles, inter)

    strict_min = replace(cfg, min_cells=3)
    with pytest.raises(AlignmentError):
        resolve_eval_labels(cells, profiles, strict_min)  # b has 2 cells

    dup = profiles + [profiles[0]]
    with pytest.raises(ValidationError, match="duplicate"):
        resolve_eval_labels(cells, dup, cfg)


def test_perturbation_single_layer_matches_sweep():
    stack, ann, profiles = small_perturbation_case(seed=1)
    cfg = SweepConfig()
    report = perturbation_sweep(stack, ann, profiles, cfg)
    eval_labels = resolve_eval_labels(ann.perturbation, profiles, cfg)
    by_label = {p.perturbation: p for p in profiles}
    S_bio = bio_similarity([by_label[lab] for lab in eval_labels])
    rho, p = evaluate_perturbation_layer(
        stack.layers[0], ann.perturbation, S_bio, cfg, layer=1
    )
    assert rho == report.rows[0].rho
    assert p == report.rows[0].p_value


def test_summarize_peak_final_and_range():
    s = summarize(report_from_rhos([0.1, 0.5, 0.3, 0.2]))
    assert s.peak_layer == 2
    assert s.peak_depth == pytest.approx(1.0 / 3.0)
    assert s.peak_rho == 0.5
    assert s.final_rho == 0.2
    assert s.rel_improvement_vs_final == pytest.approx((0.5 - 0.2) / 0.2)
    assert s.rho_range == (0.1, 0.5)


def test_summarize_tie_goes_to_shallower_layer():
    s = summarize(report_from_rhos([0.2, 0.5, 0.5, 0.1]))
    assert s.peak_layer == 2


def test_summarize_zero_final_is_infinite_improvement():
    s = summarize(report_from_rhos([0.4, 0.0]))
    assert s.rel_improvement_vs_final == math.inf


def test_summarize_affine_invariance_of_peak():
    rng = np.random.default_rng(6)
    rhos = rng.uniform(-0.5, 0.9, size=12)
    base = summarize(report_from_rhos(rhos))
    moved = summarize(report_from_rhos(np.clip(0.9 * rhos + 0.05, -1, 1)))
    assert base.peak_layer == moved.peak_layer


def test_summarize_skips_error_rows():
    rows = [
        LayerRow(1, 0.0, 0.3, 1e-4),
        LayerRow(2, 0.5, float("nan"), float("nan"), error="disconnected"),
        LayerRow(3, 1.0, 0.2, 1e-4),
    ]
    report = LayerScoreReport(
        task="trajectory", condition=None, rows=rows, config_digest="d"
    )
    s = summarize(report)
    assert s.peak_layer == 1
    assert s.rho_range == (0.2, 0.3)


def test_summarize_errors():
    with pytest.raises(ParameterError):
        summarize(report_from_rhos([0.5]))
    rows = [
        LayerRow(1, 0.0, float("nan"), float("nan"), error="x"),
        LayerRow(2, 1.0, float("nan"), float("nan"), error="y"),
    ]
    report = LayerScoreReport(
        task="trajectory", condition=None, rows=rows, config_digest="d"
    )
    with pytest.raises(EmptyResultError):
        summarize(report)


def test_jobs_do_not_change_results():
    stack, ann, profiles = small_perturbation_case(seed=2)
    serial = perturbation_sweep(stack, ann, profiles, SweepConfig(jobs=1))
    parallel = perturbation_sweep(stack, ann, profiles, SweepConfig(jobs=4))
    assert serial.rows == parallel.rows
    assert serial.config_digest == parallel.config_digest


def test_scores_csv_round_trip(tmp_path):
    report = report_from_rhos([0.11, 0.52, 0.33])
    path = tmp_path / "scores.csv"
    write_scores_csv(report, path)
    back = read_scores_csv(path, task="trajectory")
    assert [(r.layer, r.depth, r.rho, r.p_value) for r in back.rows] == [
        (r.layer, r.depth, r.rho, r.p_value) for r in report.rows
    ]
    with pytest.raises(ValidationError, match="header"):
        bad = tmp_path / "bad.csv"
        bad.write_text("layer,rho\n1,0.5\n")
        read_scores_csv(bad)


def test_emit_report_layout(tmp_path):
    report = report_from_rhos(np.linspace(0.05, 0.65, 12))
    files = emit_report(report, summarize(report), tmp_path)
    scores, summary_path, svg = files
    lines = scores.read_text().splitlines()
    assert len(lines) == 13  # header + one line per layer
    payload = json.loads(summary_path.read_text())
    for key in (
        "task",
        "condition",
        "config_digest",
        "n_layers",
        "layer_errors",
        "peak_layer",
        "peak_depth",
        "peak_rho",
        "final_rho",
        "rel_improvement_vs_final",
        "rho_range",
    ):
        assert key in payload
    assert payload["n_layers"] == 12
    assert payload["peak_layer"] == 12
    assert svg.exists()
    # a rerun is byte-identical
    rerun_dir = tmp_path / "again"
    rerun = emit_report(report, summarize(report), rerun_dir)
    assert rerun[0].read_bytes() == scores.read_bytes()
    assert rerun[1].read_bytes() == summary_path.read_bytes()
    assert rerun[2].read_bytes() == svg.read_bytes()


def test_render_curve_svg_structure(tmp_path):
    r1 = report_from_rhos([0.1, 0.4, 0.3])
    r2 = report_from_rhos([0.2, 0.25, 0.6], task="perturbation")
    path = tmp_path / "curve.svg"
    render_curve_svg([r1, r2], path)
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    polylines = [e for e in root.iter() if e.tag.endswith("polyline")]
    assert len(polylines) == 2
    texts = [e.text for e in root.iter() if e.tag.endswith("text")]
    assert any(t == "trajectory" for t in texts)
    assert any(t == "perturbation" for t in texts)


def test_render_curve_svg_negative_axis(tmp_path):
    path = tmp_path / "neg.svg"
    render_curve_svg([report_from_rhos([-0.4, 0.2, 0.5])], path)
    body = path.read_text()
    assert "polyline" in body
    ET.fromstring(body)  # well-formed
    with pytest.raises(ParameterError):
        render_curve_svg([], tmp_path / "none.svg")
