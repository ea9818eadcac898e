"""Command-line entry point.

Subcommands: trajectory, perturbation, summarize, synth, validate,
claims-check. Exit codes: 0 success, 1 validation error, 2 computation
error, 3 claim-check mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .claims import run_claims_check
from .container import (
    CellAnnotations,
    read_container,
    read_counts,
    subset_cells,
    validate_container,
    write_container,
    write_counts,
)
from .diffusion import (
    dpt_distances,
    dump_dpt_csv,
    pick_root,
    spectral_decompose,
    transition_operator,
)
from .errors import LayersweepError, ParameterError, ValidationError
from .neighbors import dump_graph_csv, knn_graph, symmetrize
from .prep import (
    log_fold_change,
    pseudobulk,
    read_de_profiles,
    size_factors,
    write_de_profiles,
)
from .rsa import bio_similarity, centroids, dump_similarity_csv, embedding_similarity
from .sweep import (
    SweepConfig,
    emit_report,
    perturbation_sweep,
    read_scores_csv,
    render_curve_svg,
    resolve_eval_labels,
    summarize,
    trajectory_sweep,
)
from .synth import PerturbationScenario, TrajectoryScenario, gen_perturbation, gen_trajectory

EXIT_CLAIMS_MISMATCH = 3


def _add_graph_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=15, help="neighbors per cell (default 15)")
    p.add_argument("--n-dcs", type=int, default=10, help="diffusion components (default 10)")
    p.add_argument("--kernel", choices=("gauss", "binary"), default="gauss")
    p.add_argument("--symmetrize", choices=("union", "mutual"), default="union")


def _add_scoring_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pvalue", choices=("asymptotic", "permutation"), default="asymptotic")
    p.add_argument("--n-perm", type=int, default=1000, help="permutations (default 1000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="concurrent layer evaluations")


def _config_from_args(args: argparse.Namespace) -> SweepConfig:
    return SweepConfig(
        k=getattr(args, "k", 15),
        n_dcs=getattr(args, "n_dcs", 10),
        kernel=getattr(args, "kernel", "gauss"),
        symmetrize=getattr(args, "symmetrize", "union"),
        control=getattr(args, "control", SweepConfig.control),
        min_cells=getattr(args, "min_cells", 1),
        pvalue=getattr(args, "pvalue", "asymptotic"),
        n_perm=getattr(args, "n_perm", 1000),
        seed=getattr(args, "seed", 0),
        jobs=getattr(args, "jobs", 1),
        intersect_labels=getattr(args, "intersect_labels", False),
        min_labels=getattr(args, "min_labels", 2),
        pseudocount=getattr(args, "pseudocount", 1.0),
    )


def _print_summary_line(condition: str | None, summary) -> None:
    tag = f"[{condition}] " if condition else ""
    print(
        f"{tag}peak layer {summary.peak_layer} "
        f"(depth {summary.peak_depth:.2f}, rho {summary.peak_rho:.4f}); "
        f"final layer rho {summary.final_rho:.4f}; "
        f"improvement {100 * summary.rel_improvement_vs_final:.1f}%"
    )


def cmd_trajectory(args: argparse.Namespace) -> int:
    stack, ann = read_container(args.container)
    cfg = _config_from_args(args)
    report = trajectory_sweep(stack, ann, cfg)
    summary = summarize(report)
    emit_report(report, summary, args.out)
    if args.dump_dpt is not None:
        layer = args.dump_dpt
        if not 1 <= layer <= stack.layer_count:
            raise ParameterError(f"--dump-dpt layer {layer} outside 1..{stack.layer_count}")
        g = symmetrize(knn_graph(stack.layers[layer - 1], k=cfg.k), mode=cfg.symmetrize)
        op = spectral_decompose(transition_operator(g, kernel=cfg.kernel), m=cfg.n_dcs)
        result = dpt_distances(op, pick_root(ann))
        dump_dpt_csv(ann, result, Path(args.out) / f"dpt_layer_{layer:03d}.csv")
    if args.dump_graph is not None:
        layer = args.dump_graph
        if not 1 <= layer <= stack.layer_count:
            raise ParameterError(f"--dump-graph layer {layer} outside 1..{stack.layer_count}")
        g = symmetrize(knn_graph(stack.layers[layer - 1], k=cfg.k), mode=cfg.symmetrize)
        dump_graph_csv(g, Path(args.out) / f"graph_layer_{layer:03d}.csv")
    _print_summary_line(None, summary)
    print(f"wrote {Path(args.out) / 'scores.csv'}")
    return 0


def _condition_runs(ann: CellAnnotations) -> list[tuple[str | None, np.ndarray]]:
    """(condition, cell mask) pairs; one run over everything when unannotated."""
    n = ann.n_cells
    if ann.condition is None:
        return [(None, np.ones(n, dtype=bool))]
    conds = sorted({c for c in ann.condition if c is not None})
    if not conds:
        return [(None, np.ones(n, dtype=bool))]
    unassigned = sum(c is None for c in ann.condition)
    if unassigned:
        warnings.warn(f"{unassigned} cells have no condition and are skipped")
    return [
        (cond, np.array([c == cond for c in ann.condition], dtype=bool))
        for cond in conds
    ]


def _profiles_from_counts(counts, ann: CellAnnotations, cfg: SweepConfig):
    """Pseudobulk DE against the control, restricted to labels with enough cells."""
    label_of = dict(zip(ann.cell_ids, ann.perturbation))
    missing = [cid for cid in counts.cell_ids if cid not in label_of]
    if missing:
        raise ValidationError(
            f"counts contain {len(missing)} cells absent from the container, "
            f"first {missing[:3]}"
        )
    labels = [label_of[cid] for cid in counts.cell_ids]
    tally: dict[str, int] = {}
    for lab in labels:
        if lab is None or lab == cfg.control:
            continue
        tally[lab] = tally.get(lab, 0) + 1
    eligible = sorted(lab for lab, n in tally.items() if n >= cfg.min_cells)
    if not eligible:
        raise ValidationError(
            f"no perturbation label besides {cfg.control!r} has >= "
            f"{cfg.min_cells} cells"
        )
    if cfg.control not in labels:
        raise ValidationError(
            f"control label {cfg.control!r} has no cells; set --control"
        )
    pb = pseudobulk(counts, labels, label_order=eligible + [cfg.control])
    sf = size_factors(pb, pseudocount=1.0)
    return log_fold_change(
        pb,
        sf,
        control=cfg.control,
        pseudocount=cfg.pseudocount,
        min_labels=cfg.min_labels,
    )


def cmd_perturbation(args: argparse.Namespace) -> int:
    stack, ann = read_container(args.container)
    if ann.perturbation is None:
        raise ValidationError("container has no perturbation annotations")
    cfg = _config_from_args(args)

    shared_profiles = None
    counts_all = None
    if args.de_profiles:
        shared_profiles = read_de_profiles(args.de_profiles)
    else:
        counts_path = Path(args.counts) if args.counts else Path(args.container) / "counts.mtx"
        if not counts_path.exists():
            raise ValidationError(
                "need DE profiles: pass --de-profiles, or --counts / a "
                "container with counts.mtx to derive them"
            )
        counts_all = read_counts(counts_path)
        if set(counts_all.cell_ids) != set(ann.cell_ids):
            raise ValidationError(
                "counts and container cover different cell sets "
                f"({counts_all.n_cells} vs {ann.n_cells} cells)"
            )

    runs = _condition_runs(ann)
    out_root = Path(args.out)
    reports = []
    for cond, mask in runs:
        sub_stack, sub_ann = subset_cells(stack, ann, mask)
        if shared_profiles is not None:
            profiles = shared_profiles
        else:
            keep = {cid for cid, ok in zip(ann.cell_ids, mask) if ok}
            col_mask = np.array([cid in keep for cid in counts_all.cell_ids])
            sub_counts = type(counts_all)(
                gene_ids=counts_all.gene_ids,
                cell_ids=[c for c in counts_all.cell_ids if c in keep],
                matrix=counts_all.matrix[:, np.flatnonzero(col_mask)],
            )
            profiles = _profiles_from_counts(sub_counts, sub_ann, cfg)
        report = perturbation_sweep(sub_stack, sub_ann, profiles, cfg, condition=cond)
        summary = summarize(report)
        run_dir = out_root if len(runs) == 1 else out_root / f"condition_{cond}"
        emit_report(report, summary, run_dir)
        if shared_profiles is None:
            write_de_profiles(run_dir / "de_profiles.csv", profiles)
        if args.dump_similarity:
            kept = resolve_eval_labels(sub_ann.perturbation, profiles, cfg)
            by_label = {p.perturbation: p for p in profiles}
            S_bio = bio_similarity([by_label[lab] for lab in kept])
            dump_similarity_csv(run_dir / "similarity_bio.csv", S_bio)
            for idx, E in enumerate(sub_stack.layers, start=1):
                masked = [
                    lab if lab in set(kept) else None for lab in sub_ann.perturbation
                ]
                cents = centroids(E, masked, min_cells=cfg.min_cells)
                dump_similarity_csv(
                    run_dir / f"similarity_layer_{idx:03d}.csv",
                    embedding_similarity(cents),
                )
        reports.append(report)
        _print_summary_line(cond, summary)
    if len(reports) > 1:
        render_curve_svg(reports, out_root / "curve.svg")
    print(f"wrote results under {out_root}")
    return 0


def cmd_summarize(args: argparse.Namespace) -> int:
    report = read_scores_csv(args.scores, task=args.task, condition=args.condition)
    summary = summarize(report)
    payload = {
        "task": report.task,
        "condition": report.condition,
        "n_layers": report.n_layers,
        **summary.to_dict(),
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    if args.out:
        emit_report(report, summary, args.out)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.task == "trajectory":
        noise = tuple(float(tok) for tok in args.noise.split(","))
        sc = TrajectoryScenario(
            n_cells=args.n_cells, dims=args.dims, noise_schedule=noise, seed=args.seed
        )
        stack, ann = gen_trajectory(sc)
        write_container(stack, ann, args.out)
        print(
            f"wrote trajectory container: {stack.layer_count} layers, "
            f"{stack.n_cells} cells -> {args.out}"
        )
    else:
        scrambled = (
            tuple(int(tok) for tok in args.scrambled_layers.split(","))
            if args.scrambled_layers
            else ()
        )
        sc = PerturbationScenario(
            n_labels=args.n_labels,
            n_cells_per_label=args.cells_per_label,
            n_genes=args.n_genes,
            n_blocks=args.n_blocks,
            n_layers=args.n_layers,
            scrambled_layers=scrambled,
            embed_dim=args.embed_dim,
            control=args.control,
            seed=args.seed,
        )
        stack, ann, counts = gen_perturbation(sc)
        write_container(stack, ann, args.out)
        write_counts(counts, args.out)
        print(
            f"wrote perturbation container: {stack.layer_count} layers, "
            f"{stack.n_cells} cells, {counts.n_genes} genes -> {args.out}"
        )
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    report = validate_container(args.container)
    if report.passed:
        print(f"ok: {args.container} is a valid container")
        return 0
    for failure in report.failures:
        print(f"{failure.code}: {failure.message}", file=sys.stderr)
    return 1


def cmd_claims_check(args: argparse.Namespace) -> int:
    results, notes = run_claims_check()
    for res in results:
        print(res.format_line())
    for note in notes:
        print(f"NOTE {note}")
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} claims passed")
    return 0 if n_pass == len(results) else EXIT_CLAIMS_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layersweep",
        description="Layer-wise evaluation of cell embedding stacks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("trajectory", help="score each layer against reference pseudotime")
    p.add_argument("--container", required=True, help="container directory")
    p.add_argument("--out", required=True, help="output directory")
    _add_graph_options(p)
    _add_scoring_options(p)
    p.add_argument("--dump-dpt", type=int, metavar="LAYER", default=None)
    p.add_argument("--dump-graph", type=int, metavar="LAYER", default=None)
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser(
        "perturbation", help="score each layer's similarity structure against DE profiles"
    )
    p.add_argument("--container", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--de-profiles", default=None, help="CSV perturbation,gene,logfc")
    p.add_argument("--counts", default=None, help="counts.mtx to derive DE profiles from")
    p.add_argument("--control", default="non-targeting")
    p.add_argument("--min-cells", type=int, default=1)
    p.add_argument("--min-labels", type=int, default=2, help="gene support threshold")
    p.add_argument("--pseudocount", type=float, default=1.0)
    p.add_argument("--intersect-labels", action="store_true")
    p.add_argument("--dump-similarity", action="store_true")
    _add_graph_options(p)
    _add_scoring_options(p)
    p.set_defaults(func=cmd_perturbation)

    p = sub.add_parser("summarize", help="summarize an existing scores.csv")
    p.add_argument("--scores", required=True)
    p.add_argument("--task", choices=("trajectory", "perturbation"), default="trajectory")
    p.add_argument("--condition", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("synth", help="generate a synthetic container")
    p.add_argument("--task", choices=("trajectory", "perturbation"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-cells", type=int, default=500, help="trajectory cells")
    p.add_argument("--dims", type=int, default=16)
    p.add_argument("--noise", default="0.0,0.1,1.0", help="comma-separated sigma per layer")
    p.add_argument("--n-labels", type=int, default=20)
    p.add_argument("--cells-per-label", type=int, default=300)
    p.add_argument("--n-genes", type=int, default=500)
    p.add_argument("--n-blocks", type=int, default=4)
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--scrambled-layers", default="2", help="comma-separated, 1-based")
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--control", default="non-targeting")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check a container directory")
    p.add_argument("--container", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("claims-check", help="verify packaged tables against their summaries")
    p.set_defaults(func=cmd_claims_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except LayersweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
