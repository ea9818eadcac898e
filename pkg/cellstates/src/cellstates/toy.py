"""Builders for the bundled toy checkpoint and its example counts.

Weights are random but fixed by seed; the packaged copies were produced by
these functions and are what `--model toy-4block` resolves to.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ParameterError

_BLOCK_PARTS = ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2",
                "ln1_g", "ln1_b", "ln2_g", "ln2_b")


def build_toy_checkpoint(
    path: str | Path,
    n_blocks: int = 4,
    d_model: int = 16,
    n_heads: int = 2,
    d_ff: int = 32,
    vocab_size: int = 64,
    max_tokens: int = 8,
    seed: int = 7,
    name: str | None = None,
) -> Path:
    """Write a random-weight checkpoint directory; returns its path."""
    if n_blocks < 1 or d_model < n_heads or d_model % n_heads != 0:
        raise ParameterError("degenerate toy architecture")
    rng = np.random.default_rng(seed)
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    proj_scale = 0.5 / np.sqrt(d_model)
    arrays: dict[str, np.ndarray] = {
        "token_embedding": rng.normal(size=(vocab_size, d_model)),
        "value_embedding": rng.normal(scale=0.5, size=(vocab_size, d_model)),
    }
    for i in range(1, n_blocks + 1):
        prefix = f"block_{i:03d}"
        arrays[f"{prefix}.wq"] = rng.normal(scale=proj_scale, size=(d_model, d_model))
        arrays[f"{prefix}.wk"] = rng.normal(scale=proj_scale, size=(d_model, d_model))
        arrays[f"{prefix}.wv"] = rng.normal(scale=proj_scale, size=(d_model, d_model))
        arrays[f"{prefix}.wo"] = rng.normal(scale=proj_scale, size=(d_model, d_model))
        arrays[f"{prefix}.w1"] = rng.normal(scale=proj_scale, size=(d_model, d_ff))
        arrays[f"{prefix}.b1"] = rng.normal(scale=0.02, size=d_ff)
        arrays[f"{prefix}.w2"] = rng.normal(scale=0.5 / np.sqrt(d_ff), size=(d_ff, d_model))
        arrays[f"{prefix}.b2"] = rng.normal(scale=0.02, size=d_model)
        arrays[f"{prefix}.ln1_g"] = 1.0 + rng.normal(scale=0.1, size=d_model)
        arrays[f"{prefix}.ln1_b"] = rng.normal(scale=0.05, size=d_model)
        arrays[f"{prefix}.ln2_g"] = 1.0 + rng.normal(scale=0.1, size=d_model)
        arrays[f"{prefix}.ln2_b"] = rng.normal(scale=0.05, size=d_model)

    np.savez(out / "weights.npz", **arrays)
    meta = {
        "architecture": "toy-transformer",
        "name": name or f"toy-{n_blocks}block",
        "n_blocks": n_blocks,
        "d_model": d_model,
        "n_heads": n_heads,
        "d_ff": d_ff,
        "vocab_size": vocab_size,
        "max_tokens": max_tokens,
    }
    (out / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def build_toy_counts(
    directory: str | Path,
    n_cells: int = 8,
    n_genes: int = 30,
    seed: int = 11,
) -> Path:
    """Write a small counts.mtx plus sidecars; returns the .mtx path.

    The last cell expresses no genes, exercising the cell-token-only path.
    """
    if n_cells < 1 or n_genes < 1:
        raise ParameterError("need at least one cell and one gene")
    rng = np.random.default_rng(seed)
    dense = np.zeros((n_genes, n_cells), dtype=np.int64)
    for j in range(n_cells - 1):
        expressed = rng.choice(n_genes, size=rng.integers(3, 10), replace=False)
        dense[expressed, j] = rng.integers(1, 40, size=expressed.size)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(out / "counts.mtx", sp.coo_matrix(dense), field="integer")
    (out / "genes.txt").write_text(
        "".join(f"gene_{i:04d}\n" for i in range(n_genes))
    )
    (out / "barcodes.txt").write_text(
        "".join(f"cell_{i:04d}\n" for i in range(n_cells))
    )
    return out / "counts.mtx"
