"""Tiny numpy transformer over gene-token sets, loaded from a checkpoint.

A checkpoint is a directory with `model.json` (architecture metadata) and
`weights.npz` (parameter arrays). Each cell becomes a token sequence: one
designated cell token at position 0, then the most highly expressed genes in
ascending gene-index order. There are no positional encodings, so a cell is a
token set. Blocks are post-norm: the recorded per-block state is the output
after the feed-forward sublayer, residual addition, and layer normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import erf

from .errors import CheckpointError, ExtractionError

CELL_TOKEN_ID = 0
_LN_EPS = 1e-5

_META_KEYS = ("architecture", "name", "n_blocks", "d_model", "n_heads",
              "d_ff", "vocab_size", "max_tokens")
_BLOCK_KEYS = ("wq", "wk", "wv", "wo", "w1", "b1", "w2", "b2",
               "ln1_g", "ln1_b", "ln2_g", "ln2_b")


def _layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + _LN_EPS) * gain + bias


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


@dataclass
class ToyTransformer:
    """Frozen weights plus the forward pass; inference only, no dropout."""

    name: str
    n_blocks: int
    d_model: int
    n_heads: int
    d_ff: int
    vocab_size: int
    max_tokens: int
    token_embedding: np.ndarray
    value_embedding: np.ndarray
    blocks: list[dict[str, np.ndarray]]

    def tokenize(self, counts_col: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Counts for one cell -> (token ids, token values).

        Token 0 is the cell token (value 0). Gene g maps to token id g + 1.
        When more genes are expressed than fit, the highest counts win, ties
        broken by lower gene index; kept genes appear in ascending index order.
        """
        col = np.asarray(counts_col, dtype=np.float64).ravel()
        expressed = np.flatnonzero(col > 0)
        if expressed.size and expressed.max() + 1 >= self.vocab_size:
            raise ExtractionError(
                f"gene index {int(expressed.max())} does not fit the checkpoint "
                f"vocabulary ({self.vocab_size - 1} gene tokens)"
            )
        budget = self.max_tokens - 1
        if expressed.size > budget:
            keep = np.lexsort((expressed, -col[expressed]))[:budget]
            expressed = np.sort(expressed[keep])
        ids = np.concatenate(([CELL_TOKEN_ID], expressed + 1)).astype(np.int64)
        values = np.concatenate(([0.0], col[expressed]))
        return ids, values

    def forward(
        self,
        ids: np.ndarray,
        values: np.ndarray,
        hook: Callable[[int, np.ndarray], None] | None = None,
    ) -> list[np.ndarray]:
        """Run all blocks; returns the per-block hidden states in order.

        `hook(block_index, state)` is called with 1-based indices as each
        block finishes, in forward-pass order.
        """
        h = self.token_embedding[ids] + np.log1p(values)[:, None] * self.value_embedding[ids]
        states: list[np.ndarray] = []
        for b, blk in enumerate(self.blocks, start=1):
            h = _layer_norm(h + self._attention(h, blk), blk["ln1_g"], blk["ln1_b"])
            h = _layer_norm(h + self._feedforward(h, blk), blk["ln2_g"], blk["ln2_b"])
            states.append(h)
            if hook is not None:
                hook(b, h)
        return states

    def _attention(self, h: np.ndarray, blk: dict[str, np.ndarray]) -> np.ndarray:
        t = h.shape[0]
        dh = self.d_model // self.n_heads
        q = (h @ blk["wq"]).reshape(t, self.n_heads, dh)
        k = (h @ blk["wk"]).reshape(t, self.n_heads, dh)
        v = (h @ blk["wv"]).reshape(t, self.n_heads, dh)
        scores = np.einsum("qhd,khd->hqk", q, k) / np.sqrt(dh)
        scores -= scores.max(axis=-1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=-1, keepdims=True)
        context = np.einsum("hqk,khd->qhd", weights, v).reshape(t, self.d_model)
        return context @ blk["wo"]

    def _feedforward(self, h: np.ndarray, blk: dict[str, np.ndarray]) -> np.ndarray:
        return _gelu(h @ blk["w1"] + blk["b1"]) @ blk["w2"] + blk["b2"]


def load_checkpoint(path: str | Path) -> ToyTransformer:
    """Load and shape-check a checkpoint directory."""
    root = Path(path)
    meta_path = root / "model.json"
    weights_path = root / "weights.npz"
    if not meta_path.is_file() or not weights_path.is_file():
        raise CheckpointError(
            f"checkpoint {root} needs model.json and weights.npz"
        )
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"model.json is not valid JSON: {e}") from e
    missing = [k for k in _META_KEYS if k not in meta]
    if missing:
        raise CheckpointError(f"model.json is missing {missing}")
    if meta["architecture"] != "toy-transformer":
        raise CheckpointError(f"unknown architecture {meta['architecture']!r}")

    n_blocks = int(meta["n_blocks"])
    d = int(meta["d_model"])
    n_heads = int(meta["n_heads"])
    d_ff = int(meta["d_ff"])
    vocab = int(meta["vocab_size"])
    max_tokens = int(meta["max_tokens"])
    if n_blocks < 1 or d < 1 or n_heads < 1 or d_ff < 1 or vocab < 2 or max_tokens < 1:
        raise CheckpointError("model.json declares a degenerate architecture")
    if d % n_heads != 0:
        raise CheckpointError(f"d_model {d} is not divisible by n_heads {n_heads}")

    with np.load(weights_path) as w:
        arrays = {k: np.asarray(w[k], dtype=np.float64) for k in w.files}

    observed = set()
    for key in arrays:
        if key.startswith("block_"):
            observed.add(key.split(".", 1)[0])
    if len(observed) != n_blocks:
        raise ExtractionError(
            f"model.json declares {n_blocks} blocks but weights hold {len(observed)}"
        )

    expected_shapes = {
        "wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d),
        "w1": (d, d_ff), "b1": (d_ff,), "w2": (d_ff, d), "b2": (d,),
        "ln1_g": (d,), "ln1_b": (d,), "ln2_g": (d,), "ln2_b": (d,),
    }
    blocks: list[dict[str, np.ndarray]] = []
    for i in range(1, n_blocks + 1):
        prefix = f"block_{i:03d}"
        if prefix not in observed:
            raise ExtractionError(f"weights are missing {prefix}")
        blk = {}
        for part, shape in expected_shapes.items():
            key = f"{prefix}.{part}"
            if key not in arrays:
                raise CheckpointError(f"weights are missing {key}")
            if arrays[key].shape != shape:
                raise CheckpointError(
                    f"{key} has shape {arrays[key].shape}, expected {shape}"
                )
            blk[part] = arrays[key]
        blocks.append(blk)

    for key, shape in (("token_embedding", (vocab, d)), ("value_embedding", (vocab, d))):
        if key not in arrays:
            raise CheckpointError(f"weights are missing {key}")
        if arrays[key].shape != shape:
            raise CheckpointError(
                f"{key} has shape {arrays[key].shape}, expected {shape}"
            )

    return ToyTransformer(
        name=str(meta["name"]),
        n_blocks=n_blocks,
        d_model=d,
        n_heads=n_heads,
        d_ff=d_ff,
        vocab_size=vocab,
        max_tokens=max_tokens,
        token_embedding=arrays["token_embedding"],
        value_embedding=arrays["value_embedding"],
        blocks=blocks,
    )
