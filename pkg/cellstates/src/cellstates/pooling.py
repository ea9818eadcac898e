"""Token-level hidden states to one per-cell vector.

Two modes: the arithmetic mean over tokens, or a designated cell-token row.
The mode tag is recorded verbatim in the output container's model name so a
container always says how it was pooled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class PoolingSpec:
    """Parsed pooling mode: "mean", or "cell-token" with a token index."""

    mode: str
    index: int | None = None

    @property
    def tag(self) -> str:
        if self.mode == "mean":
            return "mean"
        return f"cell-token:{self.index}"


def parse_pooling(tag: str) -> PoolingSpec:
    """Parse a pooling tag: "mean" or "cell-token:N" with N >= 0."""
    if tag == "mean":
        return PoolingSpec(mode="mean")
    if tag.startswith("cell-token:"):
        raw = tag[len("cell-token:"):]
        try:
            index = int(raw)
        except ValueError:
            raise ParameterError(f"bad cell-token index {raw!r}") from None
        if index < 0:
            raise ParameterError(f"cell-token index must be nonnegative, got {index}")
        return PoolingSpec(mode="cell-token", index=index)
    raise ParameterError(
        f"unknown pooling {tag!r}: expected 'mean' or 'cell-token:N'"
    )


def pool(token_states: np.ndarray, spec: PoolingSpec) -> np.ndarray:
    """Collapse a tokens x d hidden-state matrix to one d-vector."""
    token_states = np.asarray(token_states, dtype=np.float64)
    if token_states.ndim != 2:
        raise ParameterError("token states must be a tokens x d matrix")
    if token_states.shape[0] < 1:
        raise ParameterError("pooling needs at least one token")
    if spec.mode == "mean":
        return token_states.mean(axis=0)
    assert spec.index is not None
    if spec.index >= token_states.shape[0]:
        raise ParameterError(
            f"cell-token index {spec.index} out of range for "
            f"{token_states.shape[0]} tokens"
        )
    return token_states[spec.index].copy()
