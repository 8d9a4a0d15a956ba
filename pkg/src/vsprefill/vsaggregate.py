"""Ground-truth vertical (column) and slash (diagonal) attention mass.

``vertical[j]`` is the mass column ``j`` receives over all query rows and
``slash[o]`` the mass on the diagonal ``i - j = o``.  Raw sums total ``n`` each;
normalized scores divide by ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .attention import AttentionInputs, check_causal_weights


@dataclass
class VSScores:
    vertical: np.ndarray
    slash: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.vertical = np.asarray(self.vertical, dtype=np.float64)
        self.slash = np.asarray(self.slash, dtype=np.float64)
        if self.vertical.ndim != 1 or self.vertical.shape != self.slash.shape:
            raise ValueError("vertical and slash scores must be vectors of equal length")

    @property
    def n(self) -> int:
        return self.vertical.shape[0]

    def normalize(self) -> "VSScores":
        if self.normalized:
            return self
        return VSScores(self.vertical / self.n, self.slash / self.n, normalized=True)

    def as_matrix(self) -> np.ndarray:
        """2 x n array: row 0 vertical, row 1 slash (the on-disk layout)."""
        return np.stack([self.vertical, self.slash])

    @classmethod
    def from_matrix(cls, m: np.ndarray, normalized: bool = True) -> "VSScores":
        m = np.asarray(m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != 2:
            raise ValueError(f"VSScores tensor must be 2 x n, got shape {m.shape}")
        return cls(m[0].copy(), m[1].copy(), normalized)


def aggregate_naive(a: np.ndarray, normalize: bool = True) -> VSScores:
    """Column and diagonal sums of a materialized causal attention matrix."""
    a = check_causal_weights(a)
    n = a.shape[0]
    low = np.tril(a)
    vertical = low.sum(axis=0)
    slash = np.array([np.trace(low, offset=-o) for o in range(n)])
    raw = VSScores(vertical, slash, normalized=False)
    return raw.normalize() if normalize else raw


def aggregate_streaming(inp: AttentionInputs, block: int = 64, normalize: bool = True) -> VSScores:
    """Same result as ``aggregate_naive(full_attention(inp).a)`` without an n x n buffer.

    First pass streams key tiles to get each row's max and softmax denominator;
    the second recomputes the tile logits and scatters normalized weights into the
    column and diagonal accumulators.
    """
    if block < 1:
        raise ValueError("block must be >= 1")
    block = min(block, inp.n)
    vertical, slash = kernels.vs_aggregate(inp.q, inp.k, inp.scale, block)
    raw = VSScores(vertical, slash, normalized=False)
    return raw.normalize() if normalize else raw


def reduce_group(scores: list[VSScores], reduction: str = "mean") -> VSScores:
    """Combine per-head scores of one KV group.

    ``mean`` averages the normalized distributions.  ``sum`` adds the heads' mass
    vectors and returns them unnormalized (each vector totals ``n * heads``);
    dividing by ``n * heads`` recovers ``mean``.
    """
    if not scores:
        raise ValueError("no scores to reduce")
    n = scores[0].n
    v = np.stack([s.normalize().vertical for s in scores])
    sl = np.stack([s.normalize().slash for s in scores])
    if reduction == "mean":
        return VSScores(v.mean(axis=0), sl.mean(axis=0))
    if reduction == "sum":
        return VSScores(v.sum(axis=0) * n, sl.sum(axis=0) * n, normalized=False)
    raise ValueError(f"unknown reduction {reduction!r}")
