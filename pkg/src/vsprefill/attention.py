"""Causal attention: naive, streaming (blockwise) and vertical-slash sparse, plus Attention Recall."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import softmax_rows

MAX_WEIGHTS_N = 4096
ROW_SUM_TOL = 1e-6


@dataclass
class AttentionInputs:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    scale: float | None = None
    causal: bool = True

    def __post_init__(self):
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        self.k = np.ascontiguousarray(self.k, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        if self.q.ndim != 2 or self.q.shape != self.k.shape or self.q.shape != self.v.shape:
            raise ValueError(
                f"q, k, v must share shape n x d; got {self.q.shape}, {self.k.shape}, {self.v.shape}"
            )
        if self.q.shape[0] < 1:
            raise ValueError("sequence length must be >= 1")
        if not self.causal:
            raise NotImplementedError("only causal attention is supported")
        if self.scale is None:
            self.scale = 1.0 / math.sqrt(self.d)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def d(self) -> int:
        return self.q.shape[1]


@dataclass
class AttentionOutput:
    o: np.ndarray
    a: np.ndarray | None = None


def _sorted_unique(xs, n: int, what: str) -> np.ndarray:
    arr = np.asarray(xs, dtype=np.int64).reshape(-1)
    if arr.size and (np.diff(arr) <= 0).any():
        raise ValueError(f"{what} must be strictly increasing")
    if arr.size and (arr[0] < 0 or arr[-1] >= n):
        raise ValueError(f"{what} entries must lie in [0, {n})")
    return arr


@dataclass
class SparsePattern:
    """Selected vertical columns ``i_v`` and slash offsets ``i_s`` (offset o is the diagonal i - j = o)."""

    i_v: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    i_s: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.i_v = np.asarray(self.i_v, dtype=np.int64).reshape(-1)
        self.i_s = np.asarray(self.i_s, dtype=np.int64).reshape(-1)

    def validate(self, n: int) -> "SparsePattern":
        _sorted_unique(self.i_v, n, "vertical indices")
        _sorted_unique(self.i_s, n, "slash offsets")
        return self

    @classmethod
    def full(cls, n: int) -> "SparsePattern":
        return cls(np.arange(n), np.zeros(0, dtype=np.int64))

    def mask(self, n: int) -> np.ndarray:
        """Explicit n x n allowed-pair mask (causal). For oracles and small n only."""
        self.validate(n)
        rows = np.arange(n)[:, None]
        cols = np.arange(n)[None, :]
        sel = np.isin(cols, self.i_v) | np.isin(rows - cols, self.i_s)
        return sel & (cols <= rows)


def causal_logits(inp: AttentionInputs) -> np.ndarray:
    p = (inp.q @ inp.k.T) * inp.scale
    n = inp.n
    return np.where(np.tri(n, dtype=bool), p, -np.inf)


def full_attention(
    inp: AttentionInputs, keep_weights: bool = False, max_weights_n: int = MAX_WEIGHTS_N
) -> AttentionOutput:
    """Naive causal attention; materializes the n x n weights."""
    if keep_weights and inp.n > max_weights_n:
        raise ValueError(
            f"refusing to materialize {inp.n} x {inp.n} weights (cap {max_weights_n}); "
            "raise max_weights_n to override"
        )
    a = softmax_rows(causal_logits(inp))
    o = a @ inp.v
    return AttentionOutput(o, a if keep_weights else None)


def blockwise_attention(inp: AttentionInputs, block: int = 64) -> AttentionOutput:
    """Tiled causal attention with online max/denominator rescaling."""
    if block < 1:
        raise ValueError("block must be >= 1")
    block = min(block, inp.n)
    return AttentionOutput(kernels.flash_forward(inp.q, inp.k, inp.v, inp.scale, block))


def sparse_attention(inp: AttentionInputs, pat: SparsePattern, block: int = 64) -> AttentionOutput:
    """Attention restricted to the vertical-slash pattern.

    Each query row's column list is merged on the fly from ``pat.i_v`` and ``pat.i_s``
    and streamed in chunks of ``block`` keys.
    """
    if block < 1:
        raise ValueError("block must be >= 1")
    pat.validate(inp.n)
    o, bad = kernels.sparse_forward(inp.q, inp.k, inp.v, pat.i_v, pat.i_s, inp.scale, block)
    if bad >= 0:
        raise ValueError(f"uncovered query row {bad}")
    return AttentionOutput(o)


def check_causal_weights(a: np.ndarray, tol: float = ROW_SUM_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"attention weights must be square, got shape {a.shape}")
    if not np.isfinite(a).all() or (a < 0).any():
        raise ValueError("attention weights must be finite and non-negative")
    sums = np.tril(a).sum(axis=1)
    bad = np.abs(sums - 1.0) > tol
    if bad.any():
        i = int(np.argmax(bad))
        raise ValueError(f"row {i} of the attention weights sums to {sums[i]:.9g}, not 1")
    return a


def attention_recall(a: np.ndarray, pat: SparsePattern) -> float:
    """Fraction of the causal attention mass covered by the pattern: (1/n) * sum over S of A[i, j]."""
    a = check_causal_weights(a)
    n = a.shape[0]
    covered = pat.mask(n)
    return float(a[covered].sum() / n)
