"""Budget selection, top-k index extraction, per-row index merging and baseline selectors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .attention import AttentionInputs, SparsePattern
from .numerics import Rng, softmax_rows
from .vsaggregate import VSScores

CUMSUM_SLACK = 1e-12


@dataclass(frozen=True)
class BudgetConfig:
    tau_v: float = 0.9
    tau_s: float = 0.9
    min_budget: int = 1
    max_budget: int | None = None

    def __post_init__(self):
        for name in ("tau_v", "tau_s"):
            tau = getattr(self, name)
            if not 0.0 < tau <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {tau}")
        if self.min_budget < 1:
            raise ValueError("min_budget must be >= 1")
        if self.max_budget is not None and self.max_budget < self.min_budget:
            raise ValueError("max_budget must be >= min_budget")


@dataclass
class SelectedIndices:
    i_v: np.ndarray
    i_s: np.ndarray

    def __post_init__(self):
        self.i_v = np.asarray(self.i_v, dtype=np.int64).reshape(-1)
        self.i_s = np.asarray(self.i_s, dtype=np.int64).reshape(-1)
        for name in ("i_v", "i_s"):
            arr = getattr(self, name)
            if arr.size and (np.diff(arr) <= 0).any():
                raise ValueError(f"{name} must be strictly increasing")

    @property
    def k_v(self) -> int:
        return int(self.i_v.shape[0])

    @property
    def k_s(self) -> int:
        return int(self.i_s.shape[0])

    def pattern(self) -> SparsePattern:
        return SparsePattern(self.i_v, self.i_s)

    def to_text(self) -> str:
        v = " ".join(str(int(i)) for i in self.i_v)
        s = " ".join(str(int(o)) for o in self.i_s)
        return f"V: {v}".rstrip() + "\n" + f"S: {s}".rstrip() + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SelectedIndices":
        rows = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, sep, rest = line.partition(":")
            if not sep or key.strip() not in ("V", "S"):
                raise ValueError(f"malformed index line {line!r}")
            rows[key.strip()] = [int(tok) for tok in rest.split()]
        if set(rows) != {"V", "S"}:
            raise ValueError("index file needs exactly one 'V:' and one 'S:' line")
        return cls(rows["V"], rows["S"])

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path) -> "SelectedIndices":
        return cls.from_text(Path(path).read_text())


def _check_distribution(scores: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores must be a non-empty vector")
    if abs(scores.sum() - 1.0) > tol:
        raise ValueError(f"scores must sum to 1, got {scores.sum():.9g}")
    return scores


def cumulative_budget(scores, tau: float, cfg: BudgetConfig | None = None) -> int:
    """Smallest k whose top-k scores hold at least ``tau`` mass, clamped to the config's bounds."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    scores = _check_distribution(scores)
    n = scores.shape[0]
    csum = np.cumsum(np.sort(scores)[::-1])
    hit = np.nonzero(csum >= tau - CUMSUM_SLACK)[0]
    k = int(hit[0]) + 1 if hit.size else n
    if cfg is not None:
        hi = n if cfg.max_budget is None else min(cfg.max_budget, n)
        k = max(cfg.min_budget, k)
        k = min(k, hi)
    return k


def topk_indices(scores, k: int) -> np.ndarray:
    """Indices of the k largest scores in ascending order; ties prefer the lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:k])


def _with_offset_zero(i_s: np.ndarray) -> np.ndarray:
    return np.union1d(i_s, np.zeros(1, dtype=np.int64)).astype(np.int64)


def select_pattern(scores: VSScores, cfg: BudgetConfig) -> SelectedIndices:
    """Cumulative-threshold budgets then top-k per direction; offset 0 is always kept."""
    s = scores.normalize()
    k_v = cumulative_budget(s.vertical, cfg.tau_v, cfg)
    k_s = cumulative_budget(s.slash, cfg.tau_s, cfg)
    return SelectedIndices(topk_indices(s.vertical, k_v), _with_offset_zero(topk_indices(s.slash, k_s)))


def select_fixed(scores: VSScores, k_v: int, k_s: int) -> SelectedIndices:
    """Top-k selection with given budgets (used for equal-budget comparisons)."""
    s = scores.normalize()
    return SelectedIndices(topk_indices(s.vertical, k_v), _with_offset_zero(topk_indices(s.slash, k_s)))


def budgets_for_sparsity(n: int, sparsity: float) -> tuple[int, int]:
    """Equal per-direction budgets whose independent union keeps ``1 - sparsity`` of causal pairs.

    A pair survives if its column or its offset is selected, so with per-direction
    fraction f the kept fraction is 1 - (1 - f)^2.
    """
    if not 0.0 <= sparsity < 1.0:
        raise ValueError(f"sparsity must lie in [0, 1), got {sparsity}")
    f = 1.0 - math.sqrt(sparsity)
    k = max(1, min(n, int(round(f * n))))
    return k, k


def merge_row_columns(i_v, i_s, row: int, n: int) -> np.ndarray:
    """Sorted columns of query ``row``: causal vertical columns united with slash diagonals."""
    if not 0 <= row < n:
        raise ValueError(f"row {row} outside [0, {n})")
    return kernels.merge_row(np.asarray(i_v, dtype=np.int64), np.asarray(i_s, dtype=np.int64), row)


def merge_path_partition(a, b, parts: int) -> list[tuple[int, int]]:
    """Split points (i, j) along evenly spaced cross diagonals of the merge grid.

    Segment ``t`` merges ``a[i_t:i_{t+1}]`` with ``b[j_t:j_{t+1}]``; the concatenated
    segment merges equal the sequential (stable, ``a``-first on ties) merge.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    a = np.asarray(a)
    b = np.asarray(b)
    na, nb = a.shape[0], b.shape[0]
    total = na + nb
    splits = []
    for t in range(parts + 1):
        diag = t * total // parts
        lo, hi = max(0, diag - nb), min(diag, na)
        while lo < hi:
            mid = (lo + hi) // 2
            if a[mid] <= b[diag - mid - 1]:
                lo = mid + 1
            else:
                hi = mid
        splits.append((lo, diag - lo))
    return splits


def _merge(a, b) -> list:
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] <= b[j]:
            out.append(a[i])
            i += 1
        else:
            out.append(b[j])
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return out


def merge_path_merge(a, b, parts: int) -> list[list]:
    """Merge ``a`` and ``b`` as ``parts`` independent segments; returns the segments."""
    splits = merge_path_partition(a, b, parts)
    a, b = list(a), list(b)
    return [
        _merge(a[i0:i1], b[j0:j1]) for (i0, j0), (i1, j1) in zip(splits[:-1], splits[1:])
    ]


def random_pattern(n: int, k_v: int, k_s: int, rng: Rng) -> SelectedIndices:
    """Uniform selection without replacement per direction, offset 0 added."""
    if not (0 <= k_v <= n and 0 <= k_s <= n):
        raise ValueError(f"budgets must lie in [0, {n}]")
    i_v = np.sort(rng.choice(n, k_v))
    i_s = np.sort(rng.choice(n, k_s))
    return SelectedIndices(i_v, _with_offset_zero(i_s))


def sampling_estimate(inp: AttentionInputs, sample_rows: int, rng: Rng | None = None, rows=None) -> VSScores:
    """Vertical/slash estimate from exact softmax rows of a subset of queries.

    Rows are drawn uniformly without replacement unless ``rows`` is given.
    """
    n = inp.n
    if rows is None:
        if not 1 <= sample_rows <= n:
            raise ValueError(f"sample_rows must lie in [1, {n}]")
        if rng is None:
            raise ValueError("an Rng is required to sample rows")
        rows = np.sort(rng.choice(n, sample_rows))
    rows = np.asarray(rows, dtype=np.int64)
    logits = (inp.q[rows] @ inp.k.T) * inp.scale
    cols = np.arange(n)[None, :]
    allowed = cols <= rows[:, None]
    w = softmax_rows(logits, allowed)
    vertical = w.sum(axis=0)
    offs = rows[:, None] - cols
    slash = np.bincount(offs[allowed], weights=w[allowed], minlength=n)
    m = rows.shape[0]
    return VSScores(vertical / m, slash / m)
