"""Foundation numerics: seeded RNG, Gaussian sampling, softmax, SiLU and RoPE.

Matrices are plain ``float64`` numpy arrays (row-major, C-contiguous).

RNG algorithm
-------------
:class:`Rng` wraps numpy's Philox4x64-10 counter-based bit generator, keyed by a
``SeedSequence`` built from the 64-bit seed.  Normal draws use numpy's
``Generator.standard_normal`` (ziggurat), uniform index draws use
``Generator.permutation``.  Derived substreams (``Rng.derive``) key a fresh
Philox from ``SeedSequence([seed, *path])``, so per-sample or per-offset streams
never depend on how many draws a sibling stream consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class Rng:
    """Deterministic counter-based random stream. Single owner; not thread-safe."""

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.path = tuple(_path)
        ss = np.random.SeedSequence([self.seed, *self.path])
        self._gen = np.random.Generator(np.random.Philox(ss))

    def derive(self, *keys: int) -> "Rng":
        """Independent substream identified by ``keys`` (does not advance this stream)."""
        return Rng(self.seed, self.path + tuple(int(k) for k in keys))

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, size)

    def choice(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct integers from ``[0, n)``, in draw order."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        return self._gen.permutation(n)[:k]

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)


def softmax_rows(m: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise softmax with max subtraction; masked-out entries are exactly 0."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        return softmax_rows(m[None, :], None if mask is None else np.asarray(mask)[None, :])[0]
    if mask is None:
        shifted = m - m.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != m.shape:
        raise ValueError(f"mask shape {mask.shape} does not match {m.shape}")
    empty = ~mask.any(axis=1)
    if empty.any():
        raise ValueError(f"empty softmax row {int(np.argmax(empty))}")
    masked = np.where(mask, m, -np.inf)
    e = np.exp(masked - masked.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    """x * sigmoid(x); accepts scalars or arrays."""
    arr = np.asarray(x, dtype=np.float64)
    y = arr * sigmoid(arr)
    return float(y) if np.ndim(x) == 0 else y


def silu_grad(x):
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass(frozen=True)
class RopeConfig:
    head_dim: int
    base: float = 10000.0

    def __post_init__(self):
        if self.head_dim < 2 or self.head_dim % 2:
            raise ValueError(f"RoPE head_dim must be even and >= 2, got {self.head_dim}")
        if not self.base > 0:
            raise ValueError(f"RoPE base must be positive, got {self.base}")

    @property
    def n_planes(self) -> int:
        return self.head_dim // 2

    def thetas(self) -> np.ndarray:
        p = np.arange(self.n_planes, dtype=np.float64)
        return self.base ** (-2.0 * p / self.head_dim)


def rope_matrix(t: float, cfg: RopeConfig) -> np.ndarray:
    """Explicit block-diagonal rotation R(t); planes are interleaved pairs (2p, 2p+1)."""
    r = np.zeros((cfg.head_dim, cfg.head_dim))
    for p, theta in enumerate(cfg.thetas()):
        c, s = np.cos(t * theta), np.sin(t * theta)
        r[2 * p, 2 * p], r[2 * p, 2 * p + 1] = c, -s
        r[2 * p + 1, 2 * p], r[2 * p + 1, 2 * p + 1] = s, c
    return r


def apply_rope(x: np.ndarray, positions, cfg: RopeConfig) -> np.ndarray:
    """Rotate row ``t`` of ``x`` by R(positions[t])."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.head_dim:
        raise ValueError(f"expected an n x {cfg.head_dim} matrix, got shape {x.shape}")
    pos = np.asarray(positions, dtype=np.float64)
    if pos.shape != (x.shape[0],):
        raise ValueError("positions must have one entry per row")
    if (pos < 0).any():
        raise ValueError("positions must be non-negative")
    ang = pos[:, None] * cfg.thetas()[None, :]
    c, s = np.cos(ang), np.sin(ang)
    even, odd = x[:, 0::2], x[:, 1::2]
    out = np.empty_like(x)
    out[:, 0::2] = c * even - s * odd
    out[:, 1::2] = s * even + c * odd
    return out


def covariance_factor(cov, dim: int) -> np.ndarray:
    """Matrix L with L @ L.T == cov. ``cov`` may be a scalar, a diagonal vector, or a full matrix."""
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim == 0:
        cov = np.full(dim, float(cov))
    if cov.ndim == 1:
        if cov.shape != (dim,):
            raise ValueError(f"diagonal covariance must have length {dim}")
        if (cov < 0).any():
            raise ValueError("diagonal covariance entries must be >= 0")
        return np.diag(np.sqrt(cov))
    if cov.shape != (dim, dim):
        raise ValueError(f"covariance must be {dim} x {dim}, got {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise np.linalg.LinAlgError("covariance is not symmetric")
    w, u = np.linalg.eigh(cov)
    if w.min() < -1e-10 * max(1.0, abs(w).max()):
        raise np.linalg.LinAlgError("covariance is not positive semi-definite")
    return u * np.sqrt(np.clip(w, 0.0, None))


def sample_gaussian(mean, cov, count: int, rng: Rng) -> np.ndarray:
    """``count`` i.i.d. rows from N(mean, cov)."""
    mean = np.asarray(mean, dtype=np.float64)
    dim = mean.shape[0]
    cov_arr = np.asarray(cov, dtype=np.float64)
    z = rng.normal((count, dim))
    if cov_arr.ndim <= 1:
        diag = np.broadcast_to(cov_arr, (dim,))
        if (diag < 0).any():
            raise ValueError("diagonal covariance entries must be >= 0")
        return mean + z * np.sqrt(diag)
    return mean + z @ covariance_factor(cov_arr, dim).T
