"""Expected pre-softmax attention score under a Gaussian query/key model with RoPE.

With q ~ N(mu_q, S_q) and k ~ N(mu_k, S_k) independent, the RoPE logit between a
query at position m and a key at position n has expectation

    sum_p a_p cos(delta * theta_p) - b_p sin(delta * theta_p),   delta = m - n,

where per rotation plane (2p, 2p+1)

    a_p = mu_q[2p] mu_k[2p] + mu_q[2p+1] mu_k[2p+1]
    b_p = mu_q[2p+1] mu_k[2p] - mu_q[2p] mu_k[2p+1]

Equivalently sum_p r_p cos(alpha_p + delta * theta_p) with r_p = hypot(a_p, b_p)
and the four-quadrant angle alpha_p = atan2(b_p, a_p).  The covariances only
affect the spread, never the mean, and the mean depends on m - n alone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numerics import RopeConfig, Rng, apply_rope, sample_gaussian


@dataclass
class GaussianQKModel:
    mu_q: np.ndarray
    mu_k: np.ndarray
    sigma_q: object = 0.0
    sigma_k: object = 0.0
    rope: RopeConfig | None = None

    def __post_init__(self):
        self.mu_q = np.asarray(self.mu_q, dtype=np.float64)
        self.mu_k = np.asarray(self.mu_k, dtype=np.float64)
        if self.mu_q.shape != self.mu_k.shape or self.mu_q.ndim != 1:
            raise ValueError("mu_q and mu_k must be vectors of equal length")
        if self.rope is None:
            self.rope = RopeConfig(self.mu_q.shape[0])
        if self.rope.head_dim != self.mu_q.shape[0]:
            raise ValueError("RoPE head_dim does not match the mean vectors")

    @property
    def dim(self) -> int:
        return self.mu_q.shape[0]


@dataclass
class SlashSpectrum:
    a: np.ndarray
    b: np.ndarray
    r: np.ndarray
    alpha: np.ndarray


def slash_spectrum(model: GaussianQKModel) -> SlashSpectrum:
    q0, q1 = model.mu_q[0::2], model.mu_q[1::2]
    k0, k1 = model.mu_k[0::2], model.mu_k[1::2]
    a = q0 * k0 + q1 * k1
    b = q1 * k0 - q0 * k1
    return SlashSpectrum(a, b, np.hypot(a, b), np.arctan2(b, a))


def expected_score(spec: SlashSpectrum, delta, rope: RopeConfig):
    """Closed-form E[logit] at relative offset ``delta`` (scalar or array)."""
    d = np.asarray(delta, dtype=np.float64)
    ang = d[..., None] * rope.thetas()
    out = (spec.a * np.cos(ang) - spec.b * np.sin(ang)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def expected_score_phase(spec: SlashSpectrum, delta, rope: RopeConfig):
    """Amplitude-phase form of :func:`expected_score`."""
    d = np.asarray(delta, dtype=np.float64)
    out = (spec.r * np.cos(spec.alpha + d[..., None] * rope.thetas())).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def rotated_mean_score(model: GaussianQKModel, m: int, n: int) -> float:
    """<R(m) mu_q, R(n) mu_k> evaluated by explicit rotation."""
    q = apply_rope(model.mu_q[None, :], [m], model.rope)[0]
    k = apply_rope(model.mu_k[None, :], [n], model.rope)[0]
    return float(q @ k)


@dataclass
class MonteCarloProfile:
    deltas: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    samples: int


def monte_carlo_score(
    model: GaussianQKModel,
    deltas,
    samples: int,
    rng: Rng,
    key_position: int = 0,
    common_random_numbers: bool = True,
) -> MonteCarloProfile:
    """Empirical mean and standard error of <R(m) q, R(n) k> for each offset m - n.

    Keys sit at ``key_position``; queries at ``key_position + delta``.  With common
    random numbers the same (q, k) draws are reused for every offset.
    """
    if samples < 1000:
        raise ValueError("monte_carlo_score needs at least 1000 samples")
    deltas = np.asarray(deltas, dtype=np.int64)
    if (key_position + deltas < 0).any():
        raise ValueError("query positions must be non-negative; raise key_position")

    def draw(stream: Rng):
        q = sample_gaussian(model.mu_q, model.sigma_q, samples, stream.derive(0))
        k = sample_gaussian(model.mu_k, model.sigma_k, samples, stream.derive(1))
        return q, apply_rope(k, np.full(samples, key_position), model.rope)

    if common_random_numbers:
        shared = draw(rng)
    means = np.empty(deltas.shape[0])
    errs = np.empty(deltas.shape[0])
    for idx, delta in enumerate(deltas):
        q, k_rot = shared if common_random_numbers else draw(rng.derive(idx))
        q_rot = apply_rope(q, np.full(samples, key_position + delta), model.rope)
        vals = np.einsum("ij,ij->i", q_rot, k_rot)
        means[idx] = vals.mean()
        errs[idx] = vals.std(ddof=1) / math.sqrt(samples)
    return MonteCarloProfile(deltas, means, errs, samples)


def plant_slash_means(
    target_offsets,
    rope: RopeConfig,
    strength=1.0,
    planes=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean vectors whose expected-score profile peaks at each target offset.

    Each used plane p gets the complex coefficient a_p + i b_p equal to
    w_p * sum_T s_T exp(-i theta_p T) with w_p = 1 / len(planes), so the profile is
    sum_T s_T * kernel(delta - T) with kernel(x) = mean_p cos(theta_p x), which is
    maximal (value 1) at x = 0.  ``strength`` is a scalar or one value per offset.
    """
    offsets = np.asarray(list(target_offsets), dtype=np.float64)
    strengths = np.broadcast_to(np.asarray(strength, dtype=np.float64), offsets.shape)
    thetas = rope.thetas()
    used = np.arange(rope.n_planes) if planes is None else np.asarray(list(planes), dtype=np.int64)
    mu_q = np.zeros(rope.head_dim)
    mu_k = np.zeros(rope.head_dim)
    if offsets.size == 0 or used.size == 0:
        return mu_q, mu_k
    longest = 2.0 * math.pi / thetas[used].min()
    for t in offsets:
        if t < 0 or t >= longest:
            warnings.warn(
                f"offset {t:g} is outside the longest usable RoPE period ({longest:.1f}); "
                "its peak aliases onto a smaller offset",
                stacklevel=2,
            )
    w = 1.0 / used.size
    for p in used:
        c = w * np.sum(strengths * np.exp(-1j * thetas[p] * offsets))
        amp = math.sqrt(abs(c))
        mu_k[2 * p] = amp
        mu_q[2 * p] = amp * math.cos(np.angle(c))
        mu_q[2 * p + 1] = amp * math.sin(np.angle(c))
    return mu_q, mu_k
