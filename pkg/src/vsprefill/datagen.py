"""Synthetic attention inputs with planted vertical anchors and slash offsets, and the VSTN tensor format.

Planting layout for head dim d (P = d / 2 RoPE planes):

* planes ``0 .. P-2`` carry the slash structure from :func:`plant_slash_means`;
* plane ``P-1`` (the slowest rotation) is the anchor channel: every query has mean
  ``anchor_query`` on its first coordinate, and an anchor key gets its strength
  added there, so it scores highly from every later query regardless of distance.

Values never enter the ground truth.  Anchor rows of V carry an optional shift
(``value_marker``) standing in for the distinctive content of heavy-hitter tokens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import AttentionInputs
from .numerics import RopeConfig, Rng, apply_rope
from .theory import plant_slash_means
from .vsaggregate import VSScores, aggregate_streaming

MAGIC = b"VSTN"
VERSION = 1
_HEADER = struct.Struct("<4sII")


@dataclass
class PlantSpec:
    n: int = 256
    d: int = 32
    anchors: list = field(default_factory=lambda: [(0, 12.0)])
    slash_offsets: list = field(default_factory=lambda: [(0, 10.0)])
    noise_sigma: float = 1.0
    seed: int = 0
    anchor_query: float = 2.0
    value_marker: float = 0.0
    rope_base: float = 10000.0
    query_sigma: float | None = None

    def __post_init__(self):
        if self.d < 4 or self.d % 2:
            raise ValueError("d must be even and >= 4 (one plane is reserved for anchors)")
        if self.noise_sigma < 0 or (self.query_sigma is not None and self.query_sigma < 0):
            raise ValueError("noise levels must be >= 0")
        for c, _ in self.anchors:
            if not 0 <= c < self.n:
                raise ValueError(f"anchor column {c} outside [0, {self.n})")
        for o, _ in self.slash_offsets:
            if not 0 <= o < self.n:
                raise ValueError(f"slash offset {o} outside [0, {self.n})")

    @property
    def rope(self) -> RopeConfig:
        return RopeConfig(self.d, self.rope_base)


@dataclass
class Sample:
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    target: VSScores

    def inputs(self) -> AttentionInputs:
        return AttentionInputs(self.q, self.k, self.v)


def planted_means(spec: PlantSpec) -> tuple[np.ndarray, np.ndarray]:
    rope = spec.rope
    anchor_plane = rope.n_planes - 1
    offsets = [o for o, _ in spec.slash_offsets]
    strengths = [s for _, s in spec.slash_offsets]
    mu_q, mu_k = plant_slash_means(offsets, rope, strengths, planes=range(anchor_plane))
    mu_q[2 * anchor_plane] = spec.anchor_query
    return mu_q, mu_k


def generate(spec: PlantSpec, block: int = 64) -> Sample:
    """RoPE-applied Q, K, independent V, and the streamed ground-truth scores."""
    rng = Rng(spec.seed)
    n, d = spec.n, spec.d
    rope = spec.rope
    mu_q, mu_k = planted_means(spec)
    q_sigma = spec.noise_sigma if spec.query_sigma is None else spec.query_sigma
    q = mu_q + q_sigma * rng.derive(0).normal((n, d))
    k = mu_k + spec.noise_sigma * rng.derive(1).normal((n, d))
    v = rng.derive(2).normal((n, d))
    anchor_dim = 2 * (rope.n_planes - 1)
    for c, strength in spec.anchors:
        k[c, anchor_dim] += strength
        v[c, 0] += spec.value_marker
    pos = np.arange(n)
    q = apply_rope(q, pos, rope)
    k = apply_rope(k, pos, rope)
    target = aggregate_streaming(AttentionInputs(q, k, v), block=block)
    return Sample(q, k, v, target)


@dataclass
class SuiteSpec:
    """A family of planted samples: a sink at column 0 plus random anchors per sample.

    Slash offsets at or beyond ``n`` are dropped so one offset list serves every length.
    """

    count: int = 64
    n: int = 512
    d: int = 32
    seed: int = 0
    sink_strength: float = 12.0
    num_anchors: int = 3
    anchor_strength: tuple = (8.0, 12.0)
    slash_offsets: list = field(default_factory=lambda: [(0, 10.0), (24, 8.0), (64, 8.0), (160, 8.0)])
    noise_sigma: float = 1.0
    anchor_query: float = 2.0
    value_marker: float = 0.0
    query_sigma: float | None = 2.0
    block: int = 64

    def plant(self, index: int) -> PlantSpec:
        rng = Rng(self.seed).derive(index)
        cols = np.sort(1 + rng.choice(self.n - 1, self.num_anchors))
        lo, hi = self.anchor_strength
        strengths = rng.uniform(self.num_anchors, lo, hi)
        anchors = [(0, self.sink_strength)] + [(int(c), float(s)) for c, s in zip(cols, strengths)]
        return PlantSpec(
            n=self.n,
            d=self.d,
            anchors=anchors,
            slash_offsets=[(o, st) for o, st in self.slash_offsets if o < self.n],
            noise_sigma=self.noise_sigma,
            seed=int(rng.integers(0, 2**63)),
            anchor_query=self.anchor_query,
            value_marker=self.value_marker,
            query_sigma=self.query_sigma,
        )


def make_suite(spec: SuiteSpec) -> list[Sample]:
    return [generate(spec.plant(i), block=spec.block) for i in range(spec.count)]


# -- tensor files ---------------------------------------------------------------------


def write_tensor(path, m) -> None:
    arr = np.ascontiguousarray(m, dtype="<f8")
    header = _HEADER.pack(MAGIC, VERSION, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    Path(path).write_bytes(header + dims + arr.tobytes(order="C"))


def read_tensor(path, ndim: int | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, nd = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a VSTN tensor file (magic {magic!r})")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported VSTN version {version}")
    off = _HEADER.size
    if len(raw) < off + 8 * nd:
        raise ValueError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{nd}Q", raw, off)
    off += 8 * nd
    count = int(np.prod(dims, dtype=np.int64)) if nd else 1
    if len(raw) - off != 8 * count:
        raise ValueError(
            f"{path}: payload is {len(raw) - off} bytes, header promises {8 * count}"
        )
    if ndim is not None and nd != ndim:
        raise ValueError(f"{path}: expected a rank-{ndim} tensor, file has rank {nd}")
    return np.frombuffer(raw, dtype="<f8", offset=off, count=count).astype(np.float64).reshape(dims)


def read_matrix(path) -> np.ndarray:
    return read_tensor(path, ndim=2)


def read_vector(path) -> np.ndarray:
    return read_tensor(path, ndim=1)


SAMPLE_FILES = ("q", "k", "v", "target_v", "target_s")


def write_sample(directory, sample: Sample) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / "q.vstn", sample.q)
    write_tensor(directory / "k.vstn", sample.k)
    write_tensor(directory / "v.vstn", sample.v)
    write_tensor(directory / "target_v.vstn", sample.target.vertical)
    write_tensor(directory / "target_s.vstn", sample.target.slash)


def read_sample(directory) -> Sample:
    directory = Path(directory)
    missing = [f for f in SAMPLE_FILES if not (directory / f"{f}.vstn").exists()]
    if missing:
        raise FileNotFoundError(f"{directory}: missing {', '.join(f + '.vstn' for f in missing)}")
    return Sample(
        read_matrix(directory / "q.vstn"),
        read_matrix(directory / "k.vstn"),
        read_matrix(directory / "v.vstn"),
        VSScores(read_vector(directory / "target_v.vstn"), read_vector(directory / "target_s.vstn")),
    )
