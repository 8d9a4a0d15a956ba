"""The vertical-slash indexer: a shared SiLU up-projection feeding two softmax heads.

    X = concat(K, V)                      n x 2d
    Z = silu(X W_U + b_U)                 n x d_h
    pred_v = softmax(Z W_V + b_V)         one score per column
    pred_s = softmax(Z W_S + b_S)         one score per token, read as a slash offset

Token ``t``'s slash logit scores offset ``n - 1 - t`` by default (``slash_mapping =
"reverse"``); ``"identity"`` maps it to offset ``t``.  K and V are treated as
constants: nothing here differentiates through or mutates them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .numerics import Rng, silu_grad, sigmoid, softmax_rows
from .vsaggregate import VSScores

PARAM_NAMES = ("w_u", "b_u", "w_v", "b_v", "w_s", "b_s")
SLASH_MAPPINGS = ("reverse", "identity")
KL_DIRECTIONS = ("forward", "reverse")


@dataclass
class IndexerParams:
    w_u: np.ndarray
    b_u: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_s: np.ndarray
    b_s: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        in_dim, d_h = self.w_u.shape
        expected = {"b_u": (d_h,), "w_v": (d_h, 1), "b_v": (1,), "w_s": (d_h, 1), "b_s": (1,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def in_dim(self) -> int:
        return self.w_u.shape[0]

    @property
    def d_h(self) -> int:
        return self.w_u.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_NAMES]

    @classmethod
    def from_arrays(cls, arrays) -> "IndexerParams":
        return cls(*[np.array(a, dtype=np.float64) for a in arrays])

    def copy(self) -> "IndexerParams":
        return IndexerParams.from_arrays(self.arrays())

    def zeros_like(self) -> "IndexerParams":
        return IndexerParams.from_arrays([np.zeros_like(a) for a in self.arrays()])

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def check_dims(self, d: int, d_h: int) -> None:
        if self.in_dim != 2 * d or self.d_h != d_h:
            raise ValueError(
                f"indexer expects in_dim={2 * d}, d_h={d_h}; parameters have "
                f"in_dim={self.in_dim}, d_h={self.d_h}"
            )


def init_params(in_dim: int, d_h: int, rng: Rng) -> IndexerParams:
    """W_U ~ U(-1/sqrt(in_dim), 1/sqrt(in_dim)); heads and biases zero (uniform start)."""
    bound = 1.0 / math.sqrt(in_dim)
    w_u = rng.uniform((in_dim, d_h), -bound, bound)
    return IndexerParams(
        w_u, np.zeros(d_h), np.zeros((d_h, 1)), np.zeros(1), np.zeros((d_h, 1)), np.zeros(1)
    )


def slash_token_for_offset(n: int, mapping: str = "reverse") -> np.ndarray:
    """Token index whose slash logit scores each offset ``o`` (a permutation of range(n))."""
    if mapping == "reverse":
        return np.arange(n - 1, -1, -1)
    if mapping == "identity":
        return np.arange(n)
    raise ValueError(f"unknown slash mapping {mapping!r}; choose from {SLASH_MAPPINGS}")


@dataclass
class IndexerActivations:
    x: np.ndarray
    h: np.ndarray
    z: np.ndarray
    logits_v: np.ndarray
    logits_s: np.ndarray
    pred_v: np.ndarray
    pred_s_tokens: np.ndarray
    slash_tokens: np.ndarray = field(repr=False)

    @property
    def pred_s(self) -> np.ndarray:
        """Slash scores indexed by diagonal offset."""
        return self.pred_s_tokens[self.slash_tokens]

    def scores(self) -> VSScores:
        return VSScores(self.pred_v.copy(), self.pred_s.copy())


def forward_features(p: IndexerParams, x: np.ndarray, slash_mapping: str = "reverse") -> IndexerActivations:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.in_dim:
        raise ValueError(f"indexer input must be n x {p.in_dim}, got {x.shape}")
    h = x @ p.w_u + p.b_u
    z = h * sigmoid(h)
    logits_v = z @ p.w_v[:, 0] + p.b_v[0]
    logits_s = z @ p.w_s[:, 0] + p.b_s[0]
    return IndexerActivations(
        x,
        h,
        z,
        logits_v,
        logits_s,
        softmax_rows(logits_v),
        softmax_rows(logits_s),
        slash_token_for_offset(x.shape[0], slash_mapping),
    )


def indexer_forward(
    p: IndexerParams, k: np.ndarray, v: np.ndarray, slash_mapping: str = "reverse"
) -> IndexerActivations:
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if k.shape != v.shape or k.ndim != 2:
        raise ValueError(f"k and v must share shape n x d; got {k.shape} and {v.shape}")
    return forward_features(p, np.concatenate([k, v], axis=1), slash_mapping)


# -- losses ---------------------------------------------------------------------------


def _check_prob(vec, name: str, tol: float = 1e-6) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if (vec < 0).any():
        raise ValueError(f"{name} has negative entries")
    if abs(vec.sum() - 1.0) > tol:
        raise ValueError(f"{name} must sum to 1, got {vec.sum():.9g}")
    return vec


def kl_loss(pred, target, eps: float = 1e-8, direction: str = "forward") -> float:
    """D_KL(pred || target + eps) by default; ``direction="reverse"`` gives D_KL(target || pred + eps).

    Terms with a zero leading probability contribute 0.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    pred = _check_prob(pred, "pred")
    target = _check_prob(target, "target")
    return kl_grad(pred, target, eps, direction)[0]


def kl_grad(pred, target, eps: float = 1e-8, direction: str = "forward") -> tuple[float, np.ndarray]:
    """KL value and its gradient with respect to ``pred``."""
    if direction == "forward":
        pos = pred > 0
        log_ratio = np.zeros_like(pred)
        log_ratio[pos] = np.log(pred[pos]) - np.log(target[pos] + eps)
        return float(np.sum(pred[pos] * log_ratio[pos])), np.where(pos, log_ratio + 1.0, 0.0)
    if direction == "reverse":
        pos = target > 0
        value = float(np.sum(target[pos] * (np.log(target[pos]) - np.log(pred[pos] + eps))))
        return value, -target / (pred + eps)
    raise ValueError(f"unknown KL direction {direction!r}")


LossFn = Callable[[np.ndarray, np.ndarray], "tuple[float, np.ndarray]"]


def make_kl(eps: float = 1e-8, direction: str = "forward") -> LossFn:
    if eps <= 0:
        raise ValueError("eps must be positive")
    if direction not in KL_DIRECTIONS:
        raise ValueError(f"unknown KL direction {direction!r}")
    return lambda pred, target: kl_grad(pred, target, eps, direction)


def _softmax_backward(prob: np.ndarray, dprob: np.ndarray) -> np.ndarray:
    return prob * (dprob - prob @ dprob)


def _slash_target_tokens(acts: "IndexerActivations", target_s) -> np.ndarray:
    out = np.empty(acts.x.shape[0])
    out[acts.slash_tokens] = target_s
    return out


def _targets(acts, target_v, target_s):
    n = acts.x.shape[0]
    target_v = np.asarray(target_v, dtype=np.float64)
    target_s = np.asarray(target_s, dtype=np.float64)
    if target_v.shape != (n,) or target_s.shape != (n,):
        raise ValueError(f"targets must be length-{n} vectors")
    return target_v, _slash_target_tokens(acts, target_s)


def loss_and_grad(
    p: IndexerParams,
    acts: IndexerActivations,
    target_v,
    target_s,
    loss_fn: LossFn | None = None,
) -> tuple[float, IndexerParams, dict]:
    """Summed vertical + slash loss (KL by default) and its exact gradient for every parameter."""
    loss_fn = loss_fn or make_kl()
    target_v, target_s_tok = _targets(acts, target_v, target_s)
    lv, dpv = loss_fn(acts.pred_v, target_v)
    ls, dps = loss_fn(acts.pred_s_tokens, target_s_tok)
    dlv = _softmax_backward(acts.pred_v, dpv)
    dls = _softmax_backward(acts.pred_s_tokens, dps)

    dz = np.outer(dlv, p.w_v[:, 0]) + np.outer(dls, p.w_s[:, 0])
    dh = dz * silu_grad(acts.h)
    grads = IndexerParams(
        acts.x.T @ dh,
        dh.sum(axis=0),
        (acts.z.T @ dlv)[:, None],
        np.array([dlv.sum()]),
        (acts.z.T @ dls)[:, None],
        np.array([dls.sum()]),
    )
    return lv + ls, grads, {"vertical": lv, "slash": ls}


def indexer_backward(
    p: IndexerParams, acts: IndexerActivations, target_v, target_s, loss_fn: LossFn | None = None
) -> IndexerParams:
    return loss_and_grad(p, acts, target_v, target_s, loss_fn)[1]


def indexer_loss(
    p: IndexerParams, acts: IndexerActivations, target_v, target_s, loss_fn: LossFn | None = None
) -> float:
    loss_fn = loss_fn or make_kl()
    target_v, target_s_tok = _targets(acts, target_v, target_s)
    return loss_fn(acts.pred_v, target_v)[0] + loss_fn(acts.pred_s_tokens, target_s_tok)[0]


# -- optimizer ------------------------------------------------------------------------


@dataclass
class TrainConfig:
    steps: int = 2000
    lr_peak: float = 1e-3
    warmup_steps: int = 100
    accumulation: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    lr_min: float = 0.0
    d_h: int = 64
    eps: float = 1e-8
    kl_direction: str = "forward"
    slash_mapping: str = "reverse"

    def __post_init__(self):
        if not self.lr_peak > 0:
            raise ValueError("lr_peak must be positive")
        if self.steps < 1 or self.accumulation < 1:
            raise ValueError("steps and accumulation must be >= 1")
        if not 0 <= self.warmup_steps <= self.steps:
            raise ValueError("warmup_steps must lie in [0, steps]")
        if self.kl_direction not in KL_DIRECTIONS:
            raise ValueError(f"unknown KL direction {self.kl_direction!r}")
        slash_token_for_offset(1, self.slash_mapping)


def learning_rate(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``lr_peak`` over ``warmup_steps``, then cosine decay to ``lr_min``."""
    if step < cfg.warmup_steps:
        return cfg.lr_peak * (step + 1) / cfg.warmup_steps
    span = max(1, cfg.steps - cfg.warmup_steps)
    progress = min(1.0, (step - cfg.warmup_steps) / span)
    return cfg.lr_min + 0.5 * (cfg.lr_peak - cfg.lr_min) * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamState:
    m: list
    v: list

    @classmethod
    def zeros(cls, p: IndexerParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in p.arrays()], [np.zeros_like(a) for a in p.arrays()])


def optimizer_step(
    p: IndexerParams, grads: IndexerParams, state: AdamState, step_index: int, cfg: TrainConfig
) -> tuple[IndexerParams, AdamState]:
    """One AdamW update (bias-corrected moments, decoupled weight decay)."""
    lr = learning_rate(step_index, cfg)
    t = step_index + 1
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    new_p, new_m, new_v = [], [], []
    for w, g, m, v in zip(p.arrays(), grads.arrays(), state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        new_p.append(w - lr * cfg.weight_decay * w - lr * update)
        new_m.append(m)
        new_v.append(v)
    return IndexerParams.from_arrays(new_p), AdamState(new_m, new_v)


# -- training -------------------------------------------------------------------------


def kv_features(sample) -> np.ndarray:
    return np.concatenate([sample.k, sample.v], axis=1)


@dataclass
class TrainResult:
    params: IndexerParams
    losses: np.ndarray


def train(
    dataset: Sequence,
    cfg: TrainConfig,
    params: IndexerParams | None = None,
    features: Callable = kv_features,
    loss_fn: LossFn | None = None,
) -> TrainResult:
    """Distill the indexer on ``dataset`` (items with ``k``, ``v`` and ``target`` attributes).

    Each optimizer step averages gradients over ``cfg.accumulation`` consecutive
    samples from a per-epoch shuffled order; ``losses[s]`` is the mean micro-batch
    loss seen at step ``s`` (before its update).
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    xs = [np.asarray(features(s), dtype=np.float64) for s in dataset]
    in_dim = xs[0].shape[1]
    if any(x.shape[1] != in_dim for x in xs):
        raise ValueError("all samples must share the feature width")
    targets = [s.target.normalize() for s in dataset]
    loss_fn = loss_fn or make_kl(cfg.eps, cfg.kl_direction)
    rng = Rng(cfg.seed)
    if params is None:
        params = init_params(in_dim, cfg.d_h, rng.derive(0))
    elif params.in_dim != in_dim:
        raise ValueError(f"parameters expect in_dim={params.in_dim}, features have {in_dim}")
    state = AdamState.zeros(params)
    order: np.ndarray = np.zeros(0, dtype=np.int64)
    epoch = 0
    cursor = 0
    losses = np.empty(cfg.steps)
    for step in range(cfg.steps):
        acc = params.zeros_like().arrays()
        total = 0.0
        for _ in range(cfg.accumulation):
            if cursor >= order.shape[0]:
                order = rng.derive(1, epoch).choice(len(dataset), len(dataset))
                epoch += 1
                cursor = 0
            idx = int(order[cursor])
            cursor += 1
            acts = forward_features(params, xs[idx], cfg.slash_mapping)
            value, grads, _ = loss_and_grad(params, acts, targets[idx].vertical, targets[idx].slash, loss_fn)
            total += value
            for a, g in zip(acc, grads.arrays()):
                a += g
        scale = 1.0 / cfg.accumulation
        grads = IndexerParams.from_arrays([a * scale for a in acc])
        losses[step] = total * scale
        params, state = optimizer_step(params, grads, state, step, cfg)
    return TrainResult(params, losses)


def dataset_loss(
    params: IndexerParams,
    dataset: Sequence,
    cfg: TrainConfig | None = None,
    features: Callable = kv_features,
) -> float:
    """Mean KL distillation loss of ``params`` over ``dataset``."""
    cfg = cfg or TrainConfig()
    loss_fn = make_kl(cfg.eps, cfg.kl_direction)
    vals = []
    for s in dataset:
        acts = forward_features(params, features(s), cfg.slash_mapping)
        t = s.target.normalize()
        vals.append(indexer_loss(params, acts, t.vertical, t.slash, loss_fn))
    return float(np.mean(vals))


def predict_scores(params: IndexerParams, sample, slash_mapping: str = "reverse", features: Callable = kv_features) -> VSScores:
    return forward_features(params, features(sample), slash_mapping).scores()


# -- checkpoints ----------------------------------------------------------------------

CKPT_MAGIC = b"VSCK"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIII")


def save_checkpoint(p: IndexerParams, path) -> None:
    if p.in_dim % 2:
        raise ValueError("checkpoints store concat(K, V) indexers; in_dim must be even")
    blob = _CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, p.in_dim // 2, p.d_h)
    blob += b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in p.arrays())
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> IndexerParams:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a VSCK checkpoint")
    if len(raw) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: truncated checkpoint header")
    _, version, d, d_h = _CKPT_HEADER.unpack_from(raw)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported VSCK version {version}")
    shapes = [(2 * d, d_h), (d_h,), (d_h, 1), (1,), (d_h, 1), (1,)]
    need = sum(int(np.prod(s)) for s in shapes) * 8
    body = raw[_CKPT_HEADER.size :]
    if len(body) != need:
        raise ValueError(f"{path}: checkpoint payload is {len(body)} bytes, expected {need} (truncated?)")
    arrays, off = [], 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64))
        off += 8 * count
    return IndexerParams.from_arrays(arrays)
