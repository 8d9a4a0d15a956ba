"""Synthetic ablations: recall versus sparsity, distillation loss choice, and indexer inputs.

All comparisons run on planted suites from :mod:`vsprefill.datagen`; a training
suite and a disjoint held-out suite share every planting parameter but the seed.
Methods are compared at equal per-direction budgets (``budgets_for_sparsity``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .attention import full_attention, attention_recall
from .datagen import Sample, SuiteSpec, make_suite
from .indexer import TrainConfig, dataset_loss, forward_features, make_kl, train
from .numerics import Rng
from .sparsity import budgets_for_sparsity, random_pattern, sampling_estimate, select_fixed

SPARSITY_LEVELS = (0.5, 0.9, 0.95, 0.99)
ABLATION_SPARSITY = 0.7
UNIFORM_TRIALS = 200


# -- comparator losses (bench only; KL is the product objective) ------------------------


def mse_grad(pred, target):
    diff = pred - target
    return float(diff @ diff), 2.0 * diff


def msle_grad(pred, target):
    diff = np.log1p(pred) - np.log1p(target)
    return float(diff @ diff), 2.0 * diff / (1.0 + pred)


def cosine_grad(pred, target):
    """1 - cos(pred, target)."""
    npr, nt = np.linalg.norm(pred), np.linalg.norm(target)
    cos = float(pred @ target) / (npr * nt)
    return 1.0 - cos, -(target / (npr * nt) - cos * pred / (npr * npr))


def loss_functions(cfg: TrainConfig) -> dict:
    return {"KL": make_kl(cfg.eps, cfg.kl_direction), "MSE": mse_grad, "MSLE": msle_grad, "Cosine": cosine_grad}


def _cat(*names):
    def features(s: Sample):
        return np.concatenate([getattr(s, nm) for nm in names], axis=1)

    return features


INPUTS = {
    "Q": _cat("q"),
    "K": _cat("k"),
    "V": _cat("v"),
    "QK": _cat("q", "k"),
    "KV": _cat("k", "v"),
}


@dataclass
class BenchConfig:
    suite: SuiteSpec = field(default_factory=SuiteSpec)
    test_count: int = 16
    train: TrainConfig = field(default_factory=TrainConfig)
    sample_fraction: float = 1.0 / 16.0
    seeds: int = 5
    ablation_suite_n: int = 256

    def test_suite(self) -> SuiteSpec:
        return dataclasses.replace(self.suite, count=self.test_count, seed=self.suite.seed + 1_000_003)

    def ablation(self) -> "BenchConfig":
        """Smaller sequences for the multi-seed loss and input ablations."""
        return dataclasses.replace(self, suite=dataclasses.replace(self.suite, n=self.ablation_suite_n))


class _Eval:
    """Held-out samples with their dense attention weights."""

    def __init__(self, cfg: BenchConfig):
        self.train_set = make_suite(cfg.suite)
        self.test_set = make_suite(cfg.test_suite())
        self.weights = [full_attention(s.inputs(), keep_weights=True).a for s in self.test_set]
        self.n = self.test_set[0].q.shape[0]

    def recall(self, score_fn, sparsity: float) -> float:
        k_v, k_s = budgets_for_sparsity(self.n, sparsity)
        vals = [
            attention_recall(a, select_fixed(score_fn(i, s), k_v, k_s).pattern())
            for i, (a, s) in enumerate(zip(self.weights, self.test_set))
        ]
        return float(np.mean(vals))

    def random_recall(self, sparsity: float, seed: int) -> float:
        k_v, k_s = budgets_for_sparsity(self.n, sparsity)
        vals = [
            attention_recall(a, random_pattern(self.n, k_v, k_s, Rng(seed).derive(i)).pattern())
            for i, a in enumerate(self.weights)
        ]
        return float(np.mean(vals))


def uniform_random_recall(n: int, sparsity: float, trials: int = UNIFORM_TRIALS, seed: int = 0) -> float:
    """Mean random-pattern recall on uniform causal attention (A[i, j] = 1 / (i + 1))."""
    a = np.tril(np.ones((n, n))) / np.arange(1, n + 1)[:, None]
    k_v, k_s = budgets_for_sparsity(n, sparsity)
    rng = Rng(seed)
    return float(np.mean([attention_recall(a, random_pattern(n, k_v, k_s, rng.derive(t)).pattern()) for t in range(trials)]))


def retention(n: int, sparsity: float) -> float:
    """Fraction of causal pairs an independent random pattern keeps at these budgets."""
    k_v, k_s = budgets_for_sparsity(n, sparsity)
    return 1.0 - (1.0 - k_v / n) * (1.0 - k_s / n)


@dataclass
class Table:
    header: list
    rows: list

    def to_tsv(self) -> str:
        lines = ["\t".join(self.header)]
        for row in self.rows:
            lines.append("\t".join(f"{c:.6f}" if isinstance(c, float) else str(c) for c in row))
        return "\n".join(lines) + "\n"


@dataclass
class SparsityResult:
    levels: tuple
    recall: dict
    uniform_random: list
    retention: list

    def table(self) -> Table:
        header = ["method"] + [f"{int(round(s * 100))}%" for s in self.levels]
        rows = [[m] + list(v) for m, v in self.recall.items()]
        rows.append(["Random(uniform A)"] + list(self.uniform_random))
        rows.append(["retention"] + list(self.retention))
        return Table(header, rows)


def sparsity_bench(cfg: BenchConfig, levels=SPARSITY_LEVELS) -> SparsityResult:
    ev = _Eval(cfg)
    params = train(ev.train_set, cfg.train).params
    rows = max(1, int(round(ev.n * cfg.sample_fraction)))
    seed = cfg.suite.seed

    def trained(i, s):
        return forward_features(params, INPUTS["KV"](s), cfg.train.slash_mapping).scores()

    def sampled(i, s):
        return sampling_estimate(s.inputs(), rows, Rng(seed).derive(7, i))

    recall = {
        "Random": [ev.random_recall(sp, seed + 11) for sp in levels],
        "Sampling": [ev.recall(sampled, sp) for sp in levels],
        "Trained": [ev.recall(trained, sp) for sp in levels],
    }
    uniform = [uniform_random_recall(ev.n, sp, seed=seed) for sp in levels]
    return SparsityResult(tuple(levels), recall, uniform, [retention(ev.n, sp) for sp in levels])


@dataclass
class AblationResult:
    metric: str
    per_seed: dict

    def median(self) -> dict:
        return {k: float(np.median(v)) for k, v in self.per_seed.items()}

    def table(self) -> Table:
        seeds = len(next(iter(self.per_seed.values())))
        header = ["variant"] + [f"seed{i}" for i in range(seeds)] + [f"median_{self.metric}"]
        med = self.median()
        return Table(header, [[k] + list(v) + [med[k]] for k, v in self.per_seed.items()])


def loss_bench(cfg: BenchConfig, sparsity: float = ABLATION_SPARSITY) -> AblationResult:
    """Held-out recall at ``sparsity`` for indexers distilled with each loss."""
    ev = _Eval(cfg.ablation())
    out = {}
    for name, fn in loss_functions(cfg.train).items():
        vals = []
        for seed in range(cfg.seeds):
            tc = dataclasses.replace(cfg.train, seed=seed)
            params = train(ev.train_set, tc, loss_fn=fn).params
            vals.append(ev.recall(lambda i, s: forward_features(params, INPUTS["KV"](s), tc.slash_mapping).scores(), sparsity))
        out[name] = vals
    return AblationResult("recall", out)


def inputs_bench(cfg: BenchConfig) -> AblationResult:
    """Held-out KL loss for each input combination at equal parameter count.

    Single-feature inputs get twice the hidden width of dual-feature inputs so the
    up-projection has the same number of weights.
    """
    ev = _Eval(cfg.ablation())
    out = {}
    for name, feats in INPUTS.items():
        d_h = cfg.train.d_h * (2 if len(name) == 1 else 1)
        vals = []
        for seed in range(cfg.seeds):
            tc = dataclasses.replace(cfg.train, seed=seed, d_h=d_h)
            params = train(ev.train_set, tc, features=feats).params
            vals.append(dataset_loss(params, ev.test_set, tc, features=feats))
        out[name] = vals
    return AblationResult("loss", out)


BENCHES = {"sparsity": sparsity_bench, "loss": loss_bench, "inputs": inputs_bench}
