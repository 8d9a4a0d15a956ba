"""One test per acceptance criterion; each records a PASS/FAIL line shown in the terminal summary."""

import dataclasses
import time

import numpy as np

from conftest import random_inputs, record
from gradcheck import max_relative_error, random_instance
from vsprefill.attention import AttentionInputs, SparsePattern, full_attention, sparse_attention
from vsprefill.bench import BenchConfig, SPARSITY_LEVELS, inputs_bench, loss_bench, sparsity_bench
from vsprefill.cli import main
from vsprefill.datagen import SuiteSpec, make_suite
from vsprefill.indexer import TrainConfig, dataset_loss, init_params, train
from vsprefill.numerics import RopeConfig, Rng
from vsprefill.sparsity import cumulative_budget, merge_path_merge, merge_row_columns, topk_indices
from vsprefill.theory import GaussianQKModel, expected_score, expected_score_phase, monte_carlo_score, slash_spectrum
from vsprefill.vsaggregate import aggregate_naive, aggregate_streaming


def test_c01_streaming_aggregation_fidelity():
    start = time.perf_counter()
    sizes, blocks = (33, 128, 257, 512), (1, 7, 64, None)
    worst = 0.0
    for i in range(50):
        n = sizes[i % 4]
        block = blocks[(i // 4) % 4] or n
        inp = random_inputs(n, 16, 1000 + i, scale=1.5)
        ref = aggregate_naive(full_attention(inp, keep_weights=True).a)
        got = aggregate_streaming(inp, block)
        worst = max(worst, np.max(np.abs(got.vertical - ref.vertical)), np.max(np.abs(got.slash - ref.slash)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 30
    assert record(1, "streaming aggregation == naive", ok, f"max err {worst:.2e} (<= 1e-10), {elapsed:.1f}s (< 30s)")


def masked_softmax_oracle(inp, mask):
    logits = (inp.q @ inp.k.T) * inp.scale
    logits = np.where(mask, logits, -np.inf)
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    w /= w.sum(axis=1, keepdims=True)
    return w @ inp.v


def test_c02_sparse_attention_fidelity():
    rng = np.random.default_rng(2)
    worst_full = worst_mask = 0.0
    for i in range(100):
        n = int(rng.integers(1, 65))
        inp = random_inputs(n, 8, 2000 + i, scale=1.5)
        full = sparse_attention(inp, SparsePattern.full(n), block=int(rng.integers(1, 17))).o
        worst_full = max(worst_full, np.max(np.abs(full - full_attention(inp).o)))
        i_v = np.sort(rng.choice(n, int(rng.integers(0, n + 1)), replace=False))
        i_s = np.union1d(rng.choice(n, int(rng.integers(0, n + 1)), replace=False), [0])
        pat = SparsePattern(i_v, i_s)
        got = sparse_attention(inp, pat, block=int(rng.integers(1, 17))).o
        worst_mask = max(worst_mask, np.max(np.abs(got - masked_softmax_oracle(inp, pat.mask(n)))))
    ok = worst_full <= 1e-10 and worst_mask <= 1e-12
    assert record(2, "sparse attention == dense / masked oracle", ok,
                  f"full-pattern err {worst_full:.2e} (<= 1e-10), masked err {worst_mask:.2e} (<= 1e-12)")


def test_c03_gradient_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = max(max_relative_error(*random_instance(rng)) for _ in range(100))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 60
    assert record(3, "analytic gradients == central differences", ok,
                  f"max rel err {worst:.2e} (<= 1e-5) over 100 instances, {elapsed:.1f}s (< 60s)")


def test_c04_theory_validation():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    model = GaussianQKModel(rng.standard_normal(8), rng.standard_normal(8), 1.0, 1.0, RopeConfig(8))
    deltas = np.arange(64)
    spec = slash_spectrum(model)
    closed = expected_score(spec, deltas, model.rope)
    mc = monte_carlo_score(model, deltas, 200_000, Rng(4))
    z = np.abs(mc.mean - closed) / mc.stderr
    wide = np.arange(-10_000, 10_001)
    form_gap = np.max(np.abs(expected_score(spec, wide, model.rope) - expected_score_phase(spec, wide, model.rope)))
    elapsed = time.perf_counter() - start
    ok = (z <= 4).all() and form_gap <= 1e-12 and elapsed < 60
    assert record(4, "closed form vs Monte Carlo", ok,
                  f"max |z| {z.max():.2f} (<= 4) over 64 offsets, direct vs phase {form_gap:.1e} (<= 1e-12), {elapsed:.1f}s")


def test_c05_sparsity_ordering():
    res = sparsity_bench(BenchConfig())
    r = res.recall
    order = all(t > s > rd for t, s, rd in zip(r["Trained"], r["Sampling"], r["Random"]))
    control = max(abs(u - k) for u, k in zip(res.uniform_random, res.retention))
    cells = ", ".join(
        f"{int(sp * 100)}%: {t:.3f}>{s:.3f}>{rd:.3f}" for sp, t, s, rd in zip(SPARSITY_LEVELS, r["Trained"], r["Sampling"], r["Random"])
    )
    ok = order and control <= 0.05
    assert record(5, "Trained > Sampling > Random recall", ok, f"{cells}; uniform control gap {control:.3f} (<= 0.05)")


def test_c06_loss_ablation():
    med = loss_bench(BenchConfig()).median()
    best = max(med, key=med.get)
    ok = best == "KL"
    detail = ", ".join(f"{k} {v:.4f}" for k, v in med.items())
    assert record(6, "KL gives highest median recall at 70%", ok, f"{detail} (best {best})")


def test_c07_input_ablation():
    med = inputs_bench(BenchConfig()).median()
    best = min(med, key=med.get)
    ok = best == "KV"
    detail = ", ".join(f"{k} {v:.4f}" for k, v in med.items())
    assert record(7, "KV gives lowest median distillation loss", ok, f"{detail} (best {best})")


def test_c08_budget_and_merge_properties():
    rng = np.random.default_rng(8)
    mono = mass = True
    for _ in range(300):
        x = rng.dirichlet(np.full(int(rng.integers(1, 80)), 0.3))
        taus = np.sort(rng.uniform(0.01, 1.0, 5))
        ks = [cumulative_budget(x, t) for t in taus]
        mono &= ks == sorted(ks)
        mass &= all(x[topk_indices(x, k)].sum() >= t - 1e-12 for k, t in zip(ks, taus))
    ties = True
    for _ in range(200):
        x = rng.integers(0, 4, int(rng.integers(2, 30))).astype(float)
        k = int(rng.integers(1, len(x) + 1))
        oracle = sorted(sorted(range(len(x)), key=lambda i: (-x[i], i))[:k])
        ties &= list(topk_indices(x, k)) == oracle
    merges = True
    for _ in range(1000):
        n = int(rng.integers(1, 80))
        i_v = np.sort(rng.choice(n, int(rng.integers(0, n + 1)), replace=False))
        i_s = np.sort(rng.choice(n, int(rng.integers(0, n + 1)), replace=False))
        row = int(rng.integers(0, n))
        oracle = sorted({j for j in i_v.tolist() if j <= row} | {row - o for o in i_s.tolist() if o <= row})
        merges &= list(merge_row_columns(i_v, i_s, row, n)) == oracle
    paths = True
    for parts in (2, 3, 7):
        for _ in range(200):
            a = sorted(rng.integers(0, 50, int(rng.integers(0, 40))).tolist())
            b = sorted(rng.integers(0, 50, int(rng.integers(0, 40))).tolist())
            paths &= sum(merge_path_merge(a, b, parts), []) == sorted(a + b)
    ok = mono and mass and ties and merges and paths
    assert record(8, "budget/selection/merge properties", ok,
                  f"monotone {mono}, mass>=tau {mass}, tie rule {ties}, row merge 1000/1000 {merges}, merge path p=2,3,7 {paths}")


def _pipeline(root, cfg):
    import io

    logs = []
    data, one = root / "data", root / "data" / "sample_0002"
    steps = [
        ["gen", "--out", data],
        ["aggregate", "--data", one, "--out", root / "scores.vstn"],
        ["train", "--data", data, "--out", root / "indexer.vsck"],
        ["select", "--checkpoint", root / "indexer.vsck", "--data", one, "--out", root / "pattern.txt"],
        ["recall", "--data", one, "--pattern", root / "pattern.txt"],
    ]
    for argv in steps:
        out = io.StringIO()
        assert main([str(a) for a in argv[:1] + ["--config", cfg] + argv[1:]], out=out) == 0
        logs.append(out.getvalue())
    (root / "stdout.txt").write_text("".join(logs))
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c09_end_to_end_determinism(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n=256\nd=32\nnum_samples=8\nsteps=300\nwarmup=30\nseed=17\ntau_v=0.9\ntau_s=0.9\n")
    a = _pipeline(tmp_path / "a", cfg) if (tmp_path / "a").mkdir() is None else None
    b = _pipeline(tmp_path / "b", cfg) if (tmp_path / "b").mkdir() is None else None
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    assert record(9, "gen->aggregate->train->select->recall byte-identical", same,
                  f"{len(a)} files compared, identical={same}")


def test_c10_training_progress():
    suite = make_suite(SuiteSpec())
    cfg = TrainConfig()
    init = init_params(suite[0].k.shape[1] * 2, cfg.d_h, Rng(cfg.seed).derive(0))
    start = dataset_loss(init, suite, cfg)
    final = dataset_loss(train(suite, cfg).params, suite, cfg)
    ratio = final / start
    assert record(10, "2000-step loss < 25% of step-0 loss", ratio < 0.25,
                  f"step-0 {start:.4f}, final {final:.4f}, ratio {ratio:.3f} (< 0.25)")
