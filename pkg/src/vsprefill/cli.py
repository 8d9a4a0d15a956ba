"""Command-line front end.

    vsprefill <gen|aggregate|train|select|attend|recall|theory|bench> [--config FILE] [--key value ...]

Every configuration key (see :mod:`vsprefill.config`) is also a flag.  File
arguments (``--data``, ``--out``, ...) are per-subcommand and not part of the
config.  Output is plain text on stdout; failures print one line on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import kernels
from .attention import SparsePattern, attention_recall, blockwise_attention, full_attention, sparse_attention
from .bench import BENCHES, BenchConfig
from .config import FIELDS, HELP, Config, load_config
from .datagen import SuiteSpec, generate, read_matrix, read_sample, write_sample, write_tensor
from .indexer import TrainConfig, load_checkpoint, predict_scores, save_checkpoint, train
from .numerics import RopeConfig, Rng
from .sparsity import BudgetConfig, SelectedIndices, random_pattern, select_pattern
from .theory import GaussianQKModel, expected_score, monte_carlo_score, slash_spectrum
from .vsaggregate import VSScores, aggregate_streaming

TOPK_ROWS = 10
SIGMA_BAND = 4.0


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(2)


def train_config(cfg: Config) -> TrainConfig:
    return TrainConfig(
        steps=cfg.steps,
        lr_peak=cfg.lr_peak,
        warmup_steps=cfg.warmup,
        accumulation=cfg.accumulation,
        seed=cfg.seed,
        d_h=cfg.d_h,
        eps=cfg.eps,
        kl_direction=cfg.kl_direction,
        slash_mapping=cfg.slash_mapping,
    )


def budget_config(cfg: Config) -> BudgetConfig:
    return BudgetConfig(tau_v=cfg.tau_v, tau_s=cfg.tau_s, min_budget=cfg.min_budget)


def suite_spec(cfg: Config) -> SuiteSpec:
    return SuiteSpec(count=cfg.num_samples, n=cfg.n, d=cfg.d, seed=cfg.seed, block=cfg.block)


def sample_dirs(path) -> list[Path]:
    """``path`` itself if it holds a sample, else its sample subdirectories in name order."""
    path = Path(path)
    if (path / "q.vstn").exists():
        return [path]
    if not path.is_dir():
        raise CliError(f"{path}: no such directory")
    dirs = sorted(p for p in path.iterdir() if (p / "q.vstn").exists())
    if not dirs:
        raise CliError(f"{path}: contains no sample directories")
    return dirs


def _require(args, *names):
    for nm in names:
        if getattr(args, nm) is None:
            raise CliError(f"--{nm} is required")


def _single_sample(path):
    dirs = sample_dirs(path)
    if len(dirs) != 1:
        raise CliError(f"{path}: expected one sample directory, found {len(dirs)}")
    return read_sample(dirs[0])


def _pattern(args, n: int) -> SparsePattern:
    if args.pattern is None:
        return SparsePattern.full(n)
    return SelectedIndices.read(args.pattern).pattern().validate(n)


# -- subcommands ----------------------------------------------------------------------


def cmd_gen(cfg: Config, args, out) -> None:
    _require(args, "out")
    spec = suite_spec(cfg)
    root = Path(args.out)
    print("sample\tanchors", file=out)
    for i in range(spec.count):
        plant = spec.plant(i)
        sample = generate(plant, block=spec.block)
        write_sample(root / f"sample_{i:04d}", sample)
        print(f"sample_{i:04d}\t" + " ".join(str(c) for c, _ in plant.anchors), file=out)


def cmd_aggregate(cfg: Config, args, out) -> None:
    _require(args, "data", "out")
    s = _single_sample(args.data)
    scores = aggregate_streaming(s.inputs(), block=cfg.block)
    write_tensor(args.out, scores.as_matrix())
    k = min(TOPK_ROWS, scores.n)
    top_v = np.argsort(-scores.vertical, kind="stable")[:k]
    top_s = np.argsort(-scores.slash, kind="stable")[:k]
    print("rank\tcolumn\tvertical\toffset\tslash", file=out)
    for r in range(k):
        print(
            f"{r + 1}\t{top_v[r]}\t{scores.vertical[top_v[r]]:.6f}\t{top_s[r]}\t{scores.slash[top_s[r]]:.6f}",
            file=out,
        )


def cmd_train(cfg: Config, args, out) -> None:
    _require(args, "data", "out")
    dataset = [read_sample(p) for p in sample_dirs(args.data)]
    tc = train_config(cfg)
    result = train(dataset, tc)
    save_checkpoint(result.params, args.out)
    every = max(1, tc.steps // 10)
    print("step\tloss", file=out)
    for step in range(0, tc.steps, every):
        print(f"{step}\t{result.losses[step]:.6f}", file=out)
    if (tc.steps - 1) % every:
        print(f"{tc.steps - 1}\t{result.losses[-1]:.6f}", file=out)


def cmd_select(cfg: Config, args, out) -> None:
    _require(args, "out")
    if args.scores is not None:
        scores = VSScores.from_matrix(read_matrix(args.scores))
    elif args.checkpoint is not None and args.data is not None:
        s = _single_sample(args.data)
        params = load_checkpoint(args.checkpoint)
        params.check_dims(s.k.shape[1], cfg.d_h)
        scores = predict_scores(params, s, cfg.slash_mapping)
    else:
        raise CliError("select needs --scores FILE, or --checkpoint FILE with --data DIR")
    sel = select_pattern(scores, budget_config(cfg))
    sel.write(args.out)
    print("direction\tk\tfraction", file=out)
    print(f"vertical\t{sel.k_v}\t{sel.k_v / scores.n:.6f}", file=out)
    print(f"slash\t{sel.k_s}\t{sel.k_s / scores.n:.6f}", file=out)


def cmd_attend(cfg: Config, args, out) -> None:
    _require(args, "data")
    s = _single_sample(args.data)
    inp = s.inputs()
    if args.pattern is None:
        o = blockwise_attention(inp, block=cfg.block).o
        mode = "blockwise"
    else:
        o = sparse_attention(inp, _pattern(args, inp.n), block=cfg.block).o
        mode = "sparse"
    if args.out is not None:
        write_tensor(args.out, o)
    dense = full_attention(inp).o
    print("mode\tmax_abs_diff_vs_dense\trel_fro_diff_vs_dense", file=out)
    rel = np.linalg.norm(o - dense) / max(np.linalg.norm(dense), 1e-300)
    print(f"{mode}\t{np.max(np.abs(o - dense)):.6e}\t{rel:.6e}", file=out)


def cmd_recall(cfg: Config, args, out) -> None:
    _require(args, "data")
    s = _single_sample(args.data)
    inp = s.inputs()
    pat = _pattern(args, inp.n)
    a = full_attention(inp, keep_weights=True).a
    value = attention_recall(a, pat)
    baseline = random_pattern(inp.n, len(pat.i_v), max(1, len(pat.i_s) - 1), Rng(cfg.seed).derive(3))
    print(f"recall\t{value:.6f}", file=out)
    print(f"random_same_budget\t{attention_recall(a, baseline.pattern()):.6f}", file=out)


def theory_model(cfg: Config) -> GaussianQKModel:
    """Random means (seeded) with identity covariances."""
    rng = Rng(cfg.seed).derive(5)
    return GaussianQKModel(rng.derive(0).normal(cfg.D), rng.derive(1).normal(cfg.D), 1.0, 1.0, RopeConfig(cfg.D))


def cmd_theory(cfg: Config, args, out) -> None:
    model = theory_model(cfg)
    deltas = np.arange(cfg.offsets)
    closed = expected_score(slash_spectrum(model), deltas, model.rope)
    mc = monte_carlo_score(model, deltas, cfg.samples, Rng(cfg.seed).derive(6))
    print("offset\tclosed_form\tmc_mean\tmc_stderr\tz\tpass", file=out)
    failures = 0
    for i, delta in enumerate(deltas):
        z = (mc.mean[i] - closed[i]) / mc.stderr[i]
        ok = abs(z) <= SIGMA_BAND
        failures += not ok
        print(
            f"{delta}\t{closed[i]:.6f}\t{mc.mean[i]:.6f}\t{mc.stderr[i]:.6f}\t{z:+.3f}\t{'pass' if ok else 'FAIL'}",
            file=out,
        )
    if failures:
        raise CliError(f"{failures} of {len(deltas)} offsets outside the {SIGMA_BAND:g} sigma band")


def cmd_bench(cfg: Config, args, out) -> None:
    bc = BenchConfig(suite=suite_spec(cfg), train=train_config(cfg), seeds=cfg.seeds)
    out.write(BENCHES[args.ablation](bc).table().to_tsv())


COMMANDS = {
    "gen": (cmd_gen, "write planted samples to --out DIR (one subdirectory per sample)", ("out",)),
    "aggregate": (cmd_aggregate, "ground-truth vertical/slash scores of one sample as a 2 x n tensor", ("data", "out")),
    "train": (cmd_train, "distill an indexer on every sample under --data; write a checkpoint to --out", ("data", "out")),
    "select": (cmd_select, "budgeted index selection from --scores or --checkpoint + --data", ("scores", "checkpoint", "data", "out")),
    "attend": (cmd_attend, "blockwise (no --pattern) or sparse attention of one sample", ("data", "pattern", "out")),
    "recall": (cmd_recall, "attention recall of --pattern (full pattern if omitted) on one sample", ("data", "pattern")),
    "theory": (cmd_theory, "closed-form expected score vs Monte Carlo at offsets 0 .. offsets-1", ()),
    "bench": (cmd_bench, "ablation tables as TSV", ()),
}

FILE_HELP = {
    "data": "sample directory (or a directory of sample directories for train)",
    "out": "output path",
    "scores": "2 x n scores tensor from aggregate",
    "checkpoint": "indexer checkpoint from train",
    "pattern": "selected-index text file from select",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vsprefill", description="Vertical-slash sparse prefill toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    defaults = Config()
    for name, (_, summary, files) in COMMANDS.items():
        p = sub.add_parser(name, help=summary, description=summary)
        if name == "bench":
            p.add_argument("ablation", choices=sorted(BENCHES))
        for f in files:
            p.add_argument(f"--{f}", default=None, help=FILE_HELP[f])
        p.add_argument("--config", default=None, help="key=value file; flags override it")
        p.add_argument("--backend", choices=("cython", "numpy"), default=None, help="kernel backend (default: compiled if available)")
        group = p.add_argument_group("config keys")
        for key, fld in FIELDS.items():
            group.add_argument(
                f"--{key}",
                dest=f"cfg_{key}",
                type=type(getattr(defaults, key)),
                default=None,
                metavar=fld.type.upper() if isinstance(fld.type, str) else None,
                help=f"{HELP[key]} (default: {getattr(defaults, key)})",
            )
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        if args.backend is not None:
            kernels.use_backend(args.backend)
        overrides = {k: getattr(args, f"cfg_{k}") for k in FIELDS}
        cfg = load_config(args.config, overrides)
        COMMANDS[args.command][0](cfg, args, out)
    except (CliError, ValueError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        sys.stderr.write(f"vsprefill {args.command}: error: {msg}\n")
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
