"""Multi-seed training grids: the ablation table and simple baselines."""

import os
import tempfile
from dataclasses import dataclass, replace
from typing import Optional

from .awl import AlfVariant, DawlStrategy
from .metrics import evaluate
from .train import TrainConfig, load_checkpoint, train

# Grid rows: the full method and the three ways of switching its parts off.
# "w/o D-AWL" drops confidence reweighting, "w/o T-AWL" freezes the task
# weights at the fixed base mix.
BASE_FIXED_WEIGHTS = (0.4, 0.3, 0.3)

ABLATION_GRID = (
    ("full", "alf2", "output"),
    ("w/o D-AWL", "alf2", "none"),
    ("w/o T-AWL", "fixed", "output"),
    ("w/o both", "fixed", "none"),
)

COMPARISON_SEEDS = (42, 43, 44, 45, 46)


def comparison_config():
    """Small fast setup for the multi-seed grid on the hard synthetic set.

    Small batches matter here: the task-noise parameters move a fixed
    amount per optimizer step, so more steps per epoch means the task
    weights differentiate early enough for the auxiliary tasks to pay off
    within the epoch budget.
    """
    return TrainConfig(epochs=18, batch_size=8, learning_rate=0.03,
                       embedding_dim=16)


def make_variant(alf, fixed_weights=BASE_FIXED_WEIGHTS):
    if alf == "fixed":
        return AlfVariant.fixed(fixed_weights)
    return AlfVariant(alf)


@dataclass
class SeedRun:
    seed: int
    result: object  # EvalResult on the test set
    checkpoint_path: str


@dataclass
class GridRow:
    name: str
    alf: str
    strategy: str
    runs: list
    mean_all_accuracy: float
    std_all_accuracy: float
    mean_all_macro_f1: float
    mean_isa_accuracy: Optional[float]
    mean_isa_macro_f1: Optional[float]


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def _std(xs):
    if len(xs) < 2:
        return 0.0
    m = sum(xs) / len(xs)
    return (sum((x - m) ** 2 for x in xs) / (len(xs) - 1)) ** 0.5


def run_seeds(train_ds, test_ds, config, seeds, out_root):
    """Train one configuration across seeds, evaluating each on test."""
    runs = []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        run_dir = os.path.join(
            out_root,
            f"{cfg.alf.kind}-{cfg.strategy.value}-seed{seed}",
        )
        report = train(train_ds, None, cfg, run_dir)
        model, _, _ = load_checkpoint(report.checkpoint_path)
        runs.append(SeedRun(
            seed=seed,
            result=evaluate(model, test_ds),
            checkpoint_path=report.checkpoint_path,
        ))
    return runs


def summarize(name, alf, strategy, runs):
    accs = [r.result.all_accuracy for r in runs]
    return GridRow(
        name=name, alf=alf, strategy=strategy, runs=runs,
        mean_all_accuracy=_mean(accs),
        std_all_accuracy=_std(accs),
        mean_all_macro_f1=_mean([r.result.all_macro_f1 for r in runs]),
        mean_isa_accuracy=_mean([r.result.isa_accuracy for r in runs]),
        mean_isa_macro_f1=_mean([r.result.isa_macro_f1 for r in runs]),
    )


def ablation(train_ds, test_ds, config, seeds, out_root=None,
             fixed_weights=BASE_FIXED_WEIGHTS):
    """Run the 4-configuration grid; returns one GridRow per configuration."""
    ctx = None
    if out_root is None:
        ctx = tempfile.TemporaryDirectory(prefix="mtsent-ablation-")
        out_root = ctx.name
    try:
        rows = []
        for name, alf, strategy in ABLATION_GRID:
            cfg = replace(
                config,
                alf=make_variant(alf, fixed_weights),
                strategy=DawlStrategy(strategy),
            )
            runs = run_seeds(train_ds, test_ds, cfg, seeds, out_root)
            rows.append(summarize(name, alf, strategy, runs))
        return rows
    finally:
        if ctx is not None:
            ctx.cleanup()


def format_grid(rows):
    """Plain-text result table, metrics as percentages."""
    def pct(v):
        return "   --" if v is None else f"{100 * v:5.2f}"

    header = (f"{'configuration':<12} {'alf':<6} {'strategy':<8} "
              f"{'All_A':>6} {'±':>5} {'All_F':>6} {'ISA_A':>6} {'ISA_F':>6}")
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r.name:<12} {r.alf:<6} {r.strategy:<8} "
            f"{pct(r.mean_all_accuracy):>6} {100 * r.std_all_accuracy:5.2f} "
            f"{pct(r.mean_all_macro_f1):>6} {pct(r.mean_isa_accuracy):>6} "
            f"{pct(r.mean_isa_macro_f1):>6}"
        )
    return "\n".join(lines)
