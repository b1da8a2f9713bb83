"""Command-line surface: convert, augment, train, eval, report, ablation.

Exit codes: 0 success, 1 operation failure (message on stderr), 2 usage.
"""

import argparse
import csv
import os
import sys
import time

from .augment import AugmentError, ConfidenceMethod, augment_dataset
from .awl import AlfVariant, DawlStrategy
from .backends import BackendError, HttpBackend, MockBackend
from .data import (DataError, convert_semeval_xml, load_jsonl, load_lexicon,
                   save_jsonl)
from .experiment import (ABLATION_GRID, BASE_FIXED_WEIGHTS, COMPARISON_SEEDS,
                         ablation, comparison_config, format_grid,
                         make_variant)
from .metrics import evaluate
from .synth import SynthSpec, generate
from .train import (TrainConfig, TrainDivergence, TRAJECTORY_COLUMNS,
                    load_checkpoint, train)

METHOD_NAMES = {
    "prompt": ConfidenceMethod.PROMPT,
    "markov": ConfidenceMethod.MARKOV_CHAIN,
    "choice": ConfidenceMethod.CHOICE_TOKEN,
}

# TrainConfig fields settable from a key=value config file or flags.
_CONFIG_KEYS = {
    "alf": str,
    "fixed_weights": str,
    "strategy": str,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "seed": int,
    "embedding_dim": int,
    "max_target_len": int,
    "clip_grad_norm": float,
}


class CliError(Exception):
    pass


def read_config_file(path):
    """Flat key=value lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise CliError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](val)
            except ValueError:
                raise CliError(f"{path}:{lineno}: bad value for {key}: {val!r}")
    return values


def _parse_weights(text):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 3:
        raise CliError(f"--fixed-weights needs 3 comma-separated values, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise CliError(f"--fixed-weights: non-numeric value in {text!r}")


def build_train_config(args, defaults=None):
    """Defaults < config file < explicit flags."""
    merged = dict(defaults or {})
    if args.config:
        merged.update(read_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag

    alf_kind = merged.pop("alf", "alf2")
    weights = merged.pop("fixed_weights", None)
    if isinstance(weights, str):
        weights = _parse_weights(weights)
    if alf_kind == "fixed":
        variant = AlfVariant.fixed(weights if weights is not None
                                   else BASE_FIXED_WEIGHTS)
    else:
        variant = AlfVariant(alf_kind)
    strategy = DawlStrategy(merged.pop("strategy", "output"))
    return TrainConfig(alf=variant, strategy=strategy, **merged)


def default_run_dir(root, seed):
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return os.path.join(root, f"{stamp}-seed{seed}")


def _make_backend(args):
    if args.mock_script:
        return MockBackend(args.mock_script)
    if args.backend_url:
        return HttpBackend(args.backend_url, model=args.model)
    raise CliError("augment needs --backend-url or --mock-script")


def cmd_convert(args):
    lexicon = load_lexicon(args.lexicon) if args.lexicon else None
    ds = convert_semeval_xml(args.input, lexicon=lexicon, name=args.name)
    save_jsonl(ds, args.output)
    dropped = getattr(ds, "conflict_dropped", 0)
    print(f"wrote {len(ds)} instances to {args.output}"
          f" ({dropped} conflict-polarity dropped)")
    return 0


def cmd_augment(args):
    ds = load_jsonl(args.input)
    backend = _make_backend(args)
    result = augment_dataset(ds, backend, METHOD_NAMES[args.method],
                             max_epochs=args.max_epochs,
                             parallelism=args.parallelism)
    save_jsonl(result.dataset, args.output)
    for err in result.errors:
        print(f"warning: {err}", file=sys.stderr)
    print(f"augmented {len(result.dataset)} instances to {args.output}"
          f" ({len(result.errors)} failed)")
    return 0


def cmd_train(args):
    config = build_train_config(args)
    train_ds = load_jsonl(args.data)
    dev_ds = load_jsonl(args.dev) if args.dev else None
    run_dir = args.run_dir or default_run_dir(args.out_root, config.seed)
    report = train(train_ds, dev_ds, config, run_dir)
    print(f"checkpoint: {report.checkpoint_path}")
    print(f"trajectory: {report.trajectory_path}")
    print(f"parameters: {report.param_count}  clip events: {report.clip_events}")
    return 0


def cmd_eval(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    ds = load_jsonl(args.data)
    res = evaluate(model, ds)

    def pct(v):
        return "   --" if v is None else f"{100 * v:5.2f}"

    print(f"{'All_A':>6} {'All_F':>6} {'ISA_A':>6} {'ISA_F':>6} "
          f"{'n':>4} {'n_isa':>5}")
    print(f"{pct(res.all_accuracy):>6} {pct(res.all_macro_f1):>6} "
          f"{pct(res.isa_accuracy):>6} {pct(res.isa_macro_f1):>6} "
          f"{res.n_all:>4} {res.n_implicit:>5}")
    print("confusion (rows gold, cols pred; positive/negative/neutral):")
    for row in res.confusion:
        print("  " + " ".join(f"{n:4d}" for n in row))
    return 0


def _read_trajectory(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != TRAJECTORY_COLUMNS:
            raise CliError(f"{path}: not a trajectory CSV")
        return list(reader)


def cmd_report(args):
    rows = _read_trajectory(args.trajectory)
    if not rows:
        raise CliError(f"{args.trajectory}: empty trajectory")
    stride = args.every or max(1, len(rows) // 20)
    picked = rows[::stride]
    if rows[-1] is not picked[-1]:
        picked.append(rows[-1])
    print(f"{'step':>6} {'w_pol':>7} {'w_asp':>7} {'w_opi':>7} "
          f"{'L_p':>8} {'L_a':>8} {'L_o':>8}")
    for r in picked:
        print(f"{r['step']:>6} {float(r['w_polarity']):7.4f} "
              f"{float(r['w_aspect']):7.4f} {float(r['w_opinion']):7.4f} "
              f"{float(r['L_p']):8.4f} {float(r['L_a']):8.4f} "
              f"{float(r['L_o']):8.4f}")
    if args.plot:
        _plot_trajectory(rows, args.plot)
        print(f"plot: {args.plot}")
    return 0


def _plot_trajectory(rows, out_path):
    try:
        import matplotlib
    except ImportError:
        raise CliError("plotting needs matplotlib (pip install mtsent[plot])")
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [int(r["step"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for col, label in (("w_polarity", "polarity"), ("w_aspect", "aspect"),
                       ("w_opinion", "opinion")):
        ax.plot(steps, [float(r[col]) for r in rows], label=label)
    ax.set_xlabel("step")
    ax.set_ylabel("task weight")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def cmd_ablation(args):
    train_ds = load_jsonl(args.train_data)
    test_ds = load_jsonl(args.test_data)
    # Grid defaults come from the comparison setup, not the trainer's
    # spec defaults: the grid is only meaningful where the weights move.
    cc = comparison_config()
    config = build_train_config(args, defaults={
        "epochs": cc.epochs,
        "batch_size": cc.batch_size,
        "learning_rate": cc.learning_rate,
        "embedding_dim": cc.embedding_dim,
    })
    seeds = tuple(int(s) for s in args.seeds.split(","))
    rows = ablation(train_ds, test_ds, config, seeds, out_root=args.out_root)
    print(format_grid(rows))
    return 0


def cmd_synth(args):
    spec = SynthSpec.hard() if args.preset == "hard" else SynthSpec()
    if args.seed is not None:
        import dataclasses
        spec = dataclasses.replace(spec, seed=args.seed)
    train_ds, test_ds = generate(spec)
    save_jsonl(train_ds, args.train_output)
    save_jsonl(test_ds, args.test_output)
    print(f"wrote {len(train_ds)} train / {len(test_ds)} test instances")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mtsent",
        description="Multi-task implicit sentiment toolkit (toy scale).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="SemEval XML to JSONL")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--lexicon", help="opinion word list, one per line")
    p.add_argument("--name", help="dataset name (default: file stem)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("augment", help="generate aspect/opinion fields")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--backend-url", help="chat-completion endpoint")
    p.add_argument("--model", default="default")
    p.add_argument("--mock-script", help="scripted JSONL backend")
    p.add_argument("--method", choices=sorted(METHOD_NAMES), default="markov")
    p.add_argument("--max-epochs", type=int, default=3)
    p.add_argument("--parallelism", type=int, default=1)
    p.set_defaults(func=cmd_augment)

    def add_config_flags(p):
        p.add_argument("--config", help="flat key=value file")
        p.add_argument("--alf", choices=("alf1", "alf2", "fixed"))
        p.add_argument("--fixed-weights", dest="fixed_weights",
                       metavar="P,A,O")
        p.add_argument("--strategy",
                       choices=tuple(s.value for s in DawlStrategy))
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", dest="learning_rate", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--dim", dest="embedding_dim", type=int)
        p.add_argument("--max-target-len", dest="max_target_len", type=int)
        p.add_argument("--clip-grad-norm", dest="clip_grad_norm", type=float)

    p = sub.add_parser("train", help="train the toy model")
    p.add_argument("data", help="augmented training JSONL")
    p.add_argument("--dev", help="held-out JSONL evaluated each epoch")
    p.add_argument("--run-dir", help="output directory (default timestamped)")
    p.add_argument("--out-root", default="runs")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("data")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="trajectory CSV to weight table")
    p.add_argument("trajectory")
    p.add_argument("--every", type=int, help="print every Nth step")
    p.add_argument("--plot", help="write a weight-evolution PNG")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ablation", help="multi-seed configuration grid")
    p.add_argument("train_data")
    p.add_argument("test_data")
    p.add_argument("--seeds",
                   default=",".join(str(s) for s in COMPARISON_SEEDS))
    p.add_argument("--out-root", help="keep run dirs here (default: temp)")
    add_config_flags(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("synth", help="write the seeded synthetic corpus")
    p.add_argument("train_output")
    p.add_argument("test_output")
    p.add_argument("--preset", choices=("default", "hard"), default="default")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DataError, AugmentError, BackendError,
            TrainDivergence, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
