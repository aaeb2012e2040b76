"""Command-line entry point.

Subcommands: synth, train, finetune, eval, compare, predict, gradcheck.
Exit codes: 0 success, 1 usage/config error, 2 numeric failure.
"""

import argparse
import os
import sys

from .config import ExperimentConfig
from .data import save_sequences
from .errors import (
    CheckpointError,
    ConfigError,
    NumericError,
    ParseError,
    TrainingDiverged,
)
from .synth import synth_generate


def _load_config(args):
    if args.config is None:
        raise ConfigError("--config is required for this subcommand")
    config = ExperimentConfig.load(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    return config


def _out_dir(config):
    os.makedirs(config.output_dir, exist_ok=True)
    return config.output_dir


def cmd_synth(args):
    config = _load_config(args)
    out = _out_dir(config)
    seqs = synth_generate(config.synth_spec(), tree=config.skeleton())
    path = os.path.join(out, "corpus.csv")
    save_sequences(path, seqs)
    print(f"wrote {len(seqs)} trials to {path}")
    return 0


def cmd_train(args):
    from .pipeline import run_train

    config = _load_config(args)
    out = _out_dir(config)
    result, ckpt = run_train(config, out)
    last = result.log_rows[-1]
    print(
        f"phase 1 done: {len(result.log_rows)} epochs, "
        f"best val {result.best_val:.6f} at epoch {result.best_epoch}, "
        f"final train {last['recon_train']:.6f}"
    )
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_finetune(args):
    from .pipeline import run_finetune

    config = _load_config(args)
    out = _out_dir(config)
    ckpt_in = args.checkpoint or os.path.join(out, "checkpoint_phase1.json")
    result, ckpt, subject = run_finetune(config, out, ckpt_in, subject=args.subject)
    print(
        f"phase 2 done for subject {subject}: {len(result.log_rows)} epochs, "
        f"best val {result.best_val:.6f} at epoch {result.best_epoch}"
    )
    print(f"checkpoint: {ckpt}")
    return 0


def cmd_eval(args):
    from .pipeline import run_eval

    config = _load_config(args)
    out = _out_dir(config)
    method = args.method or ("zero_velocity" if args.checkpoint is None else "model")
    subjects = args.subject if args.subject else None
    reports, path = run_eval(
        config, out, method, checkpoint_path=args.checkpoint, subjects=subjects
    )
    for rep in reports:
        pairs = ", ".join(
            f"f{k}={v:.2f}" for k, v in zip(rep.frame_indices, rep.values)
        )
        print(f"{method} subject {rep.subject} ({rep.n_windows} windows): {pairs}")
    print(f"report: {path}")
    return 0


def cmd_compare(args):
    from .pipeline import run_compare

    config = _load_config(args)
    out = _out_dir(config)
    table = run_compare(out, args.reports)
    print(table.text, end="")
    print(f"artifacts in {out}: comparison.txt, comparison.csv, comparison.png")
    return 0


def cmd_predict(args):
    from .pipeline import run_predict

    config = _load_config(args)
    out = _out_dir(config)
    _, path = run_predict(
        config,
        out,
        args.checkpoint or os.path.join(out, "checkpoint_phase1.json"),
        args.subject,
        args.activity,
        args.trial,
        args.start,
    )
    print(f"predictions: {path}")
    return 0


def cmd_gradcheck(args):
    from .checks import format_suite, run_suite

    results = run_suite(eps=args.eps, tol=args.tol, seed=args.seed or 0)
    print(format_suite(results))
    if all(report.passed for _, report in results):
        print("gradcheck: all checks passed")
        return 0
    print("gradcheck: FAILURES detected", file=sys.stderr)
    return 2


def build_parser():
    parser = argparse.ArgumentParser(
        prog="motioncast",
        description="Motion prediction experiments: synthesize data, train, "
        "fine-tune on a held-out subject, evaluate and compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="override output directory")

    p = sub.add_parser("synth", help="emit a synthetic corpus CSV")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="phase-1 training -> checkpoint + log")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="phase-2 decoder fine-tuning")
    common(p)
    p.add_argument("--checkpoint", help="phase-1 checkpoint (default: <out>/checkpoint_phase1.json)")
    p.add_argument("--subject", type=int, default=None, help="held-out subject id")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a checkpoint or the baseline")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint; omit for zero-velocity")
    p.add_argument("--method", help="method label in reports")
    p.add_argument("--subject", type=int, nargs="*", help="subjects (default: all phase-2)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="merge reports into the comparison table")
    common(p)
    p.add_argument("--reports", nargs="+", required=True, help="report CSV paths")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="predict one window to CSV")
    common(p)
    p.add_argument("--checkpoint", help="model checkpoint")
    p.add_argument("--subject", type=int, required=True)
    p.add_argument("--activity", type=int, required=True)
    p.add_argument("--trial", type=int, required=True)
    p.add_argument("--start", type=int, default=0, help="0-based first observed frame")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    common(p)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, TrainingDiverged) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
