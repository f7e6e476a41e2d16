"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from lsdgnn.convgraph import build_dag, format_edge_list
from lsdgnn.curriculum import (
    DifficultyParams,
    conversation_difficulty,
    default_wheel,
    format_difficulty_report,
    load_wheel,
)
from lsdgnn.datasets import SynthConfig, generate_synthetic, load_dataset, save_dataset
from lsdgnn.errors import CheckError, ConfigError
from lsdgnn.harness.checkpoint import load_checkpoint, save_checkpoint
from lsdgnn.harness.config import load_run_config
from lsdgnn.harness.training import evaluate, train, train_seeds
from lsdgnn.model import conversation_loss, init_params
from lsdgnn.numerics.gradcheck import finite_difference_check


def _omega(text: str) -> int | None:
    if text in ("unbounded", "inf", "none"):
        return None
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"omega must be an integer or 'unbounded', got {text!r}") from None


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_build_graph(args) -> int:
    data = load_dataset(args.input)
    convs = data.conversations
    if args.conversation is not None:
        convs = [c for c in convs if c.id == args.conversation]
        if not convs:
            raise ConfigError(f"no conversation {args.conversation!r} in {args.input}")
    if len(convs) == 1:
        text = format_edge_list(build_dag(convs[0], args.omega))
    else:
        text = "".join(f"# {c.id}\n" + format_edge_list(build_dag(c, args.omega)) for c in convs)
    _write(text, args.output)
    return 0


def cmd_difficulty(args) -> int:
    data = load_dataset(args.input)
    wheel_path = args.wheel or data.wheel
    wheel = load_wheel(wheel_path) if wheel_path else default_wheel()
    wheel = wheel.subset(data.emotion_labels)
    params = DifficultyParams(args.k, args.b)
    dif = {c.id: conversation_difficulty(c, wheel, params) for c in data.conversations}
    _write(format_difficulty_report(dif), args.output)
    return 0


def cmd_synth(args) -> int:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    save_dataset(generate_synthetic(SynthConfig.from_dict(raw)), args.output)
    return 0


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    if args.seeds:
        summary = train_seeds(run, args.seeds)
        out = {
            "seeds": summary.seeds,
            "per_seed": [r.to_dict() for r in summary.reports],
            "mean": summary.mean(),
        }
        print(json.dumps(out, indent=2))
        return 0
    log_path = args.log or run.paths.log
    log_file = open(log_path, "w") if log_path else None
    try:
        def on_epoch(entry):
            line = json.dumps(entry.to_dict())
            print(line)
            if log_file is not None:
                log_file.write(line + "\n")

        result = train(run, on_epoch=on_epoch)
    finally:
        if log_file is not None:
            log_file.close()
    if result.best_dev_epoch is not None:
        print(json.dumps({"best_dev_epoch": result.best_dev_epoch,
                          "best_dev_weighted_f1": result.best_dev_weighted_f1}))
    if run.paths.checkpoint:
        save_checkpoint(result.checkpoint, run.paths.checkpoint)
    return 0


def cmd_eval(args) -> int:
    report = evaluate(load_checkpoint(args.checkpoint), load_dataset(args.data))
    print(json.dumps(report.to_dict(), indent=2))
    return 0


def cmd_gradcheck(args) -> int:
    run = load_run_config(args.config)
    if not run.paths.dataset:
        raise ConfigError("paths.dataset is not set")
    data = load_dataset(run.paths.dataset)
    conv = data.conversations[0]
    if args.conversation is not None:
        conv = data.by_id().get(args.conversation)
        if conv is None:
            raise ConfigError(f"no conversation {args.conversation!r}")
    config = run.model_config(data.modality_dims, data.num_classes)
    config.dropout = 0.0
    params = init_params(config, seed=run.seed)
    report = finite_difference_check(
        lambda: conversation_loss([conv], params, config, mode="eval")[0],
        params,
        epsilon=args.epsilon,
        tolerance=args.tolerance,
        max_per_tensor=args.max_per_tensor,
        seed=run.seed,
    )
    print(report.summary())
    if not report.ok:
        raise CheckError(f"max relative error {report.max_rel_error:.3e} exceeds {args.tolerance:g}")
    return 0


class _Parser(argparse.ArgumentParser):
    # Bad arguments are a validation failure, so exit 1 rather than argparse's 2.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lsdgnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="write the edge list of a conversation graph")
    p.add_argument("--omega", type=_omega, required=True, help="same-speaker look-back, or 'unbounded'")
    p.add_argument("--input", required=True, help="dataset file")
    p.add_argument("--output", default="-")
    p.add_argument("--conversation", help="only this conversation id")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("difficulty", help="per-conversation difficulty report")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--b", type=float, default=0.4)
    p.add_argument("--wheel", help="wheel file (default: the dataset's, else the packaged one)")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_difficulty)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON object of generator settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, nargs="+", help="train once per seed and report mean metrics")
    p.add_argument("--log", help="also write the per-epoch log here (JSON lines)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    p.add_argument("--config", required=True)
    p.add_argument("--conversation")
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--max-per-tensor", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, IndexError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
