"""
Command-line entry point: `mtnet <subcommand> [options]`.

Exit codes: 0 on success, 2 for configuration errors, 3 for I/O failures and 1 for
anything else. Errors are reported on stderr as one line `error: <kind>: <message>`.
"""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional, Sequence

import psutil
from omegaconf import DictConfig
from tabulate import tabulate

from .config import (
    from_container,
    load_config,
    reference_rows,
    save_config,
    to_container,
)
from .utils.errors import ConfigurationException, VocabularyMismatchError
from .utils.utils_fct import atomic_write, setup_logging

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _common_parser() -> argparse.ArgumentParser:
    """Options shared by every subcommand."""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--config", help="YAML configuration merged on the preset")
    parser.add_argument(
        "--preset", choices=["nyc", "tky", "ca", "toy"], help="bundled configuration"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dotted configuration override, e.g. train.epochs=3 (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="seed of every random generator")
    parser.add_argument(
        "--threads",
        type=int,
        default=psutil.cpu_count(logical=True) or 1,
        help="worker threads, defaults to the number of logical cores",
    )
    parser.add_argument("--log-level", default="INFO", help="logging level")
    parser.add_argument(
        "--quiet", action="store_true", help="only log warnings, no progress bars"
    )
    return parser


def build_parser() -> argparse.ArgumentParser:
    """"""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="mtnet",
        description="Mobility Tree Network for next POI recommendation.",
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    sub = commands.add_parser(
        "preprocess", parents=[common], help="raw check-ins to bundle"
    )
    sub.add_argument("--input", help="raw check-in file, overrides dataset.input_path")
    sub.add_argument(
        "--output", "--out", dest="out", required=True, help="bundle file to write"
    )

    sub = commands.add_parser("train", parents=[common], help="train a model on a bundle")
    sub.add_argument("--bundle", help="preprocessed dataset")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--profile", action="store_true", help="log primitive timings")

    sub = commands.add_parser(
        "evaluate", parents=[common], help="Acc@K and MRR of a model"
    )
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--bundle")
    sub.add_argument("--split", choices=["train", "valid", "test"])
    sub.add_argument("--mode", choices=["all_prefixes", "last_prefix"])
    sub.add_argument(
        "--shuffle-slots", action="store_true", help="permute the slots of every prefix"
    )
    sub.add_argument("--out", help="report file, next to the checkpoint by default")

    sub = commands.add_parser("recommend", parents=[common], help="top-k POIs for a user")
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--bundle")
    sub.add_argument("--user", required=True, help="raw user key")
    sub.add_argument("--at", required=True, type=int, help="UTC epoch seconds")
    sub.add_argument("--top-k", type=int, help="length of the list")

    sub = commands.add_parser(
        "tree", parents=[common], aliases=["tree-dump"], help="render one Mobility Tree"
    )
    sub.add_argument("action", nargs="?", default="dump", choices=["dump"])
    sub.add_argument("--bundle")
    sub.add_argument("--split", default="train", choices=["train", "valid", "test"])
    sub.add_argument(
        "--sample", "--index", dest="index", type=int, default=0, help="trajectory index"
    )
    sub.add_argument("--slots-per-day", type=int, help="overrides model.slots_per_day")

    sub = commands.add_parser(
        "grad-check", parents=[common], help="finite-difference check of the model"
    )
    sub.add_argument(
        "--root", default="current_day", choices=["current_day", "super_root"]
    )
    sub.add_argument("--samples", type=int, default=10, help="coordinates per parameter")
    sub.add_argument("--tol", type=float, default=1e-4)
    sub.add_argument("--step", type=float, default=1e-5)
    sub.add_argument("--profile", action="store_true", help="log primitive timings")

    sub = commands.add_parser("synth", parents=[common], help="synthetic check-in file")
    sub.add_argument("--out", required=True)
    sub.add_argument("--users", type=int, default=20)
    sub.add_argument("--days", type=int, default=5, help="trajectories per user")
    sub.add_argument("--slot-hours", type=int, default=6, help="width of planted slots")
    sub.add_argument("--pois", type=int, default=10)
    sub.add_argument("--categories", type=int, default=3)
    sub.add_argument(
        "--skip-prob", type=float, default=0.0, help="probability of skipping a slot"
    )
    sub.add_argument(
        "--noise-visits", type=int, default=0, help="random visits before every habit"
    )

    sub = commands.add_parser("stats", parents=[common], help="dataset statistics")
    sub.add_argument("--bundle")

    sub = commands.add_parser(
        "sweep", parents=[common], help="time-slot granularity sweep"
    )
    sub.add_argument("--bundle")
    sub.add_argument("--out", required=True)
    sub.add_argument(
        "--slots", default="2,3,4,6,8,12,24", help="comma separated values of P"
    )
    sub.add_argument("--split", choices=["train", "valid", "test"])
    sub.add_argument("--plot", help="image file of the metrics against P")

    sub = commands.add_parser("ablate", parents=[common], help="ablation study")
    sub.add_argument("--bundle")
    sub.add_argument("--out", required=True)
    sub.add_argument("--variants", help="comma separated subset of variants")
    sub.add_argument("--split", choices=["train", "valid", "test"])

    sub = commands.add_parser(
        "dump-embeddings", parents=[common], help="export trajectory representations"
    )
    sub.add_argument("--checkpoint", required=True)
    sub.add_argument("--bundle")
    sub.add_argument("--out", required=True)
    sub.add_argument("--split", default="test", choices=["train", "valid", "test"])
    sub.add_argument(
        "--mode", default="last_prefix", choices=["all_prefixes", "last_prefix"]
    )
    sub.add_argument("--hours", help="hour window START-END of the last check-in")

    sub = commands.add_parser(
        "reference", parents=[common], help="configuration reference"
    )
    sub.add_argument("--out", help="markdown file to write")
    return parser


def _config(args: argparse.Namespace) -> DictConfig:
    """Effective configuration of a command, `--seed` applied to every seed."""
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides += [f"train.seed={args.seed}", f"dataset.seed={args.seed}"]
    return load_config(path=args.config, preset=args.preset, overrides=overrides)


def _bundle(args: argparse.Namespace):
    """"""
    from .data import DatasetBundle

    if not args.bundle:
        raise ConfigurationException("no dataset bundle given (--bundle)", key="bundle")
    return DatasetBundle.load(args.bundle)


def _with_dataset(cfg: DictConfig, bundle) -> DictConfig:
    """Configuration whose dataset section is the one the bundle was built with."""
    values = to_container(cfg)
    values["dataset"] = bundle.dataset_config
    return from_container(values)


def _print_json(payload) -> None:
    """"""
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_preprocess(args: argparse.Namespace) -> int:
    """"""
    from .data import DatasetBundle

    cfg = _config(args)
    bundle = DatasetBundle.from_config(cfg, source=args.input)
    digest = bundle.save(args.out)
    save_config(cfg, os.path.splitext(args.out)[0] + ".config.yaml")
    logging.info(f"\n{bundle.get_table()}")
    _print_json({"bundle": args.out, "sha256": digest, "config_hash": bundle.config_hash})
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """"""
    from .assistants import TrainAssistant

    bundle = _bundle(args)
    cfg = _with_dataset(_config(args), bundle)
    assistant = TrainAssistant(config=cfg, bundle=bundle)
    trainer = assistant.fit(args.out, progress=not args.quiet, profile=args.profile)
    _print_json(
        {
            "best_checkpoint": trainer.best_checkpoint,
            "last_checkpoint": trainer.last_checkpoint,
            "last_checkpoint_sha256": trainer.last_checkpoint_sha,
            "metrics": os.path.join(args.out, "metrics.jsonl"),
        }
    )
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    """"""
    from .evaluation import evaluate
    from .models import MTNet

    model = MTNet.load_from_checkpoint(args.checkpoint)
    bundle = _bundle(args)
    stored = model.checkpoint.config.eval
    split = args.split or stored.split
    report = evaluate(
        model,
        bundle,
        split=split,
        mode=args.mode or stored.mode,
        ks=stored.ks,
        batch_size=stored.batch_size,
        shuffle=args.shuffle_slots or stored.shuffle_slots,
        threads=args.threads,
        seed=args.seed if args.seed is not None else model.config.seed,
    )
    out = args.out or os.path.join(
        os.path.dirname(os.path.abspath(args.checkpoint)), f"eval-{split}.json"
    )
    with atomic_write(out, "w") as handle:
        json.dump(report.to_json(), handle, indent=2, sort_keys=True)
    logging.info(f"\n{report.get_table()}")
    _print_json(report.to_json())
    return EXIT_OK


def cmd_recommend(args: argparse.Namespace) -> int:
    """"""
    from .evaluation import recommend
    from .models import MTNet

    model = MTNet.load_from_checkpoint(args.checkpoint)
    bundle = _bundle(args)
    top_k = args.top_k or model.checkpoint.config.eval.top_k
    ranked = recommend(model, bundle, args.user, args.at, top_k=top_k)
    _print_json(
        {
            "user": args.user,
            "at": args.at,
            "recommendations": [
                {"rank": i + 1, "poi": poi, "score": score}
                for i, (poi, score) in enumerate(ranked)
            ],
        }
    )
    return EXIT_OK


def cmd_tree(args: argparse.Namespace) -> int:
    """"""
    from .data import build_mobility_tree, render_tree, tree_stats

    bundle = _bundle(args)
    trajectories = bundle.split[args.split]
    if not 0 <= args.index < len(trajectories):
        raise ConfigurationException(
            f"sample {args.index} outside [0, {len(trajectories)})", key="sample"
        )
    slots_per_day = args.slots_per_day or _config(args).model.slots_per_day
    tree = build_mobility_tree(
        trajectories[args.index], slots_per_day, bundle.timezone_offset_hours
    )
    print(render_tree(tree, bundle.vocab))
    print(tabulate([tree_stats(tree)], headers=list(tree_stats(tree)._fields)))
    return EXIT_OK


def cmd_grad_check(args: argparse.Namespace) -> int:
    """"""
    from .models.diagnostics import run_toy_grad_check

    report = run_toy_grad_check(
        seed=args.seed if args.seed is not None else 0,
        root=args.root,
        h=args.step,
        tol=args.tol,
        n_samples=args.samples,
        profile=args.profile,
    )
    logging.info(f"\n{report.get_table()}")
    if report.profile:
        logging.info(f"Primitive profile:\n{report.profile}")
    _print_json(
        {
            "passed": report.passed,
            "max_relative_error": report.max_relative_error,
            "tolerance": report.tolerance,
            "coordinates": len(report.checks),
        }
    )
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_synth(args: argparse.Namespace) -> int:
    """"""
    from .data.synthetic import write_synthetic

    frame = write_synthetic(
        args.out,
        n_users=args.users,
        trajectories_per_user=args.days,
        slot_hours=args.slot_hours,
        n_pois=args.pois,
        n_categories=args.categories,
        skip_prob=args.skip_prob,
        noise_visits=args.noise_visits,
        seed=args.seed if args.seed is not None else 0,
    )
    _print_json({"path": args.out, "rows": len(frame)})
    return EXIT_OK


def cmd_stats(args: argparse.Namespace) -> int:
    """"""
    bundle = _bundle(args)
    print(bundle.get_table())
    return EXIT_OK


def _int_list(text: str, key: str) -> List[int]:
    """"""
    try:
        return [int(value) for value in text.split(",") if value.strip()]
    except ValueError:
        raise ConfigurationException(f"'{text}' is not a list of integers", key=key)


def cmd_sweep(args: argparse.Namespace) -> int:
    """"""
    from .experiments import sweep

    bundle = _bundle(args)
    cfg = _with_dataset(_config(args), bundle)
    report = sweep(
        cfg,
        bundle,
        args.out,
        slots=_int_list(args.slots, "slots"),
        split=args.split,
        threads=args.threads,
        plot_path=args.plot,
        progress=not args.quiet,
    )
    print(report.get_table())
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    """"""
    from .experiments import ablate

    bundle = _bundle(args)
    cfg = _with_dataset(_config(args), bundle)
    variants = [v.strip() for v in args.variants.split(",")] if args.variants else None
    report = ablate(
        cfg,
        bundle,
        args.out,
        variants=variants,
        split=args.split,
        threads=args.threads,
        progress=not args.quiet,
    )
    print(report.get_table())
    return EXIT_OK


def cmd_dump_embeddings(args: argparse.Namespace) -> int:
    """"""
    from .evaluation import dump_embeddings
    from .models import MTNet

    window = None
    if args.hours:
        bounds = _int_list(args.hours.replace("-", ","), "hours")
        if len(bounds) != 2 or not all(0 <= b <= 24 for b in bounds):
            raise ConfigurationException(f"'{args.hours}' is not START-END", key="hours")
        window = (bounds[0], bounds[1])
    model = MTNet.load_from_checkpoint(args.checkpoint)
    bundle = _bundle(args)
    count = dump_embeddings(
        model, bundle, args.out, split=args.split, mode=args.mode, hour_window=window
    )
    _print_json({"path": args.out, "samples": count})
    return EXIT_OK


def cmd_reference(args: argparse.Namespace) -> int:
    """"""
    page = "# Configuration reference\n\n" + tabulate(
        reference_rows(),
        headers=["key", "type", "default", "description"],
        tablefmt="github",
    )
    if args.out:
        with atomic_write(args.out, "w") as handle:
            handle.write(page + "\n")
    else:
        print(page)
    return EXIT_OK


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "recommend": cmd_recommend,
    "tree": cmd_tree,
    "tree-dump": cmd_tree,
    "grad-check": cmd_grad_check,
    "synth": cmd_synth,
    "stats": cmd_stats,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
    "dump-embeddings": cmd_dump_embeddings,
    "reference": cmd_reference,
}


def _fail(kind: str, message: str, code: int) -> int:
    """"""
    print(f"error: {kind}: {message}", file=sys.stderr)
    return code


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parses `argv` and runs the subcommand.

    Returns:
        int: process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging("WARNING" if args.quiet else args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationException as e:
        return _fail("config", str(e), EXIT_CONFIG)
    except VocabularyMismatchError as e:
        return _fail("vocabulary", e.message, EXIT_FAILURE)
    except OSError as e:
        return _fail("io", str(e), EXIT_IO)
    except Exception as e:
        logging.debug("Unhandled error", exc_info=True)
        message = str(e).splitlines()[0] if str(e) else ""
        return _fail(type(e).__name__, message, EXIT_FAILURE)


def main() -> None:
    """"""
    sys.exit(run())
