"""Command-line interface.

Subcommands: train, eval, infer, bench-scan, ablate, gradcheck. Model and
optimizer settings come from three layers, lowest priority first: the
dataclass defaults, a flat `key = value` config file (--config), and
explicit CLI flags. Config file keys mirror ModelConfig / TrainConfig
field names; `seed` sets both. Exit codes: 0 success, 1 configuration
error (bad flags, bad config file, bad shapes), 2 runtime failure
(divergence, failed checks, I/O).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import __version__
from .ablation import GROUPS, format_group_table, run_ablation
from .bench import bench_scan, format_bench_table, write_bench_csv
from .checks import OP_NAMES, gradient_battery
from .data import DatasetSpec, ingest
from .model import (
    TASKS,
    CheckpointError,
    ModelConfig,
    build_model,
    load_checkpoint,
)
from .tensor import ConfigError
from .train import TrainConfig, TrainingDiverged, evaluate, infer, train

_MODEL_FIELDS = {f.name: f for f in dataclasses.fields(ModelConfig)}
_TRAIN_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract reserves 2 for runtime
    # failures, so surface usage problems as configuration errors instead
    def error(self, message):
        raise ConfigError(message)


def _parse_config_file(path: str) -> dict:
    """Flat `key = value` lines; '#' starts a comment; keys must be known."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = text.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _MODEL_FIELDS and key not in _TRAIN_FIELDS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def _coerce(key: str, text: str, default):
    """Parse a config-file string into the type of the field's default."""
    if key == "scan_dirs":
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if key == "max_iters":
        return None if text.lower() == "none" else int(text)
    if isinstance(default, bool):
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, got {text!r}")
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {text!r}")
    return text


def _build_configs(args) -> tuple:
    """Layer defaults <- config file <- CLI flags into the two configs."""
    model_kwargs, train_kwargs = {}, {}
    if getattr(args, "config", None):
        for key, text in _parse_config_file(args.config).items():
            if key in _MODEL_FIELDS:
                model_kwargs[key] = _coerce(key, text, _MODEL_FIELDS[key].default)
            if key in _TRAIN_FIELDS:
                train_kwargs[key] = _coerce(key, text, _TRAIN_FIELDS[key].default)
    flag_to_field = {
        "task": "task",
        "depth": "depth",
        "growth": "growth",
        "patches": "patch_grid",
        "state_size": "state_size",
        "mhcb_count": "mhcb_count",
    }
    for flag, field in flag_to_field.items():
        value = getattr(args, flag, None)
        if value is not None:
            model_kwargs[field] = value
    dirs = getattr(args, "dirs", None)
    if dirs is not None:
        model_kwargs["scan_dirs"] = tuple(s.strip() for s in dirs.split(",") if s.strip())
    for flag, field in (("lr", "lr"), ("epochs", "epochs"), ("iters", "max_iters")):
        value = getattr(args, flag, None)
        if value is not None:
            train_kwargs[field] = value
    seed = getattr(args, "seed", None)
    if seed is not None:
        model_kwargs["seed"] = seed
        train_kwargs["seed"] = seed
    try:
        mc = ModelConfig(**model_kwargs)
        tc = TrainConfig(**train_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc))
    mc.validate()
    tc.validate()
    return mc, tc


def _dataset(args, task: str) -> list:
    spec = DatasetSpec(
        root=args.data, split=args.split, tile=args.tile, task=task
    )
    return ingest(spec)


def _out_dir(args, default: str) -> str:
    out = args.out or default
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def _cmd_train(args) -> int:
    mc, tc = _build_configs(args)
    samples = _dataset(args, mc.task)
    model = build_model(mc)
    out = _out_dir(args, "runs/train")
    result = train(model, samples, tc, out_dir=out)
    print(
        f"trained {mc.task} for {len(result.history)} iterations: "
        f"l1 {result.initial_loss:.4f} -> {result.final_loss:.4f}"
    )
    print(f"checkpoint: {result.checkpoint}")
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples = _dataset(args, model.cfg.task)
    out = _out_dir(args, "runs/eval")
    report = evaluate(model, samples, out_dir=out)
    agg = report.aggregate()
    print(
        f"{len(report.records)} images: psnr {agg['psnr_db']:.3f} dB, "
        f"ssim {agg['ssim']:.4f}, mse {agg['mse']:.3f}, mae {agg['mae']:.3f}, "
        f"sam {agg['sam_rad']:.4f} rad"
    )
    print(f"report: {os.path.join(out, 'metrics.csv')}")
    return 0


def _cmd_infer(args) -> int:
    model = load_checkpoint(args.checkpoint)
    out = _out_dir(args, ".")
    stem = os.path.splitext(os.path.basename(args.input))[0]
    out_path = os.path.join(out, f"{stem}_restored.png")
    arr = infer(model, args.input, out_path)
    print(f"{args.input} -> {out_path} ({arr.shape[0]}x{arr.shape[1]}x{arr.shape[2]})")
    return 0


def _cmd_bench_scan(args) -> int:
    lengths = tuple(int(s) for s in args.lengths.split(",") if s.strip())
    rows = bench_scan(lengths=lengths, runs=args.runs, seed=args.seed or 0)
    print(format_bench_table(rows))
    out = _out_dir(args, "runs/bench")
    path = os.path.join(out, "bench.csv")
    write_bench_csv(rows, path)
    print(f"csv: {path}")
    return 0


def _cmd_ablate(args) -> int:
    mc, tc = _build_configs(args)
    groups = tuple(s.strip() for s in args.groups.split(",") if s.strip())
    samples = _dataset(args, mc.task)
    out = _out_dir(args, "runs/ablate")
    results = run_ablation(samples, mc, tc, groups=groups, out_dir=out)
    for g in GROUPS:
        if any(r["group"] == g for r in results):
            print(format_group_table(results, g))
            print()
    print(f"csv: {os.path.join(out, 'ablation.csv')}")
    return 0


def _cmd_gradcheck(args) -> int:
    ops = None
    if args.ops:
        ops = tuple(s.strip() for s in args.ops.split(",") if s.strip())
    results = gradient_battery(
        instances=args.instances, base_seed=args.seed or 0, ops=ops
    )
    for r in results:
        print(r.line())
    if all(r.passed for r in results):
        print(f"all {len(results)} checks passed")
        return 0
    failed = sum(1 for r in results if not r.passed)
    print(f"{failed} of {len(results)} checks FAILED")
    return 2


# ---------------------------------------------------------------------------
# parser wiring


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--task", choices=sorted(TASKS), help="restoration task")
    sub.add_argument("--depth", type=int, help="encoder/decoder nesting depth")
    sub.add_argument("--growth", type=int, help="base channel width")
    sub.add_argument("--patches", type=int, help="upsampler patch grid size")
    sub.add_argument("--dirs", help="comma-separated scan directions")
    sub.add_argument("--state-size", type=int, dest="state_size", help="scan state size")
    sub.add_argument("--mhcb-count", type=int, dest="mhcb_count", help="stem block count")
    sub.add_argument("--seed", type=int, help="seed for init and training order")
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--out", help="output directory")


def _add_data(sub: argparse.ArgumentParser, default_split: str) -> None:
    sub.add_argument("--data", required=True, help="corpus root (rgb/ subdirectory)")
    sub.add_argument("--split", default=default_split,
                     choices=("train", "val", "test", "all"), help="corpus split")
    sub.add_argument("--tile", type=int, help="center-crop tiles to this size")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="panrestore", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", parents=[], help="train a model on a tile corpus")
    _add_common(p)
    _add_data(p, "train")
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--epochs", type=int, help="training epochs")
    p.add_argument("--iters", type=int, help="hard cap on training iterations")
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("eval", help="score a checkpoint on a corpus split")
    _add_common(p)
    _add_data(p, "val")
    p.add_argument("--checkpoint", required=True, help="model checkpoint path")
    p.set_defaults(func=_cmd_eval)

    p = subs.add_parser("infer", help="restore one grayscale PNG")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="model checkpoint path")
    p.add_argument("--input", required=True, help="input PNG path")
    p.set_defaults(func=_cmd_infer)

    p = subs.add_parser("bench-scan", help="time the scan kernel vs attention")
    _add_common(p)
    p.add_argument("--lengths", default="1024,2048,4096,8192",
                   help="comma-separated sequence lengths")
    p.add_argument("--runs", type=int, default=5, help="timed runs per length")
    p.set_defaults(func=_cmd_bench_scan)

    p = subs.add_parser("ablate", help="train the ablation grid and emit tables")
    _add_common(p)
    _add_data(p, "train")
    p.add_argument("--groups", default="modules",
                   help=f"comma-separated groups from {','.join(GROUPS)}")
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--epochs", type=int, help="training epochs per row")
    p.add_argument("--iters", type=int, help="hard cap on iterations per row")
    p.set_defaults(func=_cmd_ablate)

    p = subs.add_parser("gradcheck", help="run the gradient-check battery")
    _add_common(p)
    p.add_argument("--instances", type=int, default=3,
                   help="random instances per operation")
    p.add_argument("--ops", help=f"comma-separated subset of {','.join(OP_NAMES)}")
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
