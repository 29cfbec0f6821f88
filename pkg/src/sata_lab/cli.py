"""``sata-lab`` command line: generate, train, eval, sweep, ablate.

Every failure prints one line ``error: <code>: <message>`` to stderr and exits nonzero.
All files are written under ``--out``. Environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import dump_config, load_train_config, load_world_config
from .core import ConfigError, SataError
from .encoders import ShapeMismatchError, load_checkpoint, save_checkpoint
from .evaluation import evaluate_benchmark
from .experiments import (VARIANTS, SweepSpec, ablation_csv, apply_variant, run_ablation, run_sweep, sweep_csv,
                          text_table)
from .trainer import TrainConfig, train
from .world import Dataset, DatasetNotFoundError, WorldConfig, generate, load_dataset, save_dataset

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_OUTPUT = 3


class UsageError(Exception):
    code = "usage_error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seeds(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds takes comma-separated integers, got {text!r}") from None
    if not seeds:
        raise UsageError("--seeds is empty")
    return seeds


def _is_dataset(path: Path) -> bool:
    return (path / "manifest.json").is_file()


def _world_config(path: str | None, seed: int | None) -> WorldConfig:
    cfg = WorldConfig() if path is None else load_world_config(path)
    return cfg if seed is None else dataclasses.replace(cfg, seed=seed)


def _train_config(path: str | None, variant: str | None, seed: int | None) -> TrainConfig:
    cfg = TrainConfig() if path is None else load_train_config(path)
    cfg = apply_variant(cfg, variant)
    return cfg if seed is None else cfg.replace(seed=seed)


def _dataset(path: str | None) -> Dataset:
    if path is None:
        raise UsageError("--world must name a dataset directory written by 'generate'")
    p = Path(path)
    if not _is_dataset(p):
        raise DatasetNotFoundError(f"no dataset at {p}")
    return load_dataset(p)


def _world_or_dataset(path: str | None) -> WorldConfig | Dataset:
    if path is not None and Path(path).is_dir():
        return _dataset(path)
    return _world_config(path, None)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def cmd_generate(args) -> int:
    cfg = _world_config(args.world, args.seed)
    out = Path(args.out)
    save_dataset(generate(cfg), out)
    print(f"wrote dataset to {out}")
    return 0


def cmd_train(args) -> int:
    ds = _dataset(args.world)
    cfg = _train_config(args.config, args.variant, args.seed)
    out = Path(args.out)
    table = text_table(ds)
    result = train(ds.source, table, ds.world.config.num_source_actions, cfg)
    extra = {"variant": args.variant, "world_seed": ds.world.config.seed, "train_config": cfg.to_dict()}
    _write(out / "train_config.yaml", dump_config(cfg))
    save_checkpoint(result.last_params, out / "checkpoint.ckpt", dict(extra, weights="last"))
    if result.swa.count:
        save_checkpoint(result.params, out / "swa.ckpt", dict(extra, weights="swa", swa_count=result.swa.count))
    result.write_log(out / "train_log.jsonl")
    print(f"wrote {'swa.ckpt, ' if result.swa.count else ''}checkpoint.ckpt and train_log.jsonl to {out}")
    return 0


def cmd_eval(args) -> int:
    if args.checkpoint is None:
        raise UsageError("eval needs --checkpoint")
    ds = _dataset(args.world)
    params, _ = load_checkpoint(args.checkpoint)
    D = ds.world.config.latent_dim
    if params.input_dim != D or params.embed_dim != D:
        raise ShapeMismatchError(f"checkpoint maps {params.input_dim}->{params.embed_dim} but the world has D={D}")
    report = evaluate_benchmark(params, text_table(ds), ds)
    out = Path(args.out)
    report.write(out)
    print(report.to_csv(), end="")
    return 0


def _cell_writer(root: Path):
    def write(tag, seed, cell):
        report_dir = root / "cells" / str(tag) / f"seed_{seed}"
        cell.report.write(report_dir)
    return write


def cmd_sweep(args) -> int:
    if args.sweep is None:
        raise UsageError("sweep needs --sweep name=v1,v2,...")
    spec = SweepSpec.parse(args.sweep)
    world = _world_or_dataset(args.world)
    cfg = TrainConfig() if args.config is None else load_train_config(args.config)
    out = Path(args.out)
    seeds = args.seeds or ([args.seed] if args.seed is not None else [0])
    rows = run_sweep(world, cfg, spec, seeds, args.variant,
                     on_cell=_cell_writer(out / spec.param) if not args.no_cells else None)
    text = sweep_csv(spec.param, rows)
    _write(out / f"sweep_{spec.param}.csv", text)
    print(text, end="")
    return 0


def cmd_ablate(args) -> int:
    world = _world_or_dataset(args.world)
    cfg = TrainConfig() if args.config is None else load_train_config(args.config)
    out = Path(args.out)
    seeds = args.seeds or ([args.seed] if args.seed is not None else [0])
    results = run_ablation(world, cfg, seeds, on_cell=_cell_writer(out) if not args.no_cells else None)
    text = ablation_csv(results)
    _write(out / "ablation.csv", text)
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sata-lab", description="Scene-aware video-text alignment on a synthetic benchmark.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, world_help):
        sp.add_argument("--world", help=world_help)
        sp.add_argument("--out", required=True, help="output directory; nothing is written elsewhere")
        sp.add_argument("--seed", type=int, help="seed override")

    g = sub.add_parser("generate", help="draw a world and write its source and target datasets")
    common(g, "world config YAML (default: built-in world)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one variant on a generated dataset")
    common(t, "dataset directory")
    t.add_argument("--config", help="train config YAML (default: built-in desk config)")
    t.add_argument("--variant", choices=VARIANTS)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on every target domain")
    common(e, "dataset directory")
    e.add_argument("--checkpoint", help="checkpoint file written by 'train'")
    e.set_defaults(func=cmd_eval)

    for name, func, helptext in (("sweep", cmd_sweep, "train+eval over a parameter's values and seeds"),
                                 ("ablate", cmd_ablate, "train+eval baseline, scene_only and full_sata")):
        s = sub.add_parser(name, help=helptext)
        common(s, "world config YAML (regenerated per seed) or a fixed dataset directory")
        s.add_argument("--config", help="train config YAML")
        s.add_argument("--seeds", type=_seeds, help="comma-separated seeds (default: --seed or 0)")
        s.add_argument("--no-cells", action="store_true", help="skip per-cell report files")
        if name == "sweep":
            s.add_argument("--variant", choices=VARIANTS)
            s.add_argument("--sweep", help="name=v1,v2,... with name in lambda_scene, lambda_action, pool_size, N, p_bias")
        s.set_defaults(func=func)
    return p


def _fail(code: str, message: str, status: int) -> int:
    line = " ".join(str(message).split())
    print(f"error: {code}: {line}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(UsageError.code, exc, EXIT_USAGE)
    except ConfigError as exc:
        return _fail(exc.code, exc, EXIT_ERROR)
    except SataError as exc:
        return _fail(exc.code, exc, EXIT_ERROR)
    except OSError as exc:
        return _fail("output_error" if isinstance(exc, (PermissionError, IsADirectoryError, NotADirectoryError,
                                                        FileExistsError)) else "io_error", exc, EXIT_OUTPUT)


if __name__ == "__main__":
    sys.exit(main())
