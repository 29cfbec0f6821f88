"""Variant mapping, single train+eval cells, parameter sweeps and the three-row ablation."""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass

import numpy as np

from .core import ConfigError
from .encoders import TextEmbeddingTable
from .evaluation import BenchmarkReport, evaluate_benchmark
from .prompts import default_pool
from .trainer import TrainConfig, TrainResult, train
from .world import Dataset, WorldConfig, generate

VARIANTS = ("baseline", "scene_only", "full_sata")
SWEEP_PARAMS = ("lambda_scene", "lambda_action", "pool_size", "N", "p_bias")
INT_PARAMS = ("pool_size", "N")


def apply_variant(cfg: TrainConfig, variant: str | None) -> TrainConfig:
    """baseline zeroes both auxiliary weights, scene_only zeroes the action weight,
    full_sata keeps the config's weights and requires both to be positive."""
    if variant is None:
        return cfg
    h = cfg.hyper
    if variant == "baseline":
        h = dataclasses.replace(h, lambda_scene=0.0, lambda_action=0.0)
    elif variant == "scene_only":
        h = dataclasses.replace(h, lambda_action=0.0)
    elif variant == "full_sata":
        if not (h.lambda_scene > 0 and h.lambda_action > 0):
            raise ConfigError("variant full_sata needs lambda_scene > 0 and lambda_action > 0", field="hyper")
    else:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {VARIANTS}", field="variant")
    return cfg.replace(hyper=h)


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple

    @classmethod
    def parse(cls, text: str) -> "SweepSpec":
        """``"lambda_scene=0,0.1,0.5"`` -> SweepSpec("lambda_scene", (0.0, 0.1, 0.5))."""
        name, sep, rest = text.partition("=")
        name = name.strip()
        if not sep or not rest.strip():
            raise ConfigError(f"sweep must look like name=v1,v2,...; got {text!r}", field="sweep")
        if name not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {name!r}; expected one of {SWEEP_PARAMS}", field="sweep")
        conv = int if name in INT_PARAMS else float
        try:
            values = tuple(conv(v) for v in rest.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad sweep value in {text!r}", field="sweep") from exc
        return cls(name, values)


def apply_sweep_value(world: WorldConfig, cfg: TrainConfig, param: str, value) -> tuple[WorldConfig, TrainConfig]:
    if param == "lambda_scene":
        return world, cfg.replace(hyper=dataclasses.replace(cfg.hyper, lambda_scene=float(value)))
    if param == "lambda_action":
        return world, cfg.replace(hyper=dataclasses.replace(cfg.hyper, lambda_action=float(value)))
    if param == "pool_size":
        # A pool smaller than N can only supply the whole pool each batch.
        return world, cfg.replace(pool_size=int(value), num_suffixes=min(cfg.num_suffixes, int(value)))
    if param == "N":
        return world, cfg.replace(num_suffixes=int(value))
    if param == "p_bias":
        return dataclasses.replace(world, bias_strength=float(value)), cfg
    raise ConfigError(f"unknown sweep parameter {param!r}", field="sweep")


def text_table(dataset: Dataset) -> TextEmbeddingTable:
    return TextEmbeddingTable.for_world(dataset.world, len(default_pool()))


@dataclass
class CellResult:
    dataset: Dataset
    table: TextEmbeddingTable
    train: TrainResult
    report: BenchmarkReport


def run_cell(world: WorldConfig | Dataset, cfg: TrainConfig, seed: int | None = None) -> CellResult:
    """Train and evaluate once. ``seed`` reseeds the world (when given a config) and the trainer."""
    if isinstance(world, Dataset):
        dataset = world
    else:
        dataset = generate(world if seed is None else dataclasses.replace(world, seed=seed))
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    table = text_table(dataset)
    result = train(dataset.source, table, dataset.world.config.num_source_actions, cfg)
    return CellResult(dataset, table, result, evaluate_benchmark(result.params, table, dataset))


def _report_cells(report: BenchmarkReport) -> list:
    out = []
    for d in report.domains:
        out += [d.acc_closed, d.acc_open, d.acc_all]
    return out + [report.avg_closed, report.avg_open, report.avg_all]


def _report_header(report: BenchmarkReport) -> list[str]:
    names = [d.name for d in report.domains] + ["AVG"]
    return [f"{n}_{m}" for n in names for m in ("C", "O", "A")]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


@dataclass
class SweepRow:
    value: float | int
    seed: int
    report: BenchmarkReport


def run_sweep(world: WorldConfig | Dataset, cfg: TrainConfig, sweep: SweepSpec, seeds, variant: str | None = None,
              on_cell=None) -> list[SweepRow]:
    """Train+eval for every (value, seed); rows come back sorted by (value, seed)."""
    if isinstance(world, Dataset) and sweep.param == "p_bias":
        raise ConfigError("a p_bias sweep needs a world config, not a fixed dataset", field="sweep")
    base = apply_variant(cfg, variant)
    rows = []
    for value in sweep.values:
        for seed in seeds:
            if isinstance(world, Dataset):
                w, c = world, apply_sweep_value(world.world.config, base, sweep.param, value)[1]
            else:
                w, c = apply_sweep_value(world, base, sweep.param, value)
            cell = run_cell(w, c, seed)
            if on_cell is not None:
                on_cell(value, seed, cell)
            rows.append(SweepRow(value, seed, cell.report))
    rows.sort(key=lambda r: (r.value, r.seed))
    return rows


def sweep_csv(param: str, rows: list[SweepRow]) -> str:
    if not rows:
        return _csv([param, "seed"], [])
    header = [param, "seed"] + _report_header(rows[0].report)
    return _csv(header, [[r.value, r.seed] + _report_cells(r.report) for r in rows])


def mean_cells(reports: list[BenchmarkReport]) -> list:
    """Seed-mean of every per-domain and AVG cell, skipping absent values."""
    cols = list(zip(*[_report_cells(r) for r in reports]))
    out = []
    for col in cols:
        vals = [v for v in col if v is not None]
        out.append(float(np.mean(vals)) if vals else None)
    return out


def run_ablation(world: WorldConfig | Dataset, cfg: TrainConfig, seeds, on_cell=None) -> dict[str, list[BenchmarkReport]]:
    """The three variants over every seed; a variant's cells share seeds with the others."""
    if not (cfg.hyper.lambda_scene > 0 and cfg.hyper.lambda_action > 0):
        raise ConfigError("ablation needs lambda_scene > 0 and lambda_action > 0 in the train config", field="hyper")
    out = {}
    for variant in VARIANTS:
        c = apply_variant(cfg, variant)
        reports = []
        for seed in seeds:
            cell = run_cell(world, c, seed)
            if on_cell is not None:
                on_cell(variant, seed, cell)
            reports.append(cell.report)
        out[variant] = reports
    return out


def ablation_csv(results: dict[str, list[BenchmarkReport]]) -> str:
    flags = {"baseline": ("no", "no"), "scene_only": ("yes", "no"), "full_sata": ("yes", "yes")}
    first = next(iter(results.values()))[0]
    header = ["variant", "L_scene", "L_action"] + _report_header(first)
    rows = [[v, *flags[v]] + mean_cells(results[v]) for v in VARIANTS if v in results]
    return _csv(header, rows)
