"""Mini-batch training over the source domain with AdamW and stochastic weight averaging."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigError, InvalidInputError, SataError, make_rng
from .encoders import TextEmbeddingTable, VideoEncoderParams, encode_batch, encode_batch_backward, init_encoder
from .losses import LossHyper, batch_loss
from .world import VideoSet

SUFFIX_SAMPLING = ("per_batch", "per_video")


class TrainingDivergedError(SataError):
    code = "training_diverged"


@dataclass(frozen=True)
class SwaConfig:
    enabled: bool = True
    start_epoch: int | None = None  # 1-based; None means ceil(2/3 * epochs)
    interval_steps: int | None = None  # None means once at every epoch end

    def first_epoch(self, epochs: int) -> int:
        return self.start_epoch if self.start_epoch is not None else max(1, math.ceil(2 * epochs / 3))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    num_suffixes: int = 16
    pool_size: int = 300
    suffix_sampling: str = "per_batch"
    hyper: LossHyper = field(default_factory=LossHyper)
    swa: SwaConfig = field(default_factory=SwaConfig)
    encoder_arch: str = "linear"
    hidden_dim: int | None = None
    init_std: float = 0.01
    log_unweighted_terms: bool = False
    seed: int = 0

    def __post_init__(self):
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(f"{name}: {msg}", field=name)

        need(isinstance(self.epochs, int) and self.epochs >= 1, "epochs", "must be a positive integer")
        need(isinstance(self.batch_size, int) and self.batch_size >= 1, "batch_size", "must be a positive integer")
        need(self.learning_rate >= 0, "learning_rate", "must be >= 0")
        need(self.weight_decay >= 0, "weight_decay", "must be >= 0")
        need(len(self.betas) == 2 and all(0 <= b < 1 for b in self.betas), "betas", "need two values in [0, 1)")
        need(self.eps > 0, "eps", "must be > 0")
        need(isinstance(self.pool_size, int) and self.pool_size >= 1, "pool_size", "must be a positive integer")
        need(isinstance(self.num_suffixes, int) and 1 <= self.num_suffixes <= self.pool_size, "num_suffixes",
             f"must lie in [1, pool_size={self.pool_size}]")
        need(self.suffix_sampling in SUFFIX_SAMPLING, "suffix_sampling", f"must be one of {SUFFIX_SAMPLING}")
        need(self.encoder_arch in ("linear", "mlp"), "encoder_arch", "must be 'linear' or 'mlp'")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        if self.swa.start_epoch is not None:
            need(1 <= self.swa.start_epoch <= self.epochs, "swa.start_epoch", "must lie in [1, epochs]")
        if self.swa.interval_steps is not None:
            need(self.swa.interval_steps >= 1, "swa.interval_steps", "must be >= 1")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        _reject_unknown(data, cls, "train")
        if "hyper" in data:
            _reject_unknown(data["hyper"], LossHyper, "hyper")
            try:
                data["hyper"] = LossHyper(**data["hyper"])
            except InvalidInputError as exc:
                raise ConfigError(f"hyper: {exc}", field="hyper") from exc
        if "swa" in data:
            _reject_unknown(data["swa"], SwaConfig, "swa")
            data["swa"] = SwaConfig(**data["swa"])
        if "betas" in data:
            data["betas"] = tuple(float(b) for b in data["betas"])
        return cls(**data)


def _reject_unknown(data: dict, cls, where: str) -> None:
    unknown = sorted(set(data) - {f.name for f in dataclasses.fields(cls)})
    if unknown:
        raise ConfigError(f"unknown {where} config key {unknown[0]!r}", field=f"{where}.{unknown[0]}")


@dataclass
class SwaState:
    mean: np.ndarray | None = None
    count: int = 0


def swa_absorb(state: SwaState, params) -> SwaState:
    """Fold one checkpoint into the running mean: ``mean += (params - mean) / (count + 1)``."""
    flat = params.flatten() if isinstance(params, VideoEncoderParams) else np.asarray(params, dtype=np.float64)
    if state.count == 0:
        return SwaState(flat.astype(np.float64).copy(), 1)
    if flat.shape != state.mean.shape:
        raise InvalidInputError(f"checkpoint shape {flat.shape} does not match SWA mean shape {state.mean.shape}")
    return SwaState(state.mean + (flat - state.mean) / (state.count + 1), state.count + 1)


class AdamW:
    """Adam with decoupled weight decay over a flat parameter vector.

    Per step t (1-based), for gradient g:
        m = b1 m + (1 - b1) g;   v = b2 v + (1 - b2) g^2
        theta = theta - lr * wd * theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
    """

    def __init__(self, size: int, lr: float, weight_decay: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.wd, self.eps = lr, weight_decay, eps
        self.b1, self.b2 = betas
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        m_hat = self.m / (1.0 - self.b1 ** self.t)
        v_hat = self.v / (1.0 - self.b2 ** self.t)
        return theta - self.lr * self.wd * theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    params: VideoEncoderParams  # the SWA average when SWA ran, else the last iterate
    last_params: VideoEncoderParams
    swa: SwaState
    log: list[dict]

    def write_log(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return path


def _flat_grads(params: VideoEncoderParams, grads: dict) -> np.ndarray:
    return np.concatenate([grads[name].ravel() for name in params.names()])


def train(source: VideoSet, table: TextEmbeddingTable, num_source_actions: int, cfg: TrainConfig,
          init: VideoEncoderParams | None = None, kernel=None) -> TrainResult:
    """Train the video encoder on ``source`` with the losses selected by ``cfg.hyper``.

    The plain text rows of actions ``0 .. num_source_actions-1`` form the
    training label space. Auxiliary losses (and suffix sampling) are skipped
    when both of their weights are zero, unless ``cfg.log_unweighted_terms``.

    Raises:
        TrainingDivergedError: on a non-finite loss or parameter.
    """
    K = num_source_actions
    if cfg.pool_size > table.pool_size:
        raise ConfigError(f"pool_size {cfg.pool_size} exceeds the text table's {table.pool_size}", field="pool_size")
    if len(source) == 0:
        raise InvalidInputError("empty source set")
    D = source.frames.shape[2]
    params = init.copy() if init is not None else init_encoder(
        D, table.embed_dim, cfg.encoder_arch, cfg.hidden_dim, cfg.init_std, cfg.seed)
    if params.embed_dim != table.embed_dim:
        raise InvalidInputError("encoder output dim does not match the text embedding dim")

    plain = table.plain(np.arange(K))
    checksum = table.checksum()
    hyper = cfg.hyper
    use_aux = hyper.uses_aux or cfg.log_unweighted_terms
    shuffle_rng = make_rng(cfg.seed, "shuffle")
    suffix_rng = make_rng(cfg.seed, "suffixes")
    opt = AdamW(params.size, cfg.learning_rate, cfg.weight_decay, cfg.betas, cfg.eps)
    theta = params.flatten()
    swa = SwaState()
    swa_from = cfg.swa.first_epoch(cfg.epochs)
    empty_scene = np.zeros((K, 0, table.embed_dim))
    n = len(source)
    log: list[dict] = []
    step = 0

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            frames, labels = source.frames[idx], source.actions[idx]
            scene = empty_scene
            if use_aux:
                if cfg.suffix_sampling == "per_batch":
                    picks = suffix_rng.choice(cfg.pool_size, size=cfg.num_suffixes, replace=False)
                    scene = table.scene_grid(np.arange(K), picks)
                else:
                    scene = np.stack([table.scene(int(y), suffix_rng.choice(cfg.pool_size, size=cfg.num_suffixes,
                                                                             replace=False)) for y in labels])
            emb = encode_batch(params, frames)
            bl = batch_loss(emb, plain, labels, scene, hyper, kernel=kernel)
            step += 1
            if not np.isfinite(bl.l_total):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step}: "
                    f"l_vta={bl.l_vta}, l_scene={bl.l_scene}, l_action={bl.l_action}")
            log.append({"step": step, "l_vta": bl.l_vta, "l_scene": bl.l_scene,
                        "l_action": bl.l_action, "l_total": bl.l_total})
            grads = encode_batch_backward(params, frames, bl.grad_embeddings)
            theta = opt.step(theta, _flat_grads(params, grads))
            if not np.all(np.isfinite(theta)):
                raise TrainingDivergedError(f"non-finite parameters after step {step}")
            params = params.with_flat(theta)
            if cfg.swa.enabled and cfg.swa.interval_steps and epoch >= swa_from and step % cfg.swa.interval_steps == 0:
                swa = swa_absorb(swa, theta)
        if cfg.swa.enabled and not cfg.swa.interval_steps and epoch >= swa_from:
            swa = swa_absorb(swa, theta)

    if table.checksum() != checksum:
        raise SataError("text embedding table changed during training")
    final = params.with_flat(swa.mean) if swa.count else params
    return TrainResult(final, params, swa, log)
