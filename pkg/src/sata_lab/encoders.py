"""Trainable per-frame video encoder with mean pooling, and the frozen text encoder."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InvalidInputError, SataError, make_rng
from .prompts import PromptText
from .world import ConceptBank, VideoSample, World

ARCHS = ("linear", "mlp")
CHECKPOINT_FORMAT = "sata_lab.checkpoint"
CHECKPOINT_VERSION = 1


class ShapeMismatchError(SataError, ValueError):
    code = "shape_mismatch"


class CheckpointError(SataError):
    code = "checkpoint_error"


@dataclass
class VideoEncoderParams:
    """Parameters of the per-frame map phi: R^D -> R^E.

    ``linear``: phi(f) = W f + b.
    ``mlp``:    phi(f) = W2 tanh(W1 f + b1) + b2.
    """

    arch: str
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise InvalidInputError(f"unknown encoder arch {self.arch!r}")
        expected = ("W", "b") if self.arch == "linear" else ("W1", "b1", "W2", "b2")
        if tuple(self.tensors) != expected:
            raise InvalidInputError(f"{self.arch} encoder expects tensors {expected}, got {tuple(self.tensors)}")
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise InvalidInputError(f"tensor {name} has non-finite entries")

    @property
    def input_dim(self) -> int:
        return self.tensors["W" if self.arch == "linear" else "W1"].shape[1]

    @property
    def embed_dim(self) -> int:
        return self.tensors["W" if self.arch == "linear" else "W2"].shape[0]

    def names(self) -> tuple[str, ...]:
        return tuple(self.tensors)

    def flatten(self) -> np.ndarray:
        return np.concatenate([t.ravel() for t in self.tensors.values()])

    def with_flat(self, flat: np.ndarray) -> "VideoEncoderParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.size:
            raise ShapeMismatchError(f"flat vector has {flat.size} entries, expected {self.size}")
        out, i = {}, 0
        for name, t in self.tensors.items():
            out[name] = flat[i:i + t.size].reshape(t.shape).copy()
            i += t.size
        return VideoEncoderParams(self.arch, out)

    @property
    def size(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "VideoEncoderParams":
        return VideoEncoderParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})


def init_encoder(input_dim: int, embed_dim: int | None = None, arch: str = "linear", hidden_dim: int | None = None,
                 init_std: float = 0.01, seed: int = 0) -> VideoEncoderParams:
    """Identity-plus-noise initialisation (``N(0, init_std^2)`` on every weight)."""
    E = input_dim if embed_dim is None else embed_dim
    rng = make_rng(seed, "encoder-init")
    if arch == "linear":
        W = np.eye(E, input_dim) + init_std * rng.standard_normal((E, input_dim))
        return VideoEncoderParams("linear", {"W": W, "b": np.zeros(E)})
    if arch == "mlp":
        H = input_dim if hidden_dim is None else hidden_dim
        W1 = np.eye(H, input_dim) + init_std * rng.standard_normal((H, input_dim))
        W2 = np.eye(E, H) + init_std * rng.standard_normal((E, H))
        return VideoEncoderParams("mlp", {"W1": W1, "b1": np.zeros(H), "W2": W2, "b2": np.zeros(E)})
    raise InvalidInputError(f"unknown encoder arch {arch!r}")


def _frames_of(sample) -> np.ndarray:
    frames = sample.frames if isinstance(sample, VideoSample) else sample
    return np.asarray(frames, dtype=np.float64)


def _check_frames(params: VideoEncoderParams, frames: np.ndarray) -> None:
    if frames.ndim != 3 or frames.shape[1] < 1 or frames.shape[2] != params.input_dim:
        raise ShapeMismatchError(
            f"frames of shape {frames.shape} do not fit an encoder with input dim {params.input_dim}")


def encode_batch(params: VideoEncoderParams, frames: np.ndarray) -> np.ndarray:
    """Embeddings ``(n, E)`` for frames ``(n, T, D)``: phi per frame, then the frame mean."""
    frames = np.asarray(frames, dtype=np.float64)
    _check_frames(params, frames)
    t = params.tensors
    if params.arch == "linear":
        # phi is affine, so mean-then-map equals map-then-mean exactly up to rounding
        return frames.mean(axis=1) @ t["W"].T + t["b"]
    h = np.tanh(frames @ t["W1"].T + t["b1"])
    return h.mean(axis=1) @ t["W2"].T + t["b2"]


def encode_video(params: VideoEncoderParams, sample) -> np.ndarray:
    frames = _frames_of(sample)
    if frames.ndim != 2:
        raise ShapeMismatchError(f"expected (T, D) frames, got shape {frames.shape}")
    return encode_batch(params, frames[None])[0]


def encode_batch_backward(params: VideoEncoderParams, frames: np.ndarray, upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients of ``sum_i upstream[i] . e_i`` (the chain rule through phi and pooling)."""
    frames = np.asarray(frames, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    _check_frames(params, frames)
    if upstream.shape != (frames.shape[0], params.embed_dim):
        raise ShapeMismatchError(f"upstream gradient shape {upstream.shape} != {(frames.shape[0], params.embed_dim)}")
    t = params.tensors
    if params.arch == "linear":
        xbar = frames.mean(axis=1)
        return {"W": upstream.T @ xbar, "b": upstream.sum(axis=0)}
    T = frames.shape[1]
    h = np.tanh(frames @ t["W1"].T + t["b1"])  # (n, T, H)
    dpre = (upstream @ t["W2"])[:, None, :] * (1.0 - h * h) / T  # (n, T, H)
    return {"W1": np.einsum("nth,ntd->hd", dpre, frames), "b1": dpre.sum(axis=(0, 1)),
            "W2": upstream.T @ h.mean(axis=1), "b2": upstream.sum(axis=0)}


def encode_video_backward(params: VideoEncoderParams, sample, upstream_grad) -> dict[str, np.ndarray]:
    frames = _frames_of(sample)
    if frames.ndim != 2:
        raise ShapeMismatchError(f"expected (T, D) frames, got shape {frames.shape}")
    g = np.asarray(upstream_grad, dtype=np.float64)
    if g.shape != (params.embed_dim,):
        raise ShapeMismatchError(f"upstream gradient shape {g.shape} != ({params.embed_dim},)")
    return encode_batch_backward(params, frames[None], g[None])


# -- checkpoints -------------------------------------------------------------
#
# Layout: one UTF-8 JSON header line terminated by '\n', then the tensors as raw
# little-endian float64 in header order. The header lists arch, and per tensor
# its name, shape and byte offset into the data block.

def save_checkpoint(params: VideoEncoderParams, path: str | Path, extra: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    for name, t in params.tensors.items():
        entries.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.size * 8
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "arch": params.arch,
              "dtype": "<f8", "tensors": entries, "extra": extra or {}}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for t in params.tensors.values():
            fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    return path


def load_checkpoint(path: str | Path) -> tuple[VideoEncoderParams, dict]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    nl = raw.find(b"\n")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable checkpoint header") from exc
    if header.get("format") != CHECKPOINT_FORMAT or header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    data = raw[nl + 1:]
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        chunk = data[e["offset"]:e["offset"] + count * 8]
        if len(chunk) != count * 8:
            raise CheckpointError(f"{path}: truncated tensor {e['name']}")
        tensors[e["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(e["shape"]).astype(np.float64)
    return VideoEncoderParams(header["arch"], tensors), header.get("extra", {})


# -- frozen text side --------------------------------------------------------

class TextEmbeddingTable:
    """Frozen text encoder over a concept bank.

    Plain prompt for action ``k``: ``normalize(action_vector[k])``.
    Scene-encoded prompt ``(k, n)``: ``normalize(action_vector[k] + text_scene_mix * scene_vector[n mod M])``;
    suffix ``n`` of the pool names scene concept ``n mod M``.
    """

    def __init__(self, bank: ConceptBank, pool_size: int, text_scene_mix: float = 1.0):
        if pool_size < 1:
            raise InvalidInputError("pool_size must be >= 1")
        a = bank.action_vectors
        self.text_scene_mix = float(text_scene_mix)
        self.pool_size = int(pool_size)
        self.num_scenes = bank.scene_vectors.shape[0]
        self._plain = a / np.linalg.norm(a, axis=1, keepdims=True)
        self._suffix_scene = np.arange(self.pool_size) % self.num_scenes
        mixed = a[:, None, :] + self.text_scene_mix * bank.scene_vectors[self._suffix_scene][None, :, :]
        self._scene = mixed / np.linalg.norm(mixed, axis=2, keepdims=True)  # (A, P, E)
        self._plain.setflags(write=False)
        self._scene.setflags(write=False)

    @classmethod
    def for_world(cls, world: World, pool_size: int) -> "TextEmbeddingTable":
        return cls(world.bank, pool_size, world.config.text_scene_mix)

    @property
    def num_actions(self) -> int:
        return self._plain.shape[0]

    @property
    def embed_dim(self) -> int:
        return self._plain.shape[1]

    def plain(self, categories=None) -> np.ndarray:
        """Plain-prompt embeddings, optionally restricted to ``categories`` (rows in that order)."""
        if categories is None:
            return self._plain
        return self._plain[self._check_actions(categories)]

    def scene(self, action: int, suffixes) -> np.ndarray:
        """Scene-encoded embeddings ``(len(suffixes), E)`` for one action."""
        k = self._check_actions([action])[0]
        return self._scene[k, self._check_suffixes(suffixes)]

    def scene_grid(self, actions, suffixes) -> np.ndarray:
        """``(len(actions), len(suffixes), E)`` block of scene-encoded embeddings."""
        return self._scene[np.ix_(self._check_actions(actions), self._check_suffixes(suffixes))]

    def suffix_scene(self, n: int) -> int:
        return int(self._suffix_scene[self._check_suffixes([n])[0]])

    def _check_actions(self, ks) -> np.ndarray:
        ks = np.asarray(ks, dtype=np.int64).ravel()
        if ks.size and (ks.min() < 0 or ks.max() >= self.num_actions):
            raise InvalidInputError(f"action index out of range [0, {self.num_actions})")
        return ks

    def _check_suffixes(self, ns) -> np.ndarray:
        ns = np.asarray(ns, dtype=np.int64).ravel()
        if ns.size and (ns.min() < 0 or ns.max() >= self.pool_size):
            raise InvalidInputError(f"suffix index out of range [0, {self.pool_size})")
        return ns

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self._plain.tobytes())
        h.update(self._scene.tobytes())
        return h.hexdigest()


def encode_text(table: TextEmbeddingTable, prompt: PromptText) -> np.ndarray:
    if prompt.kind == "plain":
        return table.plain([prompt.action_index])[0].copy()
    return table.scene(prompt.action_index, [prompt.suffix_index])[0].copy()
