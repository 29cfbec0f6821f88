"""Synthetic cross-domain open-vocabulary benchmark.

The world is an additive feature model: every frame of a video is

    action_vector[k] + scene_mix * scene_vector[s] + noise_std * N(0, I)

Action and scene concepts live in orthogonal subspaces, except that each action
concept leans toward its preferred scene ``k mod num_scenes`` by a small cosine
(``scene_leak``). Action concepts share a common direction (``action_coherence``)
so that actions are confusable, the way CLIP text embeddings of actions are.
The source domain pairs actions with their preferred scene with probability
``bias_strength``; target domains break that pairing.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, InvalidInputError, SataError, make_rng

SCHEMA_VERSION = 1
MAX_CROSS_COSINE = 0.1
SOURCE_DOMAIN_ID = 0

SCENE_RULES = ("anti_biased", "uniform", "biased")

ACTION_NAMES = (
    "abseiling", "jumping", "running", "walking", "climbing", "swimming", "dancing",
    "cooking", "reading", "writing", "drinking", "eating", "kicking a ball", "throwing",
    "catching", "hugging", "waving", "clapping", "cycling", "skating",
)


class WorldBuildError(SataError):
    code = "world_build_error"


class UnknownDomainError(SataError, KeyError):
    code = "unknown_domain"


class DatasetFormatError(SataError):
    code = "dataset_format_error"


class DatasetNotFoundError(DatasetFormatError):
    code = "dataset_not_found"


@dataclass(frozen=True)
class DomainSpec:
    name: str
    rule: str
    closed: tuple[int, ...]
    open: tuple[int, ...]

    @property
    def categories(self) -> tuple[int, ...]:
        return tuple(sorted(self.closed + self.open))


def default_domains() -> tuple[DomainSpec, ...]:
    return (
        DomainSpec("anti_biased", "anti_biased", tuple(range(0, 9)), (12, 13, 14)),
        DomainSpec("mixed", "uniform", tuple(range(6, 12)), tuple(range(12, 18))),
        DomainSpec("open_heavy", "anti_biased", tuple(range(8, 12)), tuple(range(12, 20))),
    )


@dataclass(frozen=True)
class WorldConfig:
    latent_dim: int = 64
    num_actions_total: int = 20
    num_source_actions: int = 12
    num_scenes: int = 10
    frames_per_video: int = 8
    bias_strength: float = 0.9
    noise_std: float = 0.3
    scene_mix: float = 1.0
    action_coherence: float = 0.9
    scene_leak: float = 0.1
    text_scene_mix: float = 0.75
    source_count: int = 4000
    target_count: int = 2000
    domains: tuple[DomainSpec, ...] = field(default_factory=default_domains)
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, name: str, msg: str):
            if not ok:
                raise ConfigError(f"{name}: {msg}", field=name)

        for name in ("latent_dim", "num_actions_total", "num_source_actions", "frames_per_video",
                     "source_count", "target_count"):
            need(isinstance(getattr(self, name), int) and getattr(self, name) >= 1, name, "must be a positive integer")
        need(isinstance(self.num_scenes, int) and self.num_scenes >= 1, "num_scenes", "must be a positive integer")
        need(self.num_source_actions <= self.num_actions_total, "num_source_actions",
             "cannot exceed num_actions_total")
        need(0.0 <= self.bias_strength <= 1.0, "bias_strength", f"must lie in [0, 1], got {self.bias_strength}")
        need(self.noise_std >= 0.0, "noise_std", "must be >= 0")
        need(self.scene_mix >= 0.0, "scene_mix", "must be >= 0")
        need(self.text_scene_mix >= 0.0, "text_scene_mix", "must be >= 0")
        need(0.0 <= self.action_coherence < 1.0, "action_coherence", "must lie in [0, 1)")
        need(0.0 <= self.scene_leak <= MAX_CROSS_COSINE, "scene_leak", f"must lie in [0, {MAX_CROSS_COSINE}]")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
        names = set()
        K, A = self.num_source_actions, self.num_actions_total
        for i, d in enumerate(self.domains):
            where = f"domains[{i}]"
            need(d.name not in names, where, f"duplicate domain name {d.name!r}")
            names.add(d.name)
            need(d.rule in SCENE_RULES, where + ".rule", f"must be one of {SCENE_RULES}")
            need(len(d.closed) + len(d.open) > 0, where, "has no categories")
            need(all(0 <= k < K for k in d.closed), where + ".closed", "closed-set categories must be source categories")
            need(all(K <= k < A for k in d.open), where + ".open", "open-set categories must not be source categories")
            need(len(set(d.categories)) == len(d.categories), where, "repeated category")

    def preferred_scene(self, k: int) -> int:
        return k % self.num_scenes

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["domains"] = [
            {"name": d.name, "rule": d.rule, "closed": list(d.closed), "open": list(d.open)} for d in self.domains
        ]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WorldConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown world config key {unknown[0]!r}", field=unknown[0])
        if "domains" in data:
            doms = []
            for i, d in enumerate(data["domains"]):
                extra = sorted(set(d) - {"name", "rule", "closed", "open"})
                if extra:
                    raise ConfigError(f"unknown key {extra[0]!r} in domains[{i}]", field=f"domains[{i}].{extra[0]}")
                doms.append(DomainSpec(str(d["name"]), str(d.get("rule", "anti_biased")),
                                       tuple(int(k) for k in d.get("closed", ())),
                                       tuple(int(k) for k in d.get("open", ()))))
            data["domains"] = tuple(doms)
        return cls(**data)


@dataclass(frozen=True)
class ConceptBank:
    action_vectors: np.ndarray  # (num_actions_total, D), unit rows
    scene_vectors: np.ndarray  # (num_scenes, D), unit rows

    def max_cross_cosine(self) -> float:
        return float(np.abs(self.action_vectors @ self.scene_vectors.T).max())


@dataclass(frozen=True)
class DomainManifest:
    domain_id: int
    name: str
    rule: str
    categories: tuple[int, ...]
    closed_flags: tuple[bool, ...]

    def is_closed(self, k: int) -> bool:
        return self.closed_flags[self.categories.index(k)]

    @property
    def closed(self) -> tuple[int, ...]:
        return tuple(k for k, c in zip(self.categories, self.closed_flags) if c)

    @property
    def open(self) -> tuple[int, ...]:
        return tuple(k for k, c in zip(self.categories, self.closed_flags) if not c)


@dataclass(frozen=True)
class VideoSample:
    frames: np.ndarray  # (T, D)
    action_label: int
    scene_label: int
    domain_id: int


@dataclass(frozen=True)
class VideoSet:
    """A batch of videos from one domain, stored column-wise."""

    frames: np.ndarray  # (n, T, D)
    actions: np.ndarray  # (n,) int64
    scenes: np.ndarray  # (n,) int64
    domain_id: int

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> VideoSample:
        return VideoSample(self.frames[i], int(self.actions[i]), int(self.scenes[i]), self.domain_id)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_samples(cls, samples: Sequence[VideoSample]) -> "VideoSet":
        if not samples:
            raise InvalidInputError("no samples")
        return cls(np.stack([s.frames for s in samples]),
                   np.array([s.action_label for s in samples], dtype=np.int64),
                   np.array([s.scene_label for s in samples], dtype=np.int64),
                   samples[0].domain_id)


@dataclass(frozen=True)
class World:
    config: WorldConfig
    bank: ConceptBank
    manifests: tuple[DomainManifest, ...]

    @property
    def action_names(self) -> tuple[str, ...]:
        return action_names(self.config.num_actions_total)

    def manifest(self, domain_id: int) -> DomainManifest:
        for m in self.manifests:
            if m.domain_id == domain_id:
                return m
        raise UnknownDomainError(f"unknown domain id {domain_id}")


def action_names(n: int) -> tuple[str, ...]:
    if n <= len(ACTION_NAMES):
        return ACTION_NAMES[:n]
    return ACTION_NAMES + tuple(f"doing action {i}" for i in range(len(ACTION_NAMES), n))


def build_world(cfg: WorldConfig, max_retries: int = 64) -> World:
    """Draw the concept bank and the target-domain manifests for ``cfg``.

    Banks are redrawn until every invariant holds: action/scene cross-cosines
    within ``MAX_CROSS_COSINE``, distinct actions, and each scene-encoded text
    prompt closer to its own action's plain prompt than to any other.

    Raises:
        WorldBuildError: when the latent space cannot host the scene subspace
            and a common action direction, or no draw meets the invariants.
    """
    D, A, M = cfg.latent_dim, cfg.num_actions_total, cfg.num_scenes
    if M < 1:
        raise WorldBuildError("world needs at least one scene")
    if D < M + 2:
        raise WorldBuildError(f"latent_dim={D} too small for {M} scenes orthogonal to the action subspace")
    rng = make_rng(cfg.seed, "bank")
    for _ in range(max_retries):
        bank = _draw_bank(cfg, rng)
        if _bank_ok(bank, cfg):
            break
    else:
        raise WorldBuildError(
            f"could not satisfy concept-bank invariants in {max_retries} attempts (latent_dim={D}): "
            f"|action . scene| <= {MAX_CROSS_COSINE}, distinct actions, and every scene-encoded prompt closest to "
            f"its own action; lowering text_scene_mix, scene_leak or action_coherence helps")
    manifests = tuple(
        DomainManifest(i + 1, d.name, d.rule, d.categories, tuple(k in d.closed for k in d.categories))
        for i, d in enumerate(cfg.domains)
    )
    return World(cfg, bank, manifests)


def _draw_bank(cfg: WorldConfig, rng: np.random.Generator) -> ConceptBank:
    D, A, M = cfg.latent_dim, cfg.num_actions_total, cfg.num_scenes
    q, r = np.linalg.qr(rng.standard_normal((D, D)))
    q = q * np.sign(np.diag(r))  # unique QR
    scenes = q[:, :M].T.copy()
    common = q[:, M]
    rest = q[:, M + 1:]
    cores = rng.standard_normal((A, rest.shape[1])) @ rest.T
    cores /= np.linalg.norm(cores, axis=1, keepdims=True)
    c = cfg.action_coherence
    actions = np.sqrt(c) * common + np.sqrt(1.0 - c) * cores
    actions /= np.linalg.norm(actions, axis=1, keepdims=True)
    leak = cfg.scene_leak
    pref = np.arange(A) % M
    actions = np.sqrt(1.0 - leak * leak) * actions + leak * scenes[pref]
    actions /= np.linalg.norm(actions, axis=1, keepdims=True)
    return ConceptBank(actions, scenes)


def _bank_ok(bank: ConceptBank, cfg: WorldConfig) -> bool:
    a = bank.action_vectors
    if not np.all(np.isfinite(a)):
        return False
    if bank.max_cross_cosine() > MAX_CROSS_COSINE + 1e-12:
        return False
    gram = a @ a.T
    np.fill_diagonal(gram, -1.0)
    if gram.max() >= 1.0 - 1e-6:
        return False
    return prompt_margin(bank, cfg.text_scene_mix) > 0.0


def prompt_margin(bank: ConceptBank, text_scene_mix: float) -> float:
    """Smallest gap, over actions y and scenes m, between the cosine of the
    scene-encoded prompt (y, m) to its own plain prompt and to the closest other one."""
    a, s = bank.action_vectors, bank.scene_vectors
    A = len(a)
    if A < 2:
        return np.inf
    mixed = a[:, None, :] + text_scene_mix * s[None, :, :]
    mixed /= np.linalg.norm(mixed, axis=2, keepdims=True)  # (A, M, D)
    cos = np.einsum("ymd,kd->ymk", mixed, a)
    own = cos[np.arange(A), :, np.arange(A)]  # (A, M)
    cos[np.arange(A), :, np.arange(A)] = -np.inf
    return float((own - cos.max(axis=2)).min())


def _render(cfg: WorldConfig, bank: ConceptBank, actions, scenes, rng) -> np.ndarray:
    n = len(actions)
    base = bank.action_vectors[actions] + cfg.scene_mix * bank.scene_vectors[scenes]
    noise = rng.standard_normal((n, cfg.frames_per_video, cfg.latent_dim))
    return base[:, None, :] + cfg.noise_std * noise


def _other_scene(cfg: WorldConfig, preferred: np.ndarray, rng) -> np.ndarray:
    M = cfg.num_scenes
    if M == 1:
        return preferred.copy()
    return (preferred + rng.integers(1, M, size=len(preferred))) % M


def sample_source(cfg: WorldConfig, bank: ConceptBank, count: int, rng: np.random.Generator) -> VideoSet:
    """Biased source videos: action uniform over source categories, preferred scene w.p. ``bias_strength``."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    actions = rng.integers(0, cfg.num_source_actions, size=count)
    pref = actions % cfg.num_scenes
    keep = rng.random(count) < cfg.bias_strength
    scenes = np.where(keep, pref, _other_scene(cfg, pref, rng))
    frames = _render(cfg, bank, actions, scenes, rng)
    return VideoSet(frames, actions.astype(np.int64), scenes.astype(np.int64), SOURCE_DOMAIN_ID)


def sample_target(cfg: WorldConfig, bank: ConceptBank, domain_id: int, count: int,
                  rng: np.random.Generator) -> VideoSet:
    """Target videos for domain ``domain_id`` (1-based, in config order)."""
    if not 1 <= domain_id <= len(cfg.domains):
        raise UnknownDomainError(f"unknown domain id {domain_id}")
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    spec = cfg.domains[domain_id - 1]
    cats = np.array(spec.categories, dtype=np.int64)
    actions = cats[rng.integers(0, len(cats), size=count)]
    pref = actions % cfg.num_scenes
    if spec.rule == "anti_biased":
        scenes = _other_scene(cfg, pref, rng)
    elif spec.rule == "uniform":
        scenes = rng.integers(0, cfg.num_scenes, size=count)
    else:
        keep = rng.random(count) < cfg.bias_strength
        scenes = np.where(keep, pref, _other_scene(cfg, pref, rng))
    frames = _render(cfg, bank, actions, scenes, rng)
    return VideoSet(frames, actions.astype(np.int64), scenes.astype(np.int64), domain_id)


@dataclass(frozen=True)
class Dataset:
    world: World
    source: VideoSet
    targets: tuple[VideoSet, ...]

    def target(self, domain_id: int) -> VideoSet:
        for t in self.targets:
            if t.domain_id == domain_id:
                return t
        raise UnknownDomainError(f"unknown domain id {domain_id}")


def generate(cfg: WorldConfig) -> Dataset:
    """World plus source and target videos; a pure function of ``cfg`` (seed included)."""
    world = build_world(cfg)
    source = sample_source(cfg, world.bank, cfg.source_count, make_rng(cfg.seed, "source"))
    targets = tuple(
        sample_target(cfg, world.bank, m.domain_id, cfg.target_count, make_rng(cfg.seed, "target", m.domain_id))
        for m in world.manifests
    )
    return Dataset(world, source, targets)


# -- on-disk layout ----------------------------------------------------------
#
#   manifest.json             schema_version, config echo, seed, domains, files
#   concepts/actions.npy      (num_actions_total, D) float64
#   concepts/scenes.npy       (num_scenes, D) float64
#   <split>/frames.npy        (n, T, D) float64, split = source | domain_<id>
#   <split>/labels.csv        header "index,action,scene"
#
# Every file is written deterministically, so the same config yields the same bytes.

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _save_npy(path: Path, arr: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.save(path, np.ascontiguousarray(arr, dtype="<f8"), allow_pickle=False)


def _save_labels(path: Path, vs: VideoSet) -> None:
    lines = ["index,action,scene"] + [f"{i},{a},{s}" for i, (a, s) in enumerate(zip(vs.actions, vs.scenes))]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _split_name(domain_id: int) -> str:
    return "source" if domain_id == SOURCE_DOMAIN_ID else f"domain_{domain_id}"


def save_dataset(ds: Dataset, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    _save_npy(out / "concepts/actions.npy", ds.world.bank.action_vectors)
    _save_npy(out / "concepts/scenes.npy", ds.world.bank.scene_vectors)
    for rel in ("concepts/actions.npy", "concepts/scenes.npy"):
        files[rel] = _sha256(out / rel)
    for vs in (ds.source,) + ds.targets:
        split = _split_name(vs.domain_id)
        _save_npy(out / split / "frames.npy", vs.frames)
        _save_labels(out / split / "labels.csv", vs)
        for rel in (f"{split}/frames.npy", f"{split}/labels.csv"):
            files[rel] = _sha256(out / rel)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "sata_lab.dataset",
        "seed": ds.world.config.seed,
        "config": ds.world.config.to_dict(),
        "action_names": list(ds.world.action_names),
        "domains": [
            {"domain_id": m.domain_id, "name": m.name, "rule": m.rule,
             "categories": list(m.categories), "closed": [bool(c) for c in m.closed_flags]}
            for m in ds.world.manifests
        ],
        "splits": {_split_name(vs.domain_id): {"domain_id": vs.domain_id, "count": len(vs)}
                   for vs in (ds.source,) + ds.targets},
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def _load_labels(path: Path) -> tuple[np.ndarray, np.ndarray]:
    rows = path.read_text(encoding="utf-8").splitlines()
    if not rows or rows[0] != "index,action,scene":
        raise DatasetFormatError(f"{path}: bad header")
    body = [r.split(",") for r in rows[1:] if r]
    arr = np.array(body, dtype=np.int64).reshape(-1, 3)
    if not np.array_equal(arr[:, 0], np.arange(len(arr))):
        raise DatasetFormatError(f"{path}: indices out of order")
    return arr[:, 1], arr[:, 2]


def load_dataset(path: str | Path, verify: bool = True) -> Dataset:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise DatasetNotFoundError(f"no dataset manifest at {mpath}")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION or manifest.get("kind") != "sata_lab.dataset":
        raise DatasetFormatError(f"{mpath}: unsupported dataset schema")
    if verify:
        for rel, digest in manifest["files"].items():
            if _sha256(root / rel) != digest:
                raise DatasetFormatError(f"{rel}: checksum mismatch")
    cfg = WorldConfig.from_dict(manifest["config"])
    bank = ConceptBank(np.load(root / "concepts/actions.npy"), np.load(root / "concepts/scenes.npy"))
    manifests = tuple(
        DomainManifest(d["domain_id"], d["name"], d["rule"], tuple(d["categories"]), tuple(d["closed"]))
        for d in manifest["domains"]
    )
    world = World(cfg, bank, manifests)
    sets = []
    for split, info in sorted(manifest["splits"].items(), key=lambda kv: kv[1]["domain_id"]):
        frames = np.load(root / split / "frames.npy")
        actions, scenes = _load_labels(root / split / "labels.csv")
        sets.append(VideoSet(frames, actions, scenes, int(info["domain_id"])))
    source = next(s for s in sets if s.domain_id == SOURCE_DOMAIN_ID)
    return Dataset(world, source, tuple(s for s in sets if s.domain_id != SOURCE_DOMAIN_ID))
