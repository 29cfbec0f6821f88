"""Plain and scene-encoded text prompts, and the scene-suffix pool they draw on."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import InvalidInputError, SataError

TEMPLATE_PREFIX = "a video of a person "


class PoolFileError(SataError):
    code = "pool_file_error"


class PoolNotFoundError(PoolFileError, FileNotFoundError):
    code = "pool_not_found"


class DuplicateSuffixError(PoolFileError, ValueError):
    code = "duplicate_suffix"

    def __init__(self, suffix: str, line: int):
        super().__init__(f"duplicate scene suffix {suffix!r} on line {line}")
        self.suffix = suffix
        self.line = line


class EmptyPoolError(PoolFileError, ValueError):
    code = "empty_pool"


def normalize_suffix(text: str) -> str:
    return " ".join(text.lower().split())


@dataclass(frozen=True)
class SceneSuffixPool:
    suffixes: tuple[str, ...]

    def __post_init__(self):
        if not self.suffixes:
            raise EmptyPoolError("scene suffix pool is empty")
        seen = set()
        for i, s in enumerate(self.suffixes):
            key = normalize_suffix(s)
            if key in seen:
                raise DuplicateSuffixError(s, i + 1)
            seen.add(key)

    def __len__(self) -> int:
        return len(self.suffixes)

    def __getitem__(self, i: int) -> str:
        return self.suffixes[i]

    def head(self, size: int) -> "SceneSuffixPool":
        """The first ``size`` suffixes, used by pool-size sweeps."""
        if not 1 <= size <= len(self):
            raise InvalidInputError(f"pool size {size} outside [1, {len(self)}]")
        return SceneSuffixPool(self.suffixes[:size])


@dataclass(frozen=True)
class PromptText:
    text: str
    kind: str  # "plain" or "scene_encoded"
    action_index: int
    suffix_index: int | None = None

    def __post_init__(self):
        if self.kind not in ("plain", "scene_encoded"):
            raise InvalidInputError(f"unknown prompt kind {self.kind!r}")
        if (self.kind == "scene_encoded") != (self.suffix_index is not None):
            raise InvalidInputError("scene_encoded prompts need a suffix index, plain ones must not have one")
        if not self.text.endswith("."):
            raise InvalidInputError("prompt text must end with '.'")


def _check_phrase(value: str, what: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise InvalidInputError(f"{what} must be a non-empty string")
    if value.rstrip().endswith("."):
        raise InvalidInputError(f"{what} must not end with a period: {value!r}")
    return value.strip()


def plain_prompt(action_name: str, action_index: int = 0) -> PromptText:
    name = _check_phrase(action_name, "action name")
    return PromptText(TEMPLATE_PREFIX + name + ".", "plain", action_index)


def scene_prompt(action_name: str, suffix: str, action_index: int = 0, suffix_index: int = 0) -> PromptText:
    name = _check_phrase(action_name, "action name")
    suffix = _check_phrase(suffix, "scene suffix")
    return PromptText(f"{TEMPLATE_PREFIX}{name} {suffix}.", "scene_encoded", action_index, suffix_index)


def sample_suffixes(pool: SceneSuffixPool | int, n: int, rng: np.random.Generator) -> list[int]:
    """Draw ``n`` distinct suffix indices uniformly without replacement."""
    size = pool if isinstance(pool, int) else len(pool)
    if not 1 <= n <= size:
        raise InvalidInputError(f"cannot sample {n} suffixes from a pool of {size}")
    return [int(i) for i in rng.choice(size, size=n, replace=False)]


def load_pool(path: str | Path) -> SceneSuffixPool:
    """Read a suffix pool file (UTF-8, one suffix per line, ``#`` comments).

    Suffixes are lowercased and whitespace-collapsed; file order is kept.
    """
    path = Path(path)
    if not path.is_file():
        raise PoolNotFoundError(f"scene suffix pool not found: {path}")
    return _parse_pool(path.read_text(encoding="utf-8"))


def _parse_pool(text: str) -> SceneSuffixPool:
    suffixes: list[str] = []
    first_line: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.endswith("."):
            raise PoolFileError(f"line {lineno}: suffix must not end with a period")
        suffix = normalize_suffix(line)
        if suffix in first_line:
            raise DuplicateSuffixError(suffix, lineno)
        first_line[suffix] = lineno
        suffixes.append(suffix)
    if not suffixes:
        raise EmptyPoolError("scene suffix pool file has no entries")
    return SceneSuffixPool(tuple(suffixes))


def default_pool() -> SceneSuffixPool:
    """The bundled 300-entry pool."""
    text = resources.files("sata_lab").joinpath("data/scene_suffixes.txt").read_text(encoding="utf-8")
    return _parse_pool(text)


class PromptFactory:
    """Builds every prompt for a fixed action vocabulary and suffix pool.

    Also inverts them: :meth:`parse` maps prompt text back to indices.
    """

    def __init__(self, action_names: Sequence[str], pool: SceneSuffixPool):
        self.action_names = tuple(_check_phrase(a, "action name") for a in action_names)
        if len(set(self.action_names)) != len(self.action_names):
            raise InvalidInputError("action names must be unique")
        self.pool = pool
        self._actions = {name: i for i, name in enumerate(self.action_names)}
        self._suffixes = {s: i for i, s in enumerate(pool.suffixes)}

    def plain(self, k: int) -> PromptText:
        return plain_prompt(self.action_names[k], k)

    def scene(self, k: int, n: int) -> PromptText:
        return scene_prompt(self.action_names[k], self.pool[n], k, n)

    def parse(self, text: str) -> tuple[int, int | None]:
        if not (text.startswith(TEMPLATE_PREFIX) and text.endswith(".")):
            raise InvalidInputError(f"not a prompt of this factory: {text!r}")
        body = text[len(TEMPLATE_PREFIX):-1]
        if body in self._actions:
            return self._actions[body], None
        # longest action name first so "jumping jacks" is not read as "jumping"
        for name in sorted(self._actions, key=len, reverse=True):
            if body.startswith(name + " "):
                rest = body[len(name) + 1:]
                if rest in self._suffixes:
                    return self._actions[name], self._suffixes[rest]
        raise InvalidInputError(f"prompt does not match any action/suffix pair: {text!r}")
