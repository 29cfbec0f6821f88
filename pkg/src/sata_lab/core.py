"""Shared numerical primitives: cosine similarity, log-sum-exp and seeded RNGs."""

from __future__ import annotations

import zlib

import numpy as np

#: Bit generator behind every :func:`make_rng` stream.
RNG_ALGORITHM = "PCG64"


class SataError(Exception):
    """Base class for all errors raised by this package.

    ``code`` is a short machine-parsable identifier that the CLI prints.
    """

    code = "error"


class InvalidInputError(SataError, ValueError):
    code = "invalid_input"


class ConfigError(SataError, ValueError):
    """A config value or schema problem; ``field`` names the offender."""

    code = "config_error"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


def as_vec(values) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise InvalidInputError(f"expected a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise InvalidInputError("vector has non-finite entries")
    return vec


def norm(a) -> float:
    return float(np.sqrt(np.dot(a, a)))


def normalize(a) -> np.ndarray:
    a = as_vec(a)
    n = norm(a)
    if n == 0.0:
        raise InvalidInputError("cannot normalize a zero-norm vector")
    return a / n


def cosine(a, b) -> float:
    """Cosine similarity of two vectors, clamped into [-1, 1].

    Raises:
        InvalidInputError: if either vector has zero norm or the shapes differ.
    """
    a = as_vec(a)
    b = as_vec(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    na, nb = norm(a), norm(b)
    if na == 0.0 or nb == 0.0:
        raise InvalidInputError("cosine similarity is undefined for zero-norm input")
    return float(min(1.0, max(-1.0, np.dot(a, b) / (na * nb))))


def cosine_rows(e: np.ndarray, texts: np.ndarray) -> np.ndarray:
    """Cosines between one vector ``e`` and every row of ``texts``."""
    e = as_vec(e)
    texts = np.atleast_2d(np.asarray(texts, dtype=np.float64))
    ne = norm(e)
    nt = np.sqrt(np.einsum("ij,ij->i", texts, texts))
    if ne == 0.0 or np.any(nt == 0.0):
        raise InvalidInputError("cosine similarity is undefined for zero-norm input")
    return np.clip(texts @ e / (nt * ne), -1.0, 1.0)


def log_sum_exp(xs) -> float:
    """``log(sum(exp(xs)))`` computed with a max shift."""
    xs = np.asarray(xs, dtype=np.float64).ravel()
    if xs.size == 0:
        raise InvalidInputError("log_sum_exp of an empty sequence")
    if not np.all(np.isfinite(xs)):
        raise InvalidInputError("log_sum_exp input must be finite")
    m = float(xs.max())
    return m + float(np.log(np.sum(np.exp(xs - m))))


def softmax(xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    z = np.exp(xs - xs.max())
    return z / z.sum()


def make_rng(seed: int, *stream: int | str) -> np.random.Generator:
    """A PCG64 generator for ``seed``, optionally split into a named sub-stream.

    Sub-streams (``make_rng(seed, "world")``, ``make_rng(seed, "sample", 3)``)
    are independent of each other and of the root stream, which is how
    parallel or per-purpose code must obtain randomness instead of sharing a
    generator.
    """
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise InvalidInputError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) < 2**64:
        raise InvalidInputError("seed must fit in an unsigned 64-bit integer")
    key = tuple(_stream_key(s) for s in stream)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def _stream_key(part: int | str) -> int:
    if isinstance(part, str):
        # crc32 is stable across interpreter runs, unlike hash()
        return zlib.crc32(part.encode("utf-8"))
    return int(part)
