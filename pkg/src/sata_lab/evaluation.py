"""Classification against plain prompts, per-domain accuracy reports and representation diagnostics."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import InvalidInputError, SataError
from .encoders import TextEmbeddingTable, VideoEncoderParams, encode_batch, encode_video
from .world import Dataset, DomainManifest, VideoSet

REPORT_SCHEMA_VERSION = 1
PROBE_RIDGE = 300.0


class LabelOutsideDomainError(SataError):
    code = "label_outside_domain"


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise InvalidInputError("zero-norm embedding")
    return x / n


def _sorted_candidates(candidates) -> np.ndarray:
    cands = np.unique(np.asarray(candidates, dtype=np.int64))  # sorted, so argmax ties go to the lowest index
    if cands.size == 0:
        raise InvalidInputError("empty candidate list")
    return cands


def predict_embeddings(embeddings: np.ndarray, table: TextEmbeddingTable, candidates) -> np.ndarray:
    """Category with the highest cosine to each embedding row, ties to the lowest index."""
    cands = _sorted_candidates(candidates)
    sims = _unit(np.atleast_2d(embeddings)) @ table.plain(cands).T
    return cands[np.argmax(sims, axis=1)]


def classify(params: VideoEncoderParams, table: TextEmbeddingTable, sample, candidates) -> int:
    return int(predict_embeddings(encode_video(params, sample)[None, :], table, candidates)[0])


def predict(params: VideoEncoderParams, table: TextEmbeddingTable, videos: VideoSet, candidates) -> np.ndarray:
    return predict_embeddings(encode_batch(params, videos.frames), table, candidates)


@dataclass(frozen=True)
class DomainReport:
    domain_id: int
    name: str
    acc_closed: float | None
    acc_open: float | None
    acc_all: float
    n_closed: int
    n_open: int
    correct_closed: int
    correct_open: int

    @property
    def n_total(self) -> int:
        return self.n_closed + self.n_open

    def to_dict(self) -> dict:
        return {"domain_id": self.domain_id, "name": self.name,
                "acc_closed": self.acc_closed, "acc_open": self.acc_open, "acc_all": self.acc_all,
                "n_closed": self.n_closed, "n_open": self.n_open,
                "correct_closed": self.correct_closed, "correct_open": self.correct_open}


def _pct(correct: int, total: int) -> float | None:
    return None if total == 0 else 100.0 * correct / total


def report_from_predictions(predictions, labels, manifest: DomainManifest) -> DomainReport:
    """Bucket each prediction by its label's closed/open flag and score the buckets.

    ``acc_all`` is correct/total over every sample, not the mean of the two buckets.
    An empty bucket is reported as ``None``.
    """
    pred = np.asarray(predictions, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    if pred.shape != lab.shape or lab.ndim != 1:
        raise InvalidInputError("predictions and labels must be 1-D arrays of equal length")
    if lab.size == 0:
        raise InvalidInputError("empty sample set")
    flags = dict(zip(manifest.categories, manifest.closed_flags))
    bad = [int(k) for k in np.unique(lab) if int(k) not in flags]
    if bad:
        raise LabelOutsideDomainError(f"label {bad[0]} is not a category of domain {manifest.domain_id}")
    closed = np.array([flags[int(k)] for k in lab], dtype=bool)
    ok = pred == lab
    nc, no = int(closed.sum()), int((~closed).sum())
    cc, co = int(ok[closed].sum()), int(ok[~closed].sum())
    return DomainReport(manifest.domain_id, manifest.name, _pct(cc, nc), _pct(co, no), _pct(cc + co, nc + no),
                        nc, no, cc, co)


def evaluate_domain(params: VideoEncoderParams, table: TextEmbeddingTable, samples: VideoSet,
                    manifest: DomainManifest) -> DomainReport:
    """Classify each video against the domain's category list and report C/O/A accuracy."""
    if samples.domain_id != manifest.domain_id:
        raise InvalidInputError(f"samples of domain {samples.domain_id} given with manifest {manifest.domain_id}")
    return report_from_predictions(predict(params, table, samples, manifest.categories), samples.actions, manifest)


def _mean_present(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


@dataclass(frozen=True)
class BenchmarkReport:
    domains: tuple[DomainReport, ...]
    diagnostics: dict = field(default_factory=dict)

    @property
    def avg_closed(self) -> float | None:
        return _mean_present(d.acc_closed for d in self.domains)

    @property
    def avg_open(self) -> float | None:
        return _mean_present(d.acc_open for d in self.domains)

    @property
    def avg_all(self) -> float:
        return _mean_present(d.acc_all for d in self.domains)

    def domain(self, domain_id: int) -> DomainReport:
        for d in self.domains:
            if d.domain_id == domain_id:
                return d
        raise KeyError(domain_id)

    def to_dict(self) -> dict:
        return {"schema_version": REPORT_SCHEMA_VERSION,
                "domains": [d.to_dict() for d in self.domains],
                "avg_closed": self.avg_closed, "avg_open": self.avg_open, "avg_all": self.avg_all,
                "diagnostics": dict(self.diagnostics)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        def cell(v):
            return "" if v is None else f"{v:.2f}"

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["domain", "C", "O", "A"])
        for d in self.domains:
            w.writerow([d.name, cell(d.acc_closed), cell(d.acc_open), cell(d.acc_all)])
        w.writerow(["AVG", cell(self.avg_closed), cell(self.avg_open), cell(self.avg_all)])
        return buf.getvalue()

    def write(self, out_dir: str | Path, stem: str = "report") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        jp, cp = out / f"{stem}.json", out / f"{stem}.csv"
        jp.write_text(self.to_json(), encoding="utf-8")
        cp.write_text(self.to_csv(), encoding="utf-8")
        return jp, cp


def ridge_scene_probe(embeddings: np.ndarray, scenes, ridge: float = PROBE_RIDGE) -> float:
    """Held-out accuracy of a ridge least-squares scene classifier.

    Rows are unit-normalised, the first half trains a one-hot regression
    with an intercept and the second half is scored by argmax.
    """
    X = _unit(np.asarray(embeddings, dtype=np.float64))
    y = np.asarray(scenes, dtype=np.int64)
    labels = np.unique(y)
    if labels.size < 2:
        raise InvalidInputError("scene probe needs at least two distinct scenes")
    n = len(X) // 2
    if n < 1 or len(X) - n < 1:
        raise InvalidInputError("scene probe needs at least two samples")
    Xa = np.hstack([X, np.ones((len(X), 1))])
    Y = (y[:n, None] == labels[None, :]).astype(np.float64)
    A = Xa[:n].T @ Xa[:n] + ridge * np.eye(Xa.shape[1])
    beta = np.linalg.solve(A, Xa[:n].T @ Y)
    pred = labels[np.argmax(Xa[n:] @ beta, axis=1)]
    return float(np.mean(pred == y[n:]))


def scene_probe(params: VideoEncoderParams, samples: VideoSet, ridge: float = PROBE_RIDGE) -> float:
    """Lower means less scene information is linearly recoverable from the embeddings."""
    return ridge_scene_probe(encode_batch(params, samples.frames), samples.scenes, ridge)


def raw_scene_probe(samples: VideoSet, ridge: float = PROBE_RIDGE) -> float:
    """The same probe on time-averaged input features."""
    return ridge_scene_probe(samples.frames.mean(axis=1), samples.scenes, ridge)


def ordering_rate_embeddings(embeddings, labels, plain_texts, scene_texts) -> float:
    """Fraction of rows with s_pos > max_n s_scene_n and min_n s_scene_n > max_{k != y} s_neg_k.

    ``scene_texts`` is (B, N, E): the scene-encoded prompts of each row's own label.
    """
    E = _unit(np.atleast_2d(np.asarray(embeddings, dtype=np.float64)))
    y = np.asarray(labels, dtype=np.int64)
    S = np.asarray(scene_texts, dtype=np.float64)
    if S.ndim != 3 or S.shape[1] == 0:
        raise InvalidInputError("suffix set must be non-empty")
    c = E @ np.asarray(plain_texts, dtype=np.float64).T
    rows = np.arange(len(y))
    pos = c[rows, y]
    neg = c.copy()
    neg[rows, y] = -np.inf
    cs = np.einsum("be,bne->bn", E, S)
    return float(np.mean((pos > cs.max(axis=1)) & (cs.min(axis=1) > neg.max(axis=1))))


def ordering_rate(params: VideoEncoderParams, table: TextEmbeddingTable, samples: VideoSet, suffixes,
                  num_actions: int | None = None) -> float:
    """Ordering rate over ``samples`` with negatives drawn from actions ``0 .. num_actions-1``."""
    sfx = np.asarray(suffixes, dtype=np.int64)
    if sfx.size == 0:
        raise InvalidInputError("suffix set must be non-empty")
    K = int(samples.actions.max()) + 1 if num_actions is None else num_actions
    scene = table.scene_grid(np.arange(K), sfx)[samples.actions]
    return ordering_rate_embeddings(encode_batch(params, samples.frames), samples.actions,
                                    table.plain(np.arange(K)), scene)


def evaluate_benchmark(params: VideoEncoderParams, table: TextEmbeddingTable, dataset: Dataset,
                       diagnostics: bool = True) -> BenchmarkReport:
    """Per-domain reports over every target split, plus scene-probe and ordering diagnostics on the source."""
    reports = tuple(evaluate_domain(params, table, dataset.target(m.domain_id), m) for m in dataset.world.manifests)
    diag = {}
    if diagnostics:
        src = dataset.source
        K = dataset.world.config.num_source_actions
        diag = {"scene_probe": scene_probe(params, src),
                "scene_probe_raw": raw_scene_probe(src),
                "ordering_rate": ordering_rate(params, table, src, np.arange(table.pool_size), K)}
    return BenchmarkReport(reports, diag)
