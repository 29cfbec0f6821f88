"""Video-text alignment, scene-aware and action-aware discrimination losses.

For one video embedding ``e`` with ground truth ``y``, ``s(., .)`` the cosine:

* ``l_vta``    = -log softmax_k( s(e, t_k) / tau )[y]                        over K plain prompts
* ``l_scene``  = -log( exp s(e, t_y) / (exp s(e, t_y) + sum_n exp s(e, t~_{y,n})) )
* ``l_action`` = mean over (n, k != y) of max(0, delta - s(e, t~_{y,n}) + s(e, t_k))
* ``l_total``  = l_vta + lambda_scene * l_scene + lambda_action * l_action

``t~_{y,n}`` is the scene-encoded prompt of the ground-truth action with suffix n.
The scene and action terms use raw cosines; ``aux_temperature`` (default 1)
divides them when set. A hinge exactly at its margin contributes zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import InvalidInputError, as_vec, cosine_rows, norm


@dataclass(frozen=True)
class LossHyper:
    tau: float = 0.01
    delta: float = 0.5
    lambda_scene: float = 0.2
    lambda_action: float = 0.2
    aux_temperature: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidInputError("tau must be > 0")
        if not self.aux_temperature > 0:
            raise InvalidInputError("aux_temperature must be > 0")
        for name in ("delta", "lambda_scene", "lambda_action"):
            if not getattr(self, name) >= 0:
                raise InvalidInputError(f"{name} must be >= 0")

    @property
    def uses_aux(self) -> bool:
        return self.lambda_scene > 0 or self.lambda_action > 0


@dataclass(frozen=True)
class SimilarityRow:
    """Cosines of one video embedding to its texts.

    ``s_neg`` holds the K-1 non-ground-truth plain prompts, ``s_scene`` the N
    scene-encoded prompts of the ground truth.
    """

    s_pos: float
    s_neg: np.ndarray
    s_scene: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "s_neg", np.asarray(self.s_neg, dtype=np.float64).ravel())
        object.__setattr__(self, "s_scene", np.asarray(self.s_scene, dtype=np.float64).ravel())
        vals = np.concatenate([[self.s_pos], self.s_neg, self.s_scene])
        if not np.all(np.isfinite(vals)) or np.any(np.abs(vals) > 1.0):
            raise InvalidInputError("similarities must be finite and lie in [-1, 1]")

    @property
    def K(self) -> int:
        return self.s_neg.size + 1

    @property
    def N(self) -> int:
        return self.s_scene.size


@dataclass(frozen=True)
class LossBreakdown:
    l_vta: float
    l_scene: float
    l_action: float
    l_total: float
    grad_e_x: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


def similarity_row(e_x, plain_texts, label: int, scene_texts) -> SimilarityRow:
    """Build the similarity row of ``e_x`` against K plain and N scene-encoded texts."""
    c = cosine_rows(e_x, plain_texts)
    if not 0 <= label < c.size:
        raise InvalidInputError(f"label {label} outside [0, {c.size})")
    scene_texts = np.asarray(scene_texts, dtype=np.float64)
    cs = cosine_rows(e_x, scene_texts) if scene_texts.size else np.zeros(0)
    return SimilarityRow(float(c[label]), np.delete(c, label), cs)


def _nll_first(u0: float, rest: np.ndarray) -> float:
    """-log softmax(u)[0] as log(1 + sum exp(rest - u0)); keeps precision when the loss is tiny."""
    d = np.asarray(rest, dtype=np.float64) - u0
    if d.size == 0:
        return 0.0
    m = float(d.max())
    if m <= 0.0:
        return float(np.log1p(np.exp(d).sum()))
    return m + float(np.log(np.exp(-m) + np.exp(d - m).sum()))


def loss_vta(sim: SimilarityRow, tau: float) -> float:
    if not tau > 0:
        raise InvalidInputError("tau must be > 0")
    return _nll_first(sim.s_pos / tau, sim.s_neg / tau)


def loss_scene(sim: SimilarityRow, temperature: float = 1.0) -> float:
    if sim.N == 0:
        return 0.0
    return _nll_first(sim.s_pos / temperature, sim.s_scene / temperature)


def loss_action(sim: SimilarityRow, delta: float, temperature: float = 1.0) -> float:
    if sim.N == 0 or sim.K < 2:
        raise InvalidInputError("loss_action needs at least one scene prompt and two categories")
    h = delta - (sim.s_scene[:, None] - sim.s_neg[None, :]) / temperature
    return float(np.maximum(h, 0.0).sum() / (sim.N * (sim.K - 1)))


def loss_values(sim: SimilarityRow, hyper: LossHyper) -> LossBreakdown:
    """Loss components from similarities alone (no gradient)."""
    lv = loss_vta(sim, hyper.tau)
    ls = loss_scene(sim, hyper.aux_temperature)
    la = loss_action(sim, hyper.delta, hyper.aux_temperature) if sim.N and sim.K > 1 else 0.0
    return LossBreakdown(lv, ls, la, lv + hyper.lambda_scene * ls + hyper.lambda_action * la)


def loss_total(e_x, plain_texts, label: int, scene_texts, hyper: LossHyper) -> LossBreakdown:
    """All loss components for one embedding, with the analytic gradient of ``l_total`` w.r.t. ``e_x``.

    ``plain_texts`` is (K, E) over the training label space; ``scene_texts`` is
    (N, E), the scene-encoded prompts of ``label``. Text rows are normalised here.
    """
    e = as_vec(e_x)
    P = _unit_rows(plain_texts, e.size)
    S = _unit_rows(scene_texts, e.size) if np.size(scene_texts) else np.zeros((0, e.size))
    if hyper.lambda_action > 0 and (len(S) == 0 or len(P) < 2):
        raise InvalidInputError("lambda_action > 0 needs at least one scene prompt and two categories")
    if not 0 <= label < len(P):
        raise InvalidInputError(f"label {label} outside [0, {len(P)})")
    if norm(e) == 0.0:
        raise InvalidInputError("cosine similarity is undefined for a zero-norm embedding")
    lv, ls, la, g = kernels._py.batch_loss_grad(
        e[None], np.array([label]), P, S[None], hyper.tau, hyper.delta,
        hyper.lambda_scene, hyper.lambda_action, hyper.aux_temperature)
    lv, ls, la = float(lv[0]), float(ls[0]), float(la[0])
    total = lv + hyper.lambda_scene * ls + hyper.lambda_action * la
    return LossBreakdown(lv, ls, la, total, g[0])


def term_gradients(e_x, plain_texts, label: int, scene_texts, hyper: LossHyper) -> dict[str, np.ndarray | None]:
    """Unweighted gradient of each loss term w.r.t. ``e_x``.

    Each term is a function of the cosines c_j = s(e_x, t_j), and
    dc_j/de = (t_j / |t_j| - c_j e/|e|) / |e|. ``action`` is None when undefined.
    """
    e = as_vec(e_x)
    P = _unit_rows(plain_texts, e.size)
    S = _unit_rows(scene_texts, e.size) if np.size(scene_texts) else np.zeros((0, e.size))
    ne = norm(e)
    if ne == 0.0:
        raise InvalidInputError("cosine similarity is undefined for a zero-norm embedding")
    eh = e / ne
    c = np.clip(P @ eh, -1.0, 1.0)
    cs = np.clip(S @ eh, -1.0, 1.0)

    def through_cosine(d_c, d_cs):
        return (d_c @ P + d_cs @ S - (d_c @ c + d_cs @ cs) * eh) / ne

    K, N, T = len(P), len(S), hyper.aux_temperature
    p = np.exp(c / hyper.tau - np.max(c / hyper.tau))
    p /= p.sum()
    p[label] -= 1.0
    out = {"vta": through_cosine(p / hyper.tau, np.zeros(N)), "scene": np.zeros(e.size), "action": None}
    if N:
        u = np.concatenate([[c[label]], cs]) / T
        q = np.exp(u - u.max())
        q /= q.sum()
        d_c = np.zeros(K)
        d_c[label] = (q[0] - 1.0) / T
        out["scene"] = through_cosine(d_c, q[1:] / T)
        if K > 1:
            active = hyper.delta - (cs[:, None] - c[None, :]) / T > 0.0
            active[:, label] = False
            w = 1.0 / (N * (K - 1) * T)
            out["action"] = through_cosine(active.sum(axis=0) * w, -active.sum(axis=1) * w)
    return out


def _unit_rows(x, dim: int) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != dim:
        raise InvalidInputError(f"text embeddings have dim {x.shape[1]}, expected {dim}")
    n = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(n == 0):
        raise InvalidInputError("zero-norm text embedding")
    return x / n


@dataclass(frozen=True)
class BatchLoss:
    """Batch-mean loss components; ``grad_embeddings[i]`` is d(mean l_total)/d(e_i)."""

    l_vta: float
    l_scene: float
    l_action: float
    l_total: float
    grad_embeddings: np.ndarray
    per_sample: tuple[np.ndarray, np.ndarray, np.ndarray]


def batch_loss(embeddings, plain_texts, labels, scene_texts, hyper: LossHyper, kernel=None) -> BatchLoss:
    """Arithmetic-mean loss over a batch, plus per-embedding upstream gradients.

    Args:
        embeddings: (B, E) video embeddings.
        plain_texts: (K, E) unit plain-prompt embeddings of the training label space.
        labels: (B,) indices into ``plain_texts``.
        scene_texts: (B, N, E) per-sample scene-encoded embeddings of the
            ground truth, or (K, N, E) shared across the batch and indexed by
            label. N = 0 disables both auxiliary terms.
        kernel: override the active kernel backend.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if E.ndim != 2 or E.shape[0] == 0:
        raise InvalidInputError("batch_loss needs a non-empty (B, E) batch")
    if labels.shape != (E.shape[0],):
        raise InvalidInputError("labels must have one entry per embedding")
    P = np.asarray(plain_texts, dtype=np.float64)
    if labels.min() < 0 or labels.max() >= len(P):
        raise InvalidInputError("label outside the training label space")
    S = np.asarray(scene_texts, dtype=np.float64)
    if S.ndim != 3:
        raise InvalidInputError("scene_texts must be 3-D")
    if S.shape[0] == len(P) and S.shape[0] != len(E):
        S = S[labels]
    elif S.shape[0] != len(E):
        raise InvalidInputError("scene_texts must be (B, N, E) or (K, N, E)")
    if hyper.lambda_action > 0 and (S.shape[1] == 0 or len(P) < 2):
        raise InvalidInputError("lambda_action > 0 needs scene prompts and at least two categories")
    fn = kernel or kernels.batch_loss_grad
    lv, ls, la, g = fn(E, labels, P, S, hyper.tau, hyper.delta, hyper.lambda_scene,
                       hyper.lambda_action, hyper.aux_temperature)
    B = len(E)
    mv, ms, ma = (float(np.sum(x)) / B for x in (lv, ls, la))
    total = mv + hyper.lambda_scene * ms + hyper.lambda_action * ma
    return BatchLoss(mv, ms, ma, total, g / B, (lv, ls, la))
