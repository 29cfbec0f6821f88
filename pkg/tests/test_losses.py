import math

import numpy as np
import pytest

from oracles import embedding_grad_errors, param_grad_error, random_instance
from sata_lab.core import InvalidInputError
from sata_lab.losses import (LossHyper, SimilarityRow, batch_loss, loss_action, loss_scene, loss_total, loss_values,
                             loss_vta, similarity_row, term_gradients)


def row(pos, neg, scene=()):
    return SimilarityRow(pos, np.asarray(neg, float), np.asarray(scene, float))


@pytest.mark.parametrize("tau", [0.01, 0.3, 7.0])
def test_vta_equal_logits(tau):
    assert loss_vta(row(0.4, [0.4]), tau) == pytest.approx(math.log(2), abs=1e-12)
    assert loss_vta(row(-0.2, [-0.2] * 149), tau) == pytest.approx(math.log(150), abs=1e-9)


def test_vta_confident():
    assert loss_vta(row(0.9, [0.1]), 0.01) < 1e-30


def test_scene_examples():
    assert loss_scene(row(0.3, [0.1])) == 0.0
    assert loss_scene(row(0.5, [0.1], [0.5, 0.5])) == pytest.approx(math.log(3), abs=1e-12)
    assert loss_scene(row(1.0, [0.1], [-1.0, -1.0])) == pytest.approx(math.log(1 + 2 * math.exp(-2)), abs=1e-12)


def test_action_examples():
    assert loss_action(row(0.0, [0.1], [0.9]), 0.5) == 0.0
    assert loss_action(row(0.0, [0.2], [0.3]), 0.5) == pytest.approx(0.4, abs=1e-12)
    # every hinge 0.5 - 0.3 + 0.2 = 0.4
    assert loss_action(row(0.0, [0.2, 0.2], [0.3, 0.3]), 0.5) == pytest.approx(0.4, abs=1e-12)


def test_action_undefined():
    with pytest.raises(InvalidInputError):
        loss_action(row(0.1, [0.2]), 0.5)
    with pytest.raises(InvalidInputError):
        loss_action(row(0.1, [], [0.2]), 0.5)


def test_total_arithmetic():
    e = np.array([1.0, 0.0, 0.0])
    P = np.eye(3)[:2]
    S = np.eye(3)[2:]
    h = LossHyper(lambda_scene=0.2, lambda_action=0.2)
    out = loss_total(e, P, 0, S, h)
    assert out.l_total == pytest.approx(out.l_vta + 0.2 * out.l_scene + 0.2 * out.l_action, abs=1e-15)
    assert 1.0 + 0.2 * 0.5 + 0.2 * 0.4 == pytest.approx(1.18)


def test_total_reduces_to_vta():
    rng = np.random.default_rng(0)
    e, P, y, S, _ = random_instance(rng)
    h0 = LossHyper(lambda_scene=0.0, lambda_action=0.0)
    out = loss_total(e, P, y, S, h0)
    assert out.l_total == out.l_vta
    assert np.allclose(out.grad_e_x, term_gradients(e, P, y, S, h0)["vta"], rtol=1e-12, atol=1e-15)


def test_similarity_row_bounds():
    with pytest.raises(InvalidInputError):
        SimilarityRow(1.5, np.zeros(1), np.zeros(0))


def test_gradients_finite_differences():
    rng = np.random.default_rng(2024)
    worst = {}
    for _ in range(200):
        for k, v in embedding_grad_errors(*random_instance(rng)).items():
            worst[k] = max(worst.get(k, 0.0), v)
    assert all(v <= 1e-6 for v in worst.values()), worst


@pytest.mark.parametrize("arch", ["linear", "mlp"])
def test_param_gradients_finite_differences(arch):
    rng = np.random.default_rng(7)
    assert max(param_grad_error(rng, arch) for _ in range(50)) <= 1e-6


def test_hinge_kink_subgradient_zero():
    # e/|e| = (0.6, 0, 0.8): s_pos = 0.6, s_neg = 0, s_scene = 0.8; with delta = 0.8 the hinge sits exactly at 0
    e = np.array([3.0, 0.0, 4.0])
    P, S = np.eye(3)[:2], np.eye(3)[2:]
    h = LossHyper(tau=0.5, delta=0.8, lambda_scene=0.0, lambda_action=1.0)
    assert loss_action(similarity_row(e, P, 0, S), 0.8) == 0.0
    assert np.all(term_gradients(e, P, 0, S, h)["action"] == 0.0)
    with_action = loss_total(e, P, 0, S, h).grad_e_x
    without = loss_total(e, P, 0, S, LossHyper(tau=0.5, delta=0.8, lambda_scene=0.0, lambda_action=0.0)).grad_e_x
    assert np.array_equal(with_action, without)


def test_nonnegative_and_monotone():
    rng = np.random.default_rng(5)
    for _ in range(300):
        K, N = int(rng.integers(2, 6)), int(rng.integers(1, 5))
        r = row(rng.uniform(-1, 1), rng.uniform(-1, 1, K - 1), rng.uniform(-1, 1, N))
        h = LossHyper(tau=float(rng.uniform(0.01, 1)))
        b = loss_values(r, h)
        assert min(b.l_vta, b.l_scene, b.l_action) >= 0.0
        if r.s_pos < 0.99:
            higher = SimilarityRow(r.s_pos + 0.01, r.s_neg, r.s_scene)
            assert loss_vta(higher, h.tau) < b.l_vta
            assert loss_scene(higher) < b.l_scene
        up = SimilarityRow(r.s_pos, r.s_neg, np.minimum(r.s_scene + 0.01, 1.0))
        assert loss_scene(up) >= loss_scene(r)
        assert loss_action(up, h.delta) <= loss_action(r, h.delta)
        negup = SimilarityRow(r.s_pos, np.minimum(r.s_neg + 0.01, 1.0), r.s_scene)
        assert loss_action(negup, h.delta) >= loss_action(r, h.delta)


def test_vta_shift_invariance():
    from sata_lab.core import log_sum_exp
    # shift invariance lives at the logit level: compare the softmax form directly
    s = np.array([0.3, -0.1, 0.2])
    base = log_sum_exp(s / 0.1) - s[0] / 0.1
    for c in (-0.5, 0.25):
        assert log_sum_exp((s + c) / 0.1) - (s[0] + c) / 0.1 == pytest.approx(base, abs=1e-12)
    assert loss_vta(row(0.3, [-0.1, 0.2]), 0.1) == pytest.approx(base, abs=1e-12)


def test_action_zero_iff_margins():
    r = row(0.0, [0.1, -0.2], [0.7, 0.6])
    assert loss_action(r, 0.5) == 0.0
    assert loss_action(r, 0.5 + 1e-9) > 0.0


def test_tau_does_not_change_prediction():
    rng = np.random.default_rng(9)
    P = rng.standard_normal((6, 5))
    e = rng.standard_normal(5)
    c = (P / np.linalg.norm(P, axis=1, keepdims=True)) @ e
    preds = set()
    for tau in (0.01, 0.1, 1.0, 10.0):
        logits = c / tau
        preds.add(int(np.argmax(logits)))
    assert len(preds) == 1


def test_batch_of_one_and_duplicates():
    rng = np.random.default_rng(3)
    e, P, y, S, h = random_instance(rng)
    single = loss_total(e, P, y, S, h)
    b1 = batch_loss(e[None], P, [y], S[None], h)
    assert b1.l_total == pytest.approx(single.l_total, abs=1e-13)
    assert np.allclose(b1.grad_embeddings[0], single.grad_e_x, atol=1e-13)
    b2 = batch_loss(np.stack([e, e]), P, [y, y], np.stack([S, S]), h)
    assert b2.l_total == pytest.approx(single.l_total, abs=1e-13)
    assert np.allclose(b2.grad_embeddings * 2, b1.grad_embeddings, atol=1e-13)


def test_batch_matches_per_sample_loop():
    rng = np.random.default_rng(4)
    B, K, N, E = 8, 5, 4, 6
    emb = rng.standard_normal((B, E))
    P = rng.standard_normal((K, E))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    S = rng.standard_normal((B, N, E))
    S /= np.linalg.norm(S, axis=2, keepdims=True)
    y = rng.integers(0, K, B)
    h = LossHyper(tau=0.2)
    bl = batch_loss(emb, P, y, S, h)
    outs = [loss_total(emb[i], P, int(y[i]), S[i], h) for i in range(B)]
    assert bl.l_vta == pytest.approx(np.mean([o.l_vta for o in outs]), abs=1e-13)
    assert bl.l_scene == pytest.approx(np.mean([o.l_scene for o in outs]), abs=1e-13)
    assert bl.l_action == pytest.approx(np.mean([o.l_action for o in outs]), abs=1e-13)
    assert bl.l_total == pytest.approx(np.mean([o.l_total for o in outs]), abs=1e-13)
    assert np.allclose(bl.grad_embeddings, np.stack([o.grad_e_x for o in outs]) / B, atol=1e-13)


def test_batch_shared_scene_grid():
    rng = np.random.default_rng(6)
    K, N, E = 4, 3, 5
    emb = rng.standard_normal((6, E))
    P = rng.standard_normal((K, E))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    G = rng.standard_normal((K, N, E))
    G /= np.linalg.norm(G, axis=2, keepdims=True)
    y = rng.integers(0, K, 6)
    h = LossHyper()
    assert batch_loss(emb, P, y, G, h).l_total == pytest.approx(batch_loss(emb, P, y, G[y], h).l_total, abs=1e-14)


def test_batch_errors():
    with pytest.raises(InvalidInputError):
        batch_loss(np.zeros((0, 3)), np.eye(3), [], np.zeros((0, 1, 3)), LossHyper())
    with pytest.raises(InvalidInputError):
        batch_loss(np.ones((2, 3)), np.eye(3), [0, 1], np.zeros((2, 0, 3)), LossHyper())


def test_hyper_validation():
    with pytest.raises(InvalidInputError):
        LossHyper(tau=0.0)
    with pytest.raises(InvalidInputError):
        LossHyper(lambda_scene=-0.1)
