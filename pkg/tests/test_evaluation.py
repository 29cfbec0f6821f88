import json

import numpy as np
import pytest

from oracles import brute_force_report
from sata_lab.core import InvalidInputError
from sata_lab.encoders import TextEmbeddingTable, VideoEncoderParams, init_encoder
from sata_lab.evaluation import (BenchmarkReport, DomainReport, LabelOutsideDomainError, classify, evaluate_benchmark,
                                 evaluate_domain, ordering_rate_embeddings, predict_embeddings, report_from_predictions,
                                 ridge_scene_probe, scene_probe)
from sata_lab.world import ConceptBank, DomainManifest, VideoSet, WorldConfig, generate


def identity(D):
    return VideoEncoderParams("linear", {"W": np.eye(D), "b": np.zeros(D)})


def orth_table(A=4, D=8):
    return TextEmbeddingTable(ConceptBank(np.eye(D)[:A], np.eye(D)[A:A + 2]), pool_size=2)


def manifest(cats, closed):
    return DomainManifest(1, "d", "uniform", tuple(cats), tuple(closed))


def test_classify_single_candidate():
    table = orth_table()
    assert classify(identity(8), table, np.ones((2, 8)), [2]) == 2


def test_classify_exact_match():
    table = orth_table()
    frames = np.tile(np.eye(8)[3], (3, 1))
    assert classify(identity(8), table, frames, [0, 1, 2, 3]) == 3


def test_classify_tie_lowest_index():
    table = orth_table()
    frames = (np.eye(8)[1] + np.eye(8)[2])[None]
    assert classify(identity(8), table, frames, [2, 1]) == 1


def test_classify_empty():
    with pytest.raises(InvalidInputError):
        classify(identity(8), orth_table(), np.ones((1, 8)), [])


def test_classify_scale_invariant():
    rng = np.random.default_rng(0)
    table = orth_table()
    e = rng.standard_normal((50, 8))
    a = predict_embeddings(e, table, [0, 1, 2, 3])
    assert np.array_equal(a, predict_embeddings(e * 17.5, table, [0, 1, 2, 3]))


def test_noiseless_world_perfect():
    ds = generate(WorldConfig(noise_std=0.0, scene_mix=0.0, source_count=50, target_count=300))
    table = TextEmbeddingTable.for_world(ds.world, 300)
    rep = evaluate_benchmark(identity(64), table, ds, diagnostics=False)
    for d in rep.domains:
        assert (d.acc_closed, d.acc_open, d.acc_all) == (100.0, 100.0, 100.0)


def test_hand_built_micro_average():
    m = manifest([0, 1, 5, 6], [True, True, False, False])
    rep = report_from_predictions([0, 1, 0, 5, 5], [0, 1, 1, 5, 6], m)
    assert rep.acc_closed == pytest.approx(66.6667, abs=1e-3)
    assert rep.acc_open == pytest.approx(50.0)
    assert rep.acc_all == pytest.approx(60.0)
    assert (rep.n_closed, rep.n_open) == (3, 2)


def test_absent_open_bucket():
    m = manifest([0, 1], [True, True])
    rep = report_from_predictions([0, 0, 1], [0, 1, 1], m)
    assert rep.acc_open is None
    assert rep.acc_all == rep.acc_closed


def test_label_outside_manifest():
    with pytest.raises(LabelOutsideDomainError):
        report_from_predictions([0], [9], manifest([0, 1], [True, False]))


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        cats = sorted(rng.choice(20, size=int(rng.integers(1, 10)), replace=False).tolist())
        flags = [bool(rng.integers(2)) for _ in cats]
        labels = rng.choice(cats, size=int(rng.integers(1, 40)))
        preds = np.where(rng.random(len(labels)) < 0.6, labels, rng.choice(cats, size=len(labels)))
        rep = report_from_predictions(preds, labels, manifest(cats, flags))
        assert (rep.acc_closed, rep.acc_open, rep.acc_all) == brute_force_report(preds, labels, dict(zip(cats, flags)))


def test_permutation_invariance():
    ds = generate(WorldConfig(source_count=50, target_count=400, seed=4))
    table = TextEmbeddingTable.for_world(ds.world, 300)
    p = init_encoder(64, seed=1, init_std=0.2)
    t = ds.target(2)
    perm = np.random.default_rng(0).permutation(len(t))
    shuffled = VideoSet(t.frames[perm], t.actions[perm], t.scenes[perm], t.domain_id)
    assert evaluate_domain(p, table, t, ds.world.manifest(2)) == evaluate_domain(p, table, shuffled,
                                                                                ds.world.manifest(2))


def test_benchmark_averages_skip_absent():
    d1 = DomainReport(1, "a", 50.0, None, 50.0, 4, 0, 2, 0)
    d2 = DomainReport(2, "b", 70.0, 30.0, 50.0, 5, 5, 0, 0)
    rep = BenchmarkReport((d1, d2))
    assert rep.avg_closed == pytest.approx(60.0)
    assert rep.avg_open == pytest.approx(30.0)
    assert rep.avg_all == pytest.approx(50.0)
    csv = rep.to_csv().splitlines()
    assert csv[0] == "domain,C,O,A" and csv[1] == "a,50.00,,50.00" and csv[-1] == "AVG,60.00,30.00,50.00"
    assert json.loads(rep.to_json())["domains"][0]["acc_open"] is None


def test_probe_chance_without_scene_signal():
    cfg = WorldConfig(scene_mix=0.0, bias_strength=0.1, source_count=4000)
    ds = generate(cfg)
    acc = ridge_scene_probe(ds.source.frames.mean(axis=1), ds.source.scenes)
    sigma = np.sqrt(0.1 * 0.9 / 2000)
    assert abs(acc - 0.1) <= 3 * sigma


def test_probe_raw_features():
    ds = generate(WorldConfig(source_count=2000))
    assert ridge_scene_probe(ds.source.frames.mean(axis=1), ds.source.scenes) > 0.9


def test_probe_deterministic_and_single_scene():
    ds = generate(WorldConfig(source_count=600))
    p = init_encoder(64, seed=0)
    assert scene_probe(p, ds.source) == scene_probe(p, ds.source)
    with pytest.raises(InvalidInputError):
        ridge_scene_probe(np.ones((10, 3)) + np.arange(10)[:, None], np.zeros(10, dtype=int))


def test_ordering_hand_built():
    # axes: 0,1 actions; 2 scene. e aligned so s_pos > s_scene > s_neg
    P = np.eye(3)[:2]
    S = (np.eye(3)[0] + 0.5 * np.eye(3)[2])[None, None, :]
    S = S / np.linalg.norm(S)
    e = np.array([[1.0, 0.1, 0.2]])
    assert ordering_rate_embeddings(e, [0], P, S) == 1.0


def test_ordering_orthogonal_embedding():
    P = np.eye(4)[:2]
    S = np.eye(4)[2][None, None, :]
    e = np.eye(4)[3][None]
    assert ordering_rate_embeddings(e, [0], P, S) == 0.0


def test_ordering_requires_suffixes():
    with pytest.raises(InvalidInputError):
        ordering_rate_embeddings(np.ones((1, 3)), [0], np.eye(3)[:2], np.zeros((1, 0, 3)))
