import numpy as np
import pytest

from mmtopic.core import ConfigError, FittedModel, ModelConfig, fit, predict_modality
from mmtopic.corpus import Document
from mmtopic.evaluate import kl_divergence, rand_index, uniform_kl
from mmtopic.hierarchy import (Concept, HierarchyModel, HierarchySpec, Message, derive_seed, downward_messages,
                               encode_upward, infer_top, load_hierarchy, lower_infer, emotion_spec, predict_cross,
                               save_hierarchy, top_update, train_hierarchy)

from conftest import make_corpus, random_corpus


def true_k_spec(**kw):
    kw.setdefault("top_K", 4)
    return HierarchySpec((Concept("I", ("eda", "rri"), 4), Concept("V", ("vision",), 4),
                          Concept("W", ("word",), 8)), **kw)


@pytest.fixture(scope="module")
def trained(desk_small):
    train = desk_small.subset(desk_small.ids[:90])
    test = desk_small.subset(desk_small.ids[90:])
    spec = true_k_spec(rounds=4, lower_sweeps=60, top_sweeps=80)
    return train, test, train_hierarchy(train, spec, seed=5)


def fixed_model(phi, alpha=1.0, theta=None):
    K = next(iter(phi.values())).shape[0]
    config = ModelConfig.for_modalities(list(phi), K, alpha=alpha)
    theta = np.full((1, K), 1.0 / K) if theta is None else np.asarray(theta, float)
    return FittedModel(config, theta, {m: np.asarray(p, float) for m, p in phi.items()},
                       [f"x{j}" for j in range(theta.shape[0])])


# --- spec ----------------------------------------------------------------------

def test_emotion_spec_values():
    s = emotion_spec()
    assert [(c.id, c.K) for c in s.concepts] == [("I", 4), ("V", 4), ("W", 34)]
    assert (s.top_K, s.alpha, s.beta, s.rounds, s.weight) == (28, 1.0, 1.0, 10, 100)
    assert HierarchySpec.from_dict(s.to_dict()) == s


@pytest.mark.parametrize("concepts", [
    (Concept("I", ("a",), 2), Concept("I", ("b",), 2)),
    (Concept("I", ("a",), 2), Concept("V", ("a",), 2)),
    (Concept("top", ("a",), 2),),
])
def test_spec_invariants(concepts):
    with pytest.raises(ConfigError):
        HierarchySpec(concepts)


def test_derive_seed_distinct():
    seeds = {derive_seed(0, c, r) for c in ("I", "V", "W", "top") for r in range(10)}
    assert len(seeds) == 40
    assert derive_seed(3, "I", 2) == derive_seed(3, "I", 2)


# --- messages ------------------------------------------------------------------

def test_lower_infer_forced_by_smoothing():
    c = make_corpus({"a": 3}, [{"a": [(0, 6), (2, 4)]}, {}])
    bias = np.zeros((2, 4))
    bias[:, 1] = 1.0
    m = fit(c, ModelConfig.for_modalities(["a"], 4, sweeps=1, burn_in=0), bias=bias)
    msg = lower_infer(m, c, "I")
    np.testing.assert_allclose(msg.probs[0], [1 / 14, 11 / 14, 1 / 14, 1 / 14], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(msg.probs[1], np.full(4, 0.25))
    assert msg.direction == "up"


def test_lower_infer_equals_theta():
    c = random_corpus(np.random.default_rng(0), M=5)
    m = fit(c, ModelConfig.for_modalities(["a", "b"], 3, sweeps=10, burn_in=0))
    np.testing.assert_array_equal(lower_infer(m, c).probs, m.theta)


def test_message_rejects_off_simplex():
    with pytest.raises(ValueError, match="simplex"):
        Message("up", "I", [[0.5, 0.6]])
    with pytest.raises(ValueError):
        Message("sideways", "I", [[1.0]])


def test_encode_upward_examples():
    assert encode_upward(Message("up", "I", [[0, 0, 1, 0]]), 100) == [((2, 100),)]
    assert encode_upward(Message("up", "I", [[0.25] * 4]), 100) == [((0, 25), (1, 25), (2, 25), (3, 25))]
    with pytest.raises(ValueError):
        encode_upward(Message("down", "I", [[1.0]]), 100)


def test_encode_upward_total_within_half_k():
    rng = np.random.default_rng(1)
    for K in (2, 4, 7, 34):
        probs = rng.dirichlet(np.ones(K) * 0.5, size=1000)
        for row in encode_upward(Message("up", "I", probs), 100):
            assert abs(sum(c for _, c in row) - 100) <= K / 2


def test_downward_k1_top_is_phi_row():
    phi = {"I": np.array([[0.1, 0.2, 0.7]]), "V": np.array([[0.5, 0.5]])}
    top = fixed_model(phi, theta=np.ones((3, 1)))
    down = downward_messages(top, ["I", "V"])
    for cid in phi:
        np.testing.assert_allclose(down[cid].probs, np.repeat(phi[cid], 3, axis=0))


def test_downward_identity_point_mass():
    theta = np.array([[0, 0, 1.0], [1.0, 0, 0]])
    top = fixed_model({"I": np.eye(3)}, theta=theta)
    np.testing.assert_array_equal(downward_messages(top, ["I"])["I"].probs, theta)


def test_downward_direct_sum():
    rng = np.random.default_rng(2)
    theta = rng.dirichlet(np.ones(3), size=3)
    phi = {"I": rng.dirichlet(np.ones(4), size=3), "V": rng.dirichlet(np.ones(2), size=3)}
    down = downward_messages(fixed_model(phi, theta=theta), ["I", "V"])
    for cid, p in phi.items():
        for j in range(3):
            expect = [sum(p[k, c] * theta[j, k] for k in range(3)) for c in range(p.shape[1])]
            np.testing.assert_allclose(down[cid].probs[j], expect, rtol=1e-12)


def test_top_update_requires_all_concepts():
    spec = HierarchySpec((Concept("I", ("a",), 2), Concept("V", ("b",), 2)), top_K=2)
    with pytest.raises(ConfigError, match="missing"):
        top_update({"I": Message("up", "I", [[0.5, 0.5]])}, spec, seed=0)
    up = {"I": Message("up", "I", [[0.9, 0.1], [0.2, 0.8]]), "V": Message("up", "V", [[0.5, 0.5], [0.1, 0.9]])}
    top, down = top_update(up, spec, seed=0)
    assert set(down) == {"I", "V"}
    assert top.phi["I"].shape == (2, 2)


# --- training ------------------------------------------------------------------

def test_single_round_equals_standalone_fits(desk_small):
    c = desk_small.subset(desk_small.ids[:30])
    spec = true_k_spec(rounds=1, lower_sweeps=15, top_sweeps=10)
    h = train_hierarchy(c, spec, seed=9)
    for concept in spec.concepts:
        alone = fit(c.select(concept.modalities), spec.lower_config(concept, derive_seed(9, concept.id, 0)))
        np.testing.assert_array_equal(h.lower[concept.id].state.z, alone.state.z)
        np.testing.assert_array_equal(h.lower[concept.id].theta, alone.theta)


def test_all_k1_completes():
    c = make_corpus({"a": 3, "b": 2}, [{"a": [(0, 2)], "b": [(1, 1)]}, {"a": [(2, 1)]}])
    spec = HierarchySpec((Concept("A", ("a",), 1), Concept("B", ("b",), 1)), top_K=1, rounds=2,
                         lower_sweeps=3, top_sweeps=3)
    h = train_hierarchy(c, spec, seed=0)
    for m in list(h.lower.values()) + [h.top]:
        np.testing.assert_array_equal(m.theta, 1.0)
    assert len(h.trajectory) == 2


def test_training_deterministic_and_parallel_equal(desk_small):
    c = desk_small.subset(desk_small.ids[:30])
    spec = true_k_spec(rounds=2, lower_sweeps=10, top_sweeps=10)
    a = train_hierarchy(c, spec, seed=1)
    b = train_hierarchy(c, spec, seed=1)
    p = train_hierarchy(c, true_k_spec(rounds=2, lower_sweeps=10, top_sweeps=10, workers=3), seed=1)
    for cid in a.lower:
        np.testing.assert_array_equal(a.lower[cid].state.z, b.lower[cid].state.z)
        np.testing.assert_array_equal(a.lower[cid].theta, p.lower[cid].theta)
    np.testing.assert_array_equal(a.top.theta, p.top.theta)


def test_trajectory(trained):
    _, _, h = trained
    assert [r["round"] for r in h.trajectory] == list(range(4))
    for row in h.trajectory:
        assert np.isfinite(row["top_loglik"])
        for cid in ("I", "V", "W"):
            assert np.isfinite(row[f"loglik_{cid}"]) and 0 < row[f"msg_max_{cid}"] <= 1


def test_recovers_interoception_categories(trained):
    train, _, h = trained
    assert rand_index(train.label_array(), h.emotion_categories("I")) >= 0.9


def test_missing_modality(desk_small):
    with pytest.raises(ConfigError, match="lacks"):
        train_hierarchy(desk_small.select(["eda", "rri"]), true_k_spec(), seed=0)


# --- cross-modal prediction -----------------------------------------------------

def two_level(phi_a, phi_b, top_phi_a, top_phi_b, top_theta=None):
    spec = HierarchySpec((Concept("A", ("a",), phi_a.shape[0]), Concept("B", ("b",), phi_b.shape[0])),
                         top_K=top_phi_a.shape[0], rounds=1)
    lower = {"A": fixed_model({"a": phi_a}), "B": fixed_model({"b": phi_b})}
    return HierarchyModel(spec, lower, fixed_model({"A": top_phi_a, "B": top_phi_b}, theta=top_theta))


def test_predict_cross_all_k1():
    h = two_level(np.array([[0.2, 0.8]]), np.array([[0.3, 0.3, 0.4]]), np.ones((1, 1)), np.ones((1, 1)))
    np.testing.assert_allclose(predict_cross(h, Document("x", {"b": [(0, 3)]}), "a"), [0.2, 0.8])


def test_predict_cross_hand_composition():
    # lower B sees 8 tokens of feature 0 -> posterior (9/10, 1/10); upward 90/10 pseudo-counts;
    # top posterior (91/102, 11/102); top phi_A swaps categories; lower phi_A maps to features.
    phi_a = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.5]])
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    h = two_level(phi_a, np.eye(2), swap, np.eye(2))
    pred = predict_cross(h, Document("x", {"b": [(0, 8)]}), "a", sweeps=60, seed=0)
    np.testing.assert_allclose(pred, [11 / 102, 91 / 204, 91 / 204], rtol=1e-12)


def test_predict_cross_same_concept_is_lower_prediction(trained):
    _, test, h = trained
    doc = test.documents[0]
    a = predict_cross(h, doc.restrict(["eda"]), "rri", seed=3)
    b = predict_modality(h.lower["I"], doc.restrict(["eda"]), "rri", seed=3)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_predict_cross_empty_is_marginal(trained):
    _, _, h = trained
    pred = predict_cross(h, Document("e"), "word")
    down = h.top.theta.mean(axis=0) @ h.top.phi["W"]
    np.testing.assert_allclose(pred, (down / down.sum()) @ h.lower["W"].phi["word"], rtol=1e-12)
    np.testing.assert_allclose(infer_top(h, Document("e")), h.top.theta.mean(axis=0), rtol=1e-12)


def test_predict_cross_ignores_target_counts(trained):
    _, test, h = trained
    doc = test.documents[1]
    a = predict_cross(h, doc.restrict(["vision", "eda"]), "eda", seed=1)
    b = predict_cross(h, doc.restrict(["vision"]), "eda", seed=1)
    np.testing.assert_array_equal(a, b)
    assert np.all(a > 0) and abs(a.sum() - 1) < 1e-9


def test_vision_predicts_physiology_better_than_uniform(trained):
    _, test, h = trained
    for target in ("eda", "rri"):
        kl_pred, kl_unif = [], []
        for j, doc in enumerate(test.documents):
            actual = np.zeros(test.dims[target])
            for w, c in doc.counts[target]:
                actual[w] = c
            kl_pred.append(kl_divergence(actual, predict_cross(h, doc.restrict(["vision"]), target, seed=j)))
            kl_unif.append(uniform_kl(actual))
        assert np.mean(kl_pred) < np.mean(kl_unif)


def test_save_load_roundtrip(trained, tmp_path):
    _, test, h = trained
    save_hierarchy(h, tmp_path / "m")
    back = load_hierarchy(tmp_path / "m")
    assert back.spec == h.spec
    doc = test.documents[2].restrict(["vision"])
    np.testing.assert_allclose(predict_cross(back, doc, "word", seed=0), predict_cross(h, doc, "word", seed=0),
                               rtol=1e-9)
    save_hierarchy(back, tmp_path / "m2")
    for name in ("lower_I.json", "lower_V.json", "lower_W.json", "top.json", "hierarchy.json"):
        assert (tmp_path / "m" / name).read_bytes() == (tmp_path / "m2" / name).read_bytes()
