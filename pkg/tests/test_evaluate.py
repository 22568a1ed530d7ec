import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmtopic.core import FittedModel, ModelConfig
from mmtopic.corpus import Document, Lexicon
from mmtopic.evaluate import (EvalReport, KLRow, analytic_chance_rand, chance_rand, evaluate_predictions,
                              kl_divergence, rand_index, restrict_lexicon, uniform_kl, write_report)
from mmtopic.hierarchy import Concept, HierarchyModel, HierarchySpec

from conftest import make_corpus
from oracles import rand_by_pairs

labels_st = st.lists(st.integers(0, 3), min_size=2, max_size=25)


def test_rand_examples():
    assert rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == 1 / 3
    assert rand_index(["a", "b", "a"], ["a", "b", "a"]) == 1.0
    with pytest.raises(ValueError):
        rand_index([0, 1], [0])
    with pytest.raises(ValueError):
        rand_index([0], [0])


@settings(max_examples=80, deadline=None)
@given(labels_st, st.data())
def test_rand_properties(a, data):
    b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
    r = rand_index(a, b)
    assert 0 <= r <= 1
    assert r == pytest.approx(rand_by_pairs(a, b), abs=1e-12)
    assert r == rand_index(b, a)
    perm = {0: 3, 1: 0, 2: 1, 3: 2}
    assert rand_index([perm[x] for x in a], b) == pytest.approx(r, abs=1e-12)
    assert rand_index(a, a) == 1.0


def test_chance_k1_exact():
    assert chance_rand(["x"] * 10, 1, trials=50) == 1.0


def test_chance_matches_closed_form():
    sizes = (8, 28, 18, 6)
    ref = np.repeat(np.arange(4), sizes)
    expect = analytic_chance_rand(sizes, 4)
    # closed form: sum C(n_i,2)/C(n,2) = 574/1770
    p = 574 / 1770
    assert expect == pytest.approx(p / 4 + (1 - p) * 3 / 4, abs=1e-15)
    estimates = [chance_rand(ref, 4, trials=100_000, seed=s) for s in range(2)]
    assert all(abs(e - expect) <= 0.005 for e in estimates)
    assert abs(estimates[0] - estimates[1]) <= 0.005


def test_chance_deterministic_and_sized_scheme():
    ref = np.repeat(np.arange(4), (8, 28, 18, 6))
    assert chance_rand(ref, 4, 2000, seed=3) == chance_rand(ref, 4, 2000, seed=3)
    sized = chance_rand(ref, 4, 20_000, seed=0, scheme="sized")
    # oracle: explicit shuffles scored pair by pair
    rng = np.random.default_rng(11)
    direct = np.mean([rand_index(ref, rng.permutation(ref)) for _ in range(4000)])
    assert sized == pytest.approx(direct, abs=0.005)
    with pytest.raises(ValueError):
        chance_rand(ref, 4, 10, scheme="bogus")
    with pytest.raises(ValueError):
        chance_rand(ref, 4, 0)


def test_chance_variance_shrinks_with_trials():
    ref = np.repeat(np.arange(3), (5, 9, 6))
    small = np.std([chance_rand(ref, 3, 100, seed=s) for s in range(30)])
    large = np.std([chance_rand(ref, 3, 3000, seed=s) for s in range(30)])
    assert large < small


def test_kl_examples():
    assert kl_divergence([2, 4, 0], [1 / 3, 2 / 3, 0.0]) == 0.0
    assert kl_divergence([0, 5, 0, 0], np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-12)
    with pytest.warns(RuntimeWarning):
        assert kl_divergence([1, 1], [1.0, 0.0]) == math.inf
    with pytest.raises(ValueError):
        kl_divergence([0, 0], [0.5, 0.5])


def test_kl_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.integers(0, 5, size=20).astype(float)
        a[0] += 1
        q = rng.dirichlet(np.ones(20))
        p = a / a.sum()
        brute = 0.0
        for pi, qi in zip(p, q):
            if pi > 0:
                brute += pi * math.log(pi / qi)
        assert kl_divergence(a, q) == pytest.approx(brute, abs=1e-12)
        assert kl_divergence(a, q) >= 0


def test_uniform_kl():
    assert uniform_kl([3, 3, 3]) == pytest.approx(0.0, abs=1e-15)
    assert uniform_kl(np.eye(7)[2]) == pytest.approx(math.log(7), abs=1e-12)
    a = np.array([1, 0, 4, 2])
    assert uniform_kl(a) == kl_divergence(a, np.full(4, 0.25))


def test_restrict_lexicon():
    a = np.array([1, 0, 3, 2])
    q = np.array([0.1, 0.2, 0.3, 0.4])
    full = restrict_lexicon(a, q, Lexicon(range(4)))
    np.testing.assert_array_equal(full[0], a)
    np.testing.assert_allclose(full[1], q)
    assert restrict_lexicon(a, q, Lexicon({1})) is None
    sub_a, sub_q = restrict_lexicon(a, q, Lexicon({0, 3}))
    brute = (1 / 3) * math.log((1 / 3) / (0.1 / 0.5)) + (2 / 3) * math.log((2 / 3) / (0.4 / 0.5))
    assert kl_divergence(sub_a, sub_q) == pytest.approx(brute, abs=1e-12)
    with pytest.raises(ValueError):
        restrict_lexicon(a, q, Lexicon(set()))


def degenerate_hierarchy():
    spec = HierarchySpec((Concept("I", ("eda", "rri"), 1), Concept("V", ("vision",), 1),
                          Concept("W", ("word",), 1)), top_K=1)

    def fm(phi, theta_rows=1):
        K = 1
        cfg = ModelConfig.for_modalities(list(phi), K)
        return FittedModel(cfg, np.ones((theta_rows, K)), {m: np.asarray(p, float) for m, p in phi.items()}, ["x"])

    lower = {"I": fm({"eda": [[0.5, 0.5]], "rri": [[0.2, 0.8]]}), "V": fm({"vision": [[0.25, 0.75]]}),
             "W": fm({"word": [[0.1, 0.3, 0.6]]})}
    top = fm({"I": [[1.0]], "V": [[1.0]], "W": [[1.0]]})
    return HierarchyModel(spec, lower, top)


def degenerate_test_corpus():
    docs = [{"eda": [(0, 2)], "rri": [(1, 1)], "vision": [(1, 3)], "word": [(2, 2), (0, 1)]},
            {"eda": [(1, 1)], "rri": [(0, 1), (1, 1)], "vision": [(0, 1)], "word": [(1, 1)]}]
    return make_corpus({"eda": 2, "rri": 2, "vision": 2, "word": 3}, docs, labels=["L", "L"])


def test_evaluate_degenerate_model():
    h = degenerate_hierarchy()
    test = degenerate_test_corpus()
    report = evaluate_predictions(h, test, Lexicon({0, 2}), "word", sweeps=20, chance_trials=200)
    assert report.rand == 1.0 and report.chance_rand == 1.0
    # 2 documents x (I->vision, I->word, V->eda, V->rri, V->word, W->eda, W->rri, W->vision)
    assert len(report.kl_rows) == 16
    phi = {"eda": [0.5, 0.5], "rri": [0.2, 0.8], "vision": [0.25, 0.75], "word": [0.1, 0.3, 0.6]}
    for r in report.kl_rows:
        doc = test.documents[int(r.doc_id[1:])]
        actual = np.zeros(len(phi[r.target]))
        for w, c in doc.counts[r.target]:
            actual[w] = c
        assert r.kl_predicted == pytest.approx(kl_divergence(actual, phi[r.target]), abs=1e-12)
        assert r.target not in r.source_modalities.split("+")
        assert r.kl_predicted >= 0 and r.kl_uniform >= 0
    lex_rows = [r for r in report.kl_rows if r.target == "word"]
    assert [r.lexicon_excluded for r in lex_rows] == [False, False, True, True]  # sources I and V per document


def test_summary_layout_and_csv(tmp_path):
    rows = [KLRow("d0", "V", "vision", "eda", 0.5, 1.0), KLRow("d1", "V", "vision", "eda", 0.7, 1.2),
            KLRow("d0", "W", "word", "eda", 0.9, 1.0)]
    rep = EvalReport(0.8, 0.6, 0.58, rows)
    summary = rep.summary()
    assert [(s["target"], s["source"], s["n"]) for s in summary] == [("eda", "uniform", 3), ("eda", "V", 2),
                                                                     ("eda", "W", 1)]
    assert summary[1]["mean"] == pytest.approx(0.6)
    assert rep.mean_kl("eda") == pytest.approx(0.7) and rep.mean_uniform_kl("eda") == pytest.approx(1.0667, abs=1e-4)
    write_report(rep, tmp_path)
    assert (tmp_path / "report.csv").read_text().splitlines()[0].startswith("doc_id,source,source_modalities,target")
    assert "rand,0.8" in (tmp_path / "metrics.csv").read_text()
