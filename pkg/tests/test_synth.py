import itertools

import numpy as np
import pytest

from mmtopic.core import ConfigError
from mmtopic.corpus import Corpus, dense
from mmtopic.synth import (QUADRANT_SIZES, QUADRANTS, GenParams, SynthShape, desk_shape, make_separable_params,
                           sample_corpus)

from oracles import tv


def shape(**kw):
    base = dict(concepts=(("I", ("a", "b"), 4), ("W", ("w",), 3)), dims={"a": 40, "b": 40, "w": 30},
                tokens={"a": 50, "b": 50, "w": 20}, top_K=4, M=50)
    base.update(kw)
    return SynthShape(**base)


def test_quadrant_sizes():
    c, truth = sample_corpus(make_separable_params(desk_shape()), seed=0)
    labels = c.label_array()
    assert [labels.count(q) for q in QUADRANTS] == list(QUADRANT_SIZES)
    assert len(c) == 60 and c.dims == {"eda": 128, "rri": 128, "vision": 256, "word": 512}


def test_label_sizes_must_sum_to_m():
    with pytest.raises(ConfigError, match="sum"):
        shape(label_sizes=(1, 2, 3, 4))
    assert desk_shape(M=10).label_sizes is None


def test_near_disjoint_blocks():
    p = make_separable_params(shape(), concentration=1e-9)
    for m in ("a", "b", "w"):
        rows = p.phi[m]
        for i, j in itertools.combinations(range(rows.shape[0]), 2):
            assert tv(rows[i], rows[j]) > 1 - 1e-8


def test_pairwise_tv_at_005():
    p = make_separable_params(shape(), concentration=0.05, seed=3)
    for m in ("a", "b", "w"):
        rows = p.phi[m]
        for i, j in itertools.combinations(range(rows.shape[0]), 2):
            assert tv(rows[i], rows[j]) >= 0.8


def test_complementary_modalities_split_axes():
    p = make_separable_params(shape(complementary=True), concentration=0.05)
    a, b = p.phi["a"], p.phi["b"]
    # each modality alone merges pairs of categories; jointly all four are distinct
    assert np.allclose(a[0], a[1]) and np.allclose(a[2], a[3])
    assert np.allclose(b[0], b[2]) and np.allclose(b[1], b[3])
    joint = np.hstack([a, b]) / 2
    for i, j in itertools.combinations(range(4), 2):
        assert tv(joint[i], joint[j]) >= 0.45 - 1e-12  # half of 1 - concentration at minimum


def test_single_category_trivial():
    s = SynthShape((("I", ("a",), 1),), {"a": 5}, {"a": 3}, top_K=1, M=4)
    p = make_separable_params(s)
    np.testing.assert_array_equal(p.top_prior, [1.0])
    np.testing.assert_array_equal(p.mappings["I"], [[1.0]])
    np.testing.assert_allclose(p.phi["a"].sum(axis=1), 1.0)


def test_dimension_smaller_than_k():
    with pytest.raises(ConfigError, match="dimension"):
        make_separable_params(shape(dims={"a": 40, "b": 40, "w": 2}))
    with pytest.raises(ConfigError):
        make_separable_params(shape(), concentration=0)


def test_zero_tokens_means_absent():
    c, _ = sample_corpus(make_separable_params(shape(tokens={"a": 50, "b": 0, "w": 20})), seed=1)
    assert all("b" not in d.counts for d in c.documents)


def test_point_mass_generation():
    s = shape()
    p = make_separable_params(s)
    p.mappings = {"I": np.eye(4)}
    p.mappings["W"] = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 0, 0]], float)
    for m in ("a", "b", "w"):
        k = p.phi[m].shape[0]
        p.phi[m] = np.eye(k, s.dims[m])
    p.validate()
    c, truth = sample_corpus(p, seed=2)
    for j, d in enumerate(c.documents):
        ci = truth.concept["I"][j]
        assert d.counts["a"] == ((ci, 50),) and d.counts["b"] == ((ci, 50),)
        assert d.counts["w"] == ((truth.concept["W"][j], 20),)
        assert ci == truth.top[j]


def test_empirical_frequencies_match_row():
    p = make_separable_params(shape(tokens={"a": 10_000, "b": 1, "w": 1}, M=1, top_K=4), seed=0)
    c, truth = sample_corpus(p, seed=4)
    row = p.phi["a"][truth.concept["I"][0]]
    freq = dense(c.documents[0].counts["a"], 40) / 10_000
    assert tv(freq, row) <= 0.03


def test_top_marginal_matches_prior():
    s = shape(M=5000, tokens={"a": 1, "b": 1, "w": 1})
    p = make_separable_params(s)
    p.top_prior = np.array([0.1, 0.2, 0.3, 0.4])
    _, truth = sample_corpus(p, seed=5)
    freq = np.bincount(truth.top, minlength=4) / 5000
    assert tv(freq, p.top_prior) <= 0.05


def test_seed_reproducible_and_valid():
    p = make_separable_params(desk_shape(), seed=1)
    a, ta = sample_corpus(p, seed=7)
    b, tb = sample_corpus(p, seed=7)
    assert a == b and np.array_equal(ta.top, tb.top)
    assert sample_corpus(p, seed=8)[0] != a
    Corpus(a.specs, a.documents, a.labels)  # re-validates


def test_params_roundtrip():
    p = make_separable_params(desk_shape(), seed=2)
    q = GenParams.from_dict(p.to_dict())
    assert q.shape == p.shape
    for m in p.phi:
        np.testing.assert_array_equal(q.phi[m], p.phi[m])


def test_params_validate_rejects_bad_rows():
    p = make_separable_params(shape())
    p.phi["a"] = p.phi["a"] * 2
    with pytest.raises(ConfigError, match="simplex"):
        p.validate()
