"""Sampling corpora from the two-layer generative process with known parameters.

Per document: a top category, then one category per concept drawn from
that concept's top-to-concept mapping, then every modality's tokens i.i.d.
from the concept category's feature distribution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError
from .corpus import Corpus, Document, ModalitySpec, sparse_from_dense

QUADRANTS = ("pleasant+arousal", "pleasant+sleepiness", "unpleasant+arousal", "unpleasant+sleepiness")
QUADRANT_SIZES = (8, 28, 18, 6)
QUADRANT_SPLIT = ((5, 3), (23, 5), (13, 5), (4, 2))


@dataclass(frozen=True)
class SynthShape:
    """Shape of a synthetic experiment (what to generate, not the parameters)."""
    concepts: tuple  # ((concept id, (modality ids...), K^C), ...)
    dims: dict
    tokens: dict
    top_K: int = 4
    M: int = 60
    labels: tuple | None = None
    label_sizes: tuple | None = None
    complementary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple((c, tuple(ms), int(k)) for c, ms, k in self.concepts))
        if self.labels is not None and len(self.labels) != self.top_K:
            raise ConfigError(f"need {self.top_K} labels, got {len(self.labels)}")
        if self.label_sizes is not None:
            if len(self.label_sizes) != self.top_K:
                raise ConfigError(f"need {self.top_K} label sizes, got {len(self.label_sizes)}")
            if sum(self.label_sizes) != self.M:
                raise ConfigError(f"label sizes sum to {sum(self.label_sizes)}, M is {self.M}")
        for _, mods, _ in self.concepts:
            for m in mods:
                if m not in self.dims or m not in self.tokens:
                    raise ConfigError(f"modality {m!r} needs a dimension and a token count")

    def to_dict(self) -> dict:
        return {
            "concepts": [[c, list(ms), k] for c, ms, k in self.concepts],
            "dims": dict(self.dims), "tokens": dict(self.tokens), "top_K": self.top_K, "M": self.M,
            "labels": list(self.labels) if self.labels else None,
            "label_sizes": list(self.label_sizes) if self.label_sizes else None,
            "complementary": self.complementary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthShape":
        d = dict(d)
        d["concepts"] = tuple(tuple(c) for c in d["concepts"])
        for key in ("labels", "label_sizes"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def desk_shape(M=60, complementary=True, label_sizes=QUADRANT_SIZES, tokens=None) -> SynthShape:
    """Desk-scale analog of the emotion experiment.

    Two 128-dim physiology modalities, a 256-dim vision modality and a
    512-dim word modality; four top categories labelled by valence/arousal
    quadrant with sizes (8, 28, 18, 6) when ``M == 60``.
    """
    if label_sizes is not None and sum(label_sizes) != M:
        label_sizes = None
    return SynthShape(
        concepts=(("I", ("eda", "rri"), 4), ("V", ("vision",), 4), ("W", ("word",), 8)),
        dims={"eda": 128, "rri": 128, "vision": 256, "word": 512},
        tokens=tokens or {"eda": 200, "rri": 200, "vision": 200, "word": 100},
        top_K=4, M=M, labels=QUADRANTS, label_sizes=label_sizes, complementary=complementary,
    )


@dataclass
class GenParams:
    shape: SynthShape
    top_prior: np.ndarray
    mappings: dict  # concept -> (top_K, K^C)
    phi: dict  # modality -> (K^C, W)

    def validate(self):
        _simplex(self.top_prior, "top prior")
        for c, mods, kc in self.shape.concepts:
            if self.mappings[c].shape != (self.shape.top_K, kc):
                raise ConfigError(f"mapping for {c!r} has shape {self.mappings[c].shape}")
            _simplex(self.mappings[c], f"mapping {c!r}")
            for m in mods:
                if self.phi[m].shape != (kc, self.shape.dims[m]):
                    raise ConfigError(f"phi for {m!r} has shape {self.phi[m].shape}")
                _simplex(self.phi[m], f"phi {m!r}")

    def to_dict(self) -> dict:
        return {
            "shape": self.shape.to_dict(),
            "top_prior": self.top_prior.tolist(),
            "mappings": {c: a.tolist() for c, a in self.mappings.items()},
            "phi": {m: a.tolist() for m, a in self.phi.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenParams":
        p = cls(SynthShape.from_dict(d["shape"]), np.array(d["top_prior"]),
                {c: np.array(a) for c, a in d["mappings"].items()},
                {m: np.array(a) for m, a in d["phi"].items()})
        p.validate()
        return p


@dataclass
class GroundTruth:
    doc_ids: list
    top: np.ndarray
    concept: dict = field(default_factory=dict)
    params: GenParams | None = None

    def to_dict(self) -> dict:
        return {"doc_ids": list(self.doc_ids), "top": self.top.tolist(),
                "concept": {c: v.tolist() for c, v in self.concept.items()}}


def _simplex(a, what):
    a = np.atleast_2d(a)
    if np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1) > 1e-9):
        raise ConfigError(f"{what} rows must lie on the simplex")


def _block_rows(n_rows, block_of, n_blocks, W, concentration, rng):
    """Rows putting 1-concentration of their mass uniformly on their block, the rest spread outside."""
    edges = np.linspace(0, W, n_blocks + 1).round().astype(int)
    order = rng.permutation(n_blocks)
    rows = np.zeros((n_rows, W))
    for r in range(n_rows):
        b = order[block_of(r)]
        inside = np.zeros(W, dtype=bool)
        inside[edges[b]:edges[b + 1]] = True
        if inside.all():
            rows[r] = 1.0 / W
            continue
        rows[r, inside] = (1 - concentration) / inside.sum()
        rows[r, ~inside] = concentration / (~inside).sum()
    return rows


def _mapping(top_K, kc, concentration):
    """Near-deterministic top-to-concept mapping: top k favours concept category k mod K^C
    (and its repeats k, k+top_K, ... when K^C > top_K)."""
    m = np.zeros((top_K, kc))
    for k in range(top_K):
        targets = [c for c in range(kc) if c % top_K == k % top_K] if kc > top_K else [k % kc]
        m[k, targets] = 1.0 / len(targets)
    if kc > 1:
        m = (1 - concentration) * m + concentration * (1 - m.astype(bool)) / np.maximum(
            (1 - m.astype(bool)).sum(axis=1, keepdims=True), 1)
    return m / m.sum(axis=1, keepdims=True)


def make_separable_params(shape: SynthShape, concentration: float = 0.05, seed: int = 0) -> GenParams:
    """Well-separated parameters: disjoint feature blocks per category.

    With ``shape.complementary`` the first two modalities of a concept split
    its categories along different axes (``c // 2`` and ``c % 2``), so each
    alone separates only half the categories.
    """
    if not 0 < concentration <= 1:
        raise ConfigError(f"concentration must be in (0, 1], got {concentration}")
    rng = np.random.default_rng(seed)
    phi, mappings = {}, {}
    for cid, mods, kc in shape.concepts:
        mappings[cid] = _mapping(shape.top_K, kc, concentration)
        for i, m in enumerate(mods):
            W = shape.dims[m]
            if shape.complementary and len(mods) >= 2 and i < 2 and kc > 1:
                if kc % 2:
                    raise ConfigError(f"complementary split needs even K for concept {cid!r}")
                block_of, n_blocks = ((lambda c: c // 2), kc // 2) if i == 0 else ((lambda c: c % 2), 2)
            else:
                block_of, n_blocks = (lambda c: c), kc
            if W < n_blocks:
                raise ConfigError(f"modality {m!r}: dimension {W} < {n_blocks} categories")
            phi[m] = _block_rows(kc, block_of, n_blocks, W, concentration, rng)
    params = GenParams(shape, np.full(shape.top_K, 1.0 / shape.top_K), mappings, phi)
    params.validate()
    return params


def sample_corpus(params: GenParams, seed: int = 0):
    """Draw a labelled corpus and its ground truth. Deterministic in ``seed``."""
    shape = params.shape
    M = shape.M
    root = np.random.SeedSequence(seed)
    top_ss, *doc_ss = root.spawn(M + 1)
    top_rng = np.random.default_rng(top_ss)
    if shape.label_sizes is not None:
        top = top_rng.permutation(np.repeat(np.arange(shape.top_K), shape.label_sizes))
    else:
        top = top_rng.choice(shape.top_K, size=M, p=params.top_prior)
    width = max(3, len(str(M - 1)))
    ids = [f"d{j:0{width}d}" for j in range(M)]
    concept = {c: np.zeros(M, dtype=np.int64) for c, _, _ in shape.concepts}
    docs = []
    for j in range(M):
        rng = np.random.default_rng(doc_ss[j])
        counts = {}
        for cid, mods, kc in shape.concepts:
            cj = int(rng.choice(kc, p=params.mappings[cid][top[j]]))
            concept[cid][j] = cj
            for m in mods:
                n = shape.tokens[m]
                if n > 0:
                    counts[m] = sparse_from_dense(rng.multinomial(n, params.phi[m][cj]))
        docs.append(Document(ids[j], counts))
    specs = [ModalitySpec(m, shape.dims[m]) for _, mods, _ in shape.concepts for m in mods]
    labels = None
    if shape.labels is not None:
        labels = {ids[j]: shape.labels[top[j]] for j in range(M)}
    corpus = Corpus(specs, docs, labels)
    return corpus, GroundTruth(ids, np.asarray(top, dtype=np.int64), concept, params)
