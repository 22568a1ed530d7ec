"""Two-layer multimodal LDA: lower concept models integrated by a top MLDA.

Each lower concept (e.g. interoception over two physiology modalities,
vision, words) is an MLDA over its own modalities. Per round:

1. every lower model runs a block of Gibbs sweeps, each token's conditional
   multiplied by the latest downward message for its document;
2. each lower model sends up its per-document category distribution;
3. the top MLDA is fit on those distributions, encoded as pseudo-counts
   over the concept-category vocabularies;
4. downward messages ``sum_k phi_top_C[k] theta_top[j, k]`` are sent back.
"""
from __future__ import annotations

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (ConfigError, FittedModel, ModelConfig, fit, infer_new, load_model,
                   log_likelihood, predict_modality, save_model)
from .corpus import Corpus, Document, ModalitySpec, dump_json, read_json

log = logging.getLogger(__name__)

TOP = "top"


@dataclass(frozen=True)
class Concept:
    id: str
    modalities: tuple
    K: int

    def __post_init__(self):
        object.__setattr__(self, "modalities", tuple(self.modalities))
        if not self.modalities:
            raise ConfigError(f"concept {self.id!r} has no modalities")
        if self.K < 1:
            raise ConfigError(f"concept {self.id!r}: K must be >= 1")


@dataclass(frozen=True)
class HierarchySpec:
    concepts: tuple
    top_K: int = 28
    alpha: float = 1.0
    beta: float = 1.0
    rounds: int = 10
    lower_sweeps: int = 100
    top_sweeps: int = 200
    weight: int = 100
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(self.concepts))
        ids = [c.id for c in self.concepts]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"concept ids must be unique, got {ids}")
        if TOP in ids:
            raise ConfigError(f"{TOP!r} is reserved for the top model")
        mods = [m for c in self.concepts for m in c.modalities]
        if len(set(mods)) != len(mods):
            raise ConfigError("every modality must belong to exactly one concept")
        for name in ("top_K", "rounds", "lower_sweeps", "top_sweeps", "weight", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError("alpha and beta must be > 0")

    def concept(self, cid) -> Concept:
        for c in self.concepts:
            if c.id == cid:
                return c
        raise ConfigError(f"unknown concept {cid!r}")

    def concept_of(self, modality) -> Concept:
        for c in self.concepts:
            if modality in c.modalities:
                return c
        raise ConfigError(f"modality {modality!r} belongs to no concept")

    @property
    def modalities(self) -> list[str]:
        return [m for c in self.concepts for m in c.modalities]

    def lower_config(self, concept: Concept, seed: int) -> ModelConfig:
        return ModelConfig.for_modalities(concept.modalities, concept.K, beta=self.beta, alpha=self.alpha,
                                          sweeps=self.lower_sweeps, burn_in=0, seed=seed)

    def top_config(self, seed: int) -> ModelConfig:
        return ModelConfig.for_modalities([c.id for c in self.concepts], self.top_K, beta=self.beta,
                                          alpha=self.alpha, sweeps=self.top_sweeps, burn_in=0, seed=seed)

    def to_dict(self) -> dict:
        return {
            "concepts": [{"id": c.id, "modalities": list(c.modalities), "K": c.K} for c in self.concepts],
            "top_K": self.top_K, "alpha": self.alpha, "beta": self.beta, "rounds": self.rounds,
            "lower_sweeps": self.lower_sweeps, "top_sweeps": self.top_sweeps, "weight": self.weight,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HierarchySpec":
        data = dict(data)
        concepts = [Concept(c["id"], c["modalities"], c["K"]) for c in data.pop("concepts")]
        known = {f for f in cls.__dataclass_fields__ if f != "concepts"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown hierarchy fields: {sorted(unknown)}")
        return cls(concepts, **data)


def emotion_spec(interoception=("eda", "rri"), vision=("vision",), word=("word",), **kw) -> HierarchySpec:
    """Interoception/vision/word hierarchy with K^I=4, K^V=4, K^W=34, K=28."""
    kw.setdefault("top_K", 28)
    return HierarchySpec((Concept("I", interoception, 4), Concept("V", vision, 4), Concept("W", word, 34)), **kw)


def derive_seed(seed: int, name: str, round_: int) -> int:
    """Independent per-(model, round) seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), int(round_)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class Message:
    direction: str
    concept: str
    probs: np.ndarray

    def __post_init__(self):
        if self.direction not in ("up", "down"):
            raise ValueError(f"direction must be 'up' or 'down', got {self.direction!r}")
        self.probs = np.asarray(self.probs, dtype=np.float64)
        check_simplex(self.probs, f"{self.direction} message for {self.concept!r}")


def check_simplex(rows, what="distribution", tol=1e-9):
    rows = np.atleast_2d(rows)
    if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > tol):
        raise ValueError(f"{what} is not on the simplex")


def lower_infer(model: FittedModel, corpus: Corpus | None = None, concept: str = "") -> Message:
    """Upward message: the smoothed per-document category distribution of the current state."""
    if corpus is not None and len(corpus) != model.theta.shape[0]:
        raise ConfigError(f"model has {model.theta.shape[0]} documents, corpus has {len(corpus)}")
    return Message("up", concept, model.theta.copy())


def encode_upward(message: Message, weight: int) -> list:
    """Integer pseudo-counts ``round(weight * p)`` per document, as sparse vectors."""
    if message.direction != "up":
        raise ValueError("encode_upward takes an upward message")
    counts = np.rint(weight * message.probs).astype(np.int64)
    return [tuple((int(i), int(row[i])) for i in np.flatnonzero(row)) for row in counts]


def top_corpus(upward: dict, spec: HierarchySpec, doc_ids) -> Corpus:
    missing = [c.id for c in spec.concepts if c.id not in upward]
    if missing:
        raise ConfigError(f"missing upward messages for {missing}")
    encoded = {c.id: encode_upward(upward[c.id], spec.weight) for c in spec.concepts}
    docs = [Document(did, {c.id: encoded[c.id][j] for c in spec.concepts}) for j, did in enumerate(doc_ids)]
    return Corpus([ModalitySpec(c.id, c.K) for c in spec.concepts], docs)


def downward_messages(top: FittedModel, concepts) -> dict:
    """``P(z^C | .)_j = sum_k phi_top_C[k, :] * theta_top[j, k]`` for every concept."""
    out = {}
    for cid in concepts:
        probs = top.theta @ top.phi[cid]
        out[cid] = Message("down", cid, probs / probs.sum(axis=1, keepdims=True))
    return out


def top_update(upward: dict, spec: HierarchySpec, seed: int, doc_ids=None):
    """Fit the top model on encoded upward messages; return (top model, downward messages)."""
    missing = [c.id for c in spec.concepts if c.id not in upward]
    if missing:
        raise ConfigError(f"missing upward messages for {missing}")
    if doc_ids is None:
        n = upward[spec.concepts[0].id].probs.shape[0]
        doc_ids = [f"doc{j}" for j in range(n)]
    tc = top_corpus(upward, spec, doc_ids)
    top = fit(tc, spec.top_config(seed))
    return top, downward_messages(top, [c.id for c in spec.concepts])


@dataclass
class HierarchyModel:
    spec: HierarchySpec
    lower: dict
    top: FittedModel
    trajectory: list = field(default_factory=list)

    def emotion_categories(self, concept: str = "I") -> np.ndarray:
        """Argmax training-document categories of one lower concept."""
        return self.lower[concept].categories()


def train_hierarchy(corpus: Corpus, spec: HierarchySpec, seed: int = 0) -> HierarchyModel:
    missing = [m for m in spec.modalities if m not in corpus.dims]
    if missing:
        raise ConfigError(f"corpus lacks modalities {missing}")
    sub = {c.id: corpus.select(c.modalities) for c in spec.concepts}
    lower: dict = {}
    down: dict = {}
    top = None
    trajectory = []
    pool = ThreadPoolExecutor(spec.workers) if spec.workers > 1 else None

    def run_lower(c, r):
        cfg = spec.lower_config(c, derive_seed(seed, c.id, r))
        prev = lower.get(c.id)
        state = prev.state if prev is not None else None
        bias = down[c.id].probs if c.id in down else None
        return fit(sub[c.id], cfg, bias=bias, state=state)

    try:
        for r in range(spec.rounds):
            if pool is not None:
                fits = list(pool.map(lambda c: run_lower(c, r), spec.concepts))
            else:
                fits = [run_lower(c, r) for c in spec.concepts]
            for c, m in zip(spec.concepts, fits):
                lower[c.id] = m
            upward = {c.id: lower_infer(lower[c.id], sub[c.id], c.id) for c in spec.concepts}
            top, new_down = top_update(upward, spec, derive_seed(seed, TOP, r), corpus.ids)
            row = {"round": r, "top_loglik": log_likelihood(top, top_corpus(upward, spec, corpus.ids))}
            for c in spec.concepts:
                row[f"loglik_{c.id}"] = log_likelihood(lower[c.id], sub[c.id])
                prev = down.get(c.id)
                row[f"msg_delta_{c.id}"] = (float(np.abs(new_down[c.id].probs - prev.probs).sum(axis=1).mean())
                                            if prev is not None else float("nan"))
                row[f"msg_max_{c.id}"] = float(new_down[c.id].probs.max(axis=1).mean())
            if not np.isfinite(row["top_loglik"]):
                raise RuntimeError(f"non-finite top log-likelihood in round {r}")
            trajectory.append(row)
            down = new_down
            log.info("round %d: top log-likelihood %.3f", r, row["top_loglik"])
    finally:
        if pool is not None:
            pool.shutdown()
    return HierarchyModel(spec, lower, top, trajectory)


def infer_top(model: HierarchyModel, observed: Document, sweeps=200, seed=0, exclude_concepts=()):
    """Top-category posterior from the observed modalities of ``observed``.

    Each observed concept's lower posterior is encoded upward; the other
    pseudo-modalities stay absent. With nothing observed, the mean top
    theta over training documents (the model marginal) is returned.
    """
    counts = {}
    for c in model.spec.concepts:
        if c.id in exclude_concepts:
            continue
        part = observed.restrict(c.modalities)
        if part.total() == 0:
            continue
        post = infer_new(model.lower[c.id], part, sweeps=sweeps, seed=seed)
        counts[c.id] = encode_upward(Message("up", c.id, post[None, :]), model.spec.weight)[0]
    if not counts:
        marg = model.top.theta.mean(axis=0)
        return marg / marg.sum()
    return infer_new(model.top, Document(observed.id, counts), sweeps=sweeps, seed=seed)


def predict_cross(model: HierarchyModel, observed: Document, target: str, sweeps=200, seed=0):
    """Predicted feature distribution of ``target`` given the other observed modalities.

    When only the target's own concept is observed this is the lower model's
    ``predict_modality``. Otherwise the other observed concepts go up to the
    top model, and the target concept's distribution comes back down:
    ``sum_c phi_target[c] * sum_k phi_top_Ct[k, c] P(k | observed)``.
    """
    ct = model.spec.concept_of(target)
    obs = observed.without(target)
    observed_concepts = [c.id for c in model.spec.concepts if obs.restrict(c.modalities).total() > 0]
    if observed_concepts == [ct.id]:
        return predict_modality(model.lower[ct.id], obs.restrict(ct.modalities), target,
                                sweeps=sweeps, seed=seed)
    post = infer_top(model, obs, sweeps=sweeps, seed=seed, exclude_concepts=(ct.id,))
    down = post @ model.top.phi[ct.id]
    down = down / down.sum()
    return down @ model.lower[ct.id].phi[target]


def save_hierarchy(model: HierarchyModel, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {c.id: f"lower_{c.id}.json" for c in model.spec.concepts}
    for cid, name in files.items():
        save_model(model.lower[cid], d / name)
    save_model(model.top, d / "top.json")
    dump_json({"spec": model.spec.to_dict(), "lower": files, "top": "top.json"}, d / "hierarchy.json")


def load_hierarchy(directory) -> HierarchyModel:
    d = Path(directory)
    meta = read_json(d / "hierarchy.json")
    spec = HierarchySpec.from_dict(meta["spec"])
    lower = {cid: load_model(d / name) for cid, name in meta["lower"].items()}
    return HierarchyModel(spec, lower, load_model(d / meta["top"]))

