"""Collapsed Gibbs sampling for multimodal LDA (MLDA).

Plain LDA is the one-modality case. All modalities of a document share one
category distribution; each modality has its own category-feature
distribution. Tokens from every modality are flattened into one array and
indexed into a stacked feature table, so a single kernel call resamples the
whole corpus once.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .corpus import Corpus, Document

log = logging.getLogger(__name__)

DEFAULT_INFER_SWEEPS = 200
DEFAULT_INFER_BURN_IN = 50


class ConfigError(ValueError):
    """Invalid model configuration or corpus/config mismatch."""


class StateError(RuntimeError):
    """Count tables disagree with the assignments."""


@dataclass(frozen=True)
class ModelConfig:
    K: int
    beta: dict
    alpha: float = 1.0
    sweeps: int = 500
    burn_in: int = 100
    seed: int = 0
    early_stop: bool = False
    debug: bool = False

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError(f"K must be a positive integer, got {self.K}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if not self.beta:
            raise ConfigError("beta must name at least one modality")
        for m, b in self.beta.items():
            if not b > 0:
                raise ConfigError(f"beta[{m!r}] must be > 0, got {b}")
        if self.sweeps < 1:
            raise ConfigError(f"sweeps must be >= 1, got {self.sweeps}")
        if not 0 <= self.burn_in < self.sweeps:
            raise ConfigError(f"burn_in must be in [0, sweeps), got {self.burn_in}")

    @property
    def modalities(self) -> list[str]:
        return list(self.beta)

    @classmethod
    def for_modalities(cls, modalities, K, beta=1.0, **kw):
        return cls(K=K, beta={m: float(beta) for m in modalities}, **kw)


class TopicState:
    """Assignments plus the three count tables the sampler conditions on.

    ``n_feat`` stacks every modality's feature rows; feature ``w`` of
    modality ``m`` lives at row ``offsets[m] + w``.
    """

    def __init__(self, modalities, dims, K, tok_doc, tok_mod, tok_word, z, n_docs, rng):
        self.modalities = list(modalities)
        self.dims = np.asarray(dims, dtype=np.int64)
        self.K = int(K)
        self.offsets = np.concatenate([[0], np.cumsum(self.dims)[:-1]]).astype(np.int64)
        self.tok_doc = tok_doc
        self.tok_mod = tok_mod
        self.tok_word = tok_word
        self.z = z
        self.n_docs = int(n_docs)
        self.rng = rng
        self.n_doc, self.n_feat, self.n_cat = self.rebuild()

    def rebuild(self):
        """Recompute all count tables from the assignments."""
        K = self.K
        n_doc = np.zeros((self.n_docs, K), dtype=np.int64)
        n_feat = np.zeros((int(self.dims.sum()), K), dtype=np.int64)
        n_cat = np.zeros((len(self.modalities), K), dtype=np.int64)
        np.add.at(n_doc, (self.tok_doc, self.z), 1)
        np.add.at(n_feat, (self.tok_word, self.z), 1)
        np.add.at(n_cat, (self.tok_mod, self.z), 1)
        return n_doc, n_feat, n_cat

    def check(self):
        n_doc, n_feat, n_cat = self.rebuild()
        if not (np.array_equal(n_doc, self.n_doc) and np.array_equal(n_feat, self.n_feat)
                and np.array_equal(n_cat, self.n_cat)):
            raise StateError("count tables disagree with assignments")
        for mi in range(len(self.modalities)):
            lo = self.offsets[mi]
            block = self.n_feat[lo:lo + self.dims[mi]]
            if not np.array_equal(block.sum(axis=0), self.n_cat[mi]):
                raise StateError(f"feature counts of {self.modalities[mi]!r} do not sum to n_cat")

    def feature_counts(self, modality) -> np.ndarray:
        """(K, W) counts of features of ``modality`` per category."""
        mi = self.modalities.index(modality)
        lo = self.offsets[mi]
        return self.n_feat[lo:lo + self.dims[mi]].T

    def copy(self) -> "TopicState":
        new = object.__new__(TopicState)
        new.__dict__.update(self.__dict__)
        for name in ("z", "n_doc", "n_feat", "n_cat"):
            setattr(new, name, getattr(self, name).copy())
        return new


def _check_modalities(corpus: Corpus, config: ModelConfig):
    if list(corpus.modalities) != config.modalities:
        if set(corpus.modalities) == set(config.modalities):
            return
        raise ConfigError(
            f"corpus modalities {corpus.modalities} do not match config modalities {config.modalities}")


def _tokens(corpus: Corpus, modalities):
    dims = corpus.dims
    offsets = np.concatenate([[0], np.cumsum([dims[m] for m in modalities])[:-1]])
    docs, mods, words = [], [], []
    for j, d in enumerate(corpus.documents):
        for mi, m in enumerate(modalities):
            for w, c in d.counts.get(m, ()):
                docs.append(np.full(c, j))
                mods.append(np.full(c, mi))
                words.append(np.full(c, offsets[mi] + w))
    if not docs:
        e = np.zeros(0, dtype=np.int64)
        return e, e.copy(), e.copy()
    cat = lambda xs: np.ascontiguousarray(np.concatenate(xs), dtype=np.int64)  # noqa: E731
    return cat(docs), cat(mods), cat(words)


def init_assignments(corpus: Corpus, config: ModelConfig, rng=None) -> TopicState:
    """Draw a uniformly random category for every token."""
    _check_modalities(corpus, config)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    mods = config.modalities
    tok_doc, tok_mod, tok_word = _tokens(corpus, mods)
    z = np.ascontiguousarray(rng.integers(0, config.K, size=tok_doc.shape[0]), dtype=np.int64)
    dims = [corpus.dims[m] for m in mods]
    return TopicState(mods, dims, config.K, tok_doc, tok_mod, tok_word, z, len(corpus), rng)


def _bias_array(bias, n_docs, K):
    """Validated (M, K) bias, or None when absent or uniform in every row."""
    if bias is None:
        return None
    b = np.ascontiguousarray(bias, dtype=np.float64)
    if b.shape != (n_docs, K):
        raise ConfigError(f"bias must have shape {(n_docs, K)}, got {b.shape}")
    if np.any(b < 0) or not np.all(np.isfinite(b)):
        raise ConfigError("bias entries must be finite and nonnegative")
    if np.any(np.abs(b.sum(axis=1) - 1.0) > 1e-9):
        raise ConfigError("bias rows must lie on the simplex")
    if np.all(b == b[:, :1]):
        return None
    return b


def gibbs_sweep(state: TopicState, config: ModelConfig, bias=None, *, kernels=None) -> int:
    """Resample every token once in place; return how many changed category.

    The conditional for a token of feature ``w`` in modality ``m`` of
    document ``j`` is proportional to
    ``(n_doc[j,k] + alpha) * (n_feat[w,k] + beta_m) / (n_cat[m,k] + W_m beta_m)``,
    times ``bias[j,k]`` when a bias is supplied.
    """
    kernels = kernels or _backend.kernels
    b = _bias_array(bias, state.n_docs, state.K)
    return _sweep(state, config, b, kernels)


def _sweep(state, config, b, kernels):
    betas = np.array([config.beta[m] for m in state.modalities], dtype=np.float64)
    wbetas = state.dims * betas
    u = state.rng.random(state.z.shape[0])
    cum = np.zeros(state.K)
    dummy = b if b is not None else np.ones((1, state.K))
    changed = kernels.sweep(
        state.z, state.tok_doc, state.tok_mod, state.tok_word,
        state.n_doc, state.n_feat, state.n_cat,
        float(config.alpha), betas, wbetas, dummy, b is not None, u, cum,
    )
    if config.debug or os.environ.get("MMTOPIC_DEBUG"):
        state.check()
    return changed


def estimate_theta(state: TopicState, alpha: float) -> np.ndarray:
    n_j = state.n_doc.sum(axis=1, keepdims=True)
    return (state.n_doc + alpha) / (n_j + state.K * alpha)


def estimate_phi(state: TopicState, beta: dict) -> dict:
    phi = {}
    for mi, m in enumerate(state.modalities):
        counts = state.feature_counts(m)
        W = state.dims[mi]
        phi[m] = (counts + beta[m]) / (state.n_cat[mi][:, None] + W * beta[m])
    return phi


@dataclass
class FittedModel:
    config: ModelConfig
    theta: np.ndarray
    phi: dict
    doc_ids: list = field(default_factory=list)
    state: TopicState | None = None
    sweeps_run: int = 0

    @property
    def K(self) -> int:
        return self.config.K

    @property
    def modalities(self) -> list[str]:
        return self.config.modalities

    @property
    def dims(self) -> dict:
        return {m: p.shape[1] for m, p in self.phi.items()}

    def categories(self) -> np.ndarray:
        """Argmax category of every training document (lowest index on ties)."""
        return np.argmax(self.theta, axis=1)


def fit(corpus: Corpus, config: ModelConfig, bias=None, state: TopicState | None = None,
        *, kernels=None) -> FittedModel:
    """Run ``config.sweeps`` sweeps and estimate theta and phi from the final state.

    Passing ``state`` continues from an earlier state (same corpus) with a
    generator reseeded from ``config.seed``.
    """
    _check_modalities(corpus, config)
    kernels = kernels or _backend.kernels
    if state is None:
        state = init_assignments(corpus, config)
    else:
        if state.n_docs != len(corpus) or state.K != config.K:
            raise ConfigError("state does not match corpus/config")
        state.rng = np.random.default_rng(config.seed)
    b = _bias_array(bias, state.n_docs, state.K)
    n_tok = max(state.z.shape[0], 1)
    streak = 0
    run = 0
    for s in range(config.sweeps):
        changed = _sweep(state, config, b, kernels)
        run += 1
        if config.early_stop and s >= config.burn_in:
            streak = streak + 1 if changed / n_tok < 0.01 else 0
            if streak >= 10:
                log.debug("early stop after %d sweeps", run)
                break
    return FittedModel(
        config=config,
        theta=estimate_theta(state, config.alpha),
        phi=estimate_phi(state, config.beta),
        doc_ids=corpus.ids,
        state=state,
        sweeps_run=run,
    )


def log_likelihood(model: FittedModel, corpus: Corpus, theta=None) -> float:
    """Sum over tokens of log sum_k theta[j,k] phi_m[k,w].

    ``theta`` defaults to the model's training estimates, so ``corpus``
    must then be the training corpus.
    """
    theta = model.theta if theta is None else np.asarray(theta)
    if theta.shape[0] != len(corpus):
        raise ConfigError(f"theta has {theta.shape[0]} rows for {len(corpus)} documents")
    total = 0.0
    for m in model.modalities:
        X = corpus.dense(m) if m in corpus.dims else None
        if X is None:
            continue
        mix = theta @ model.phi[m]
        nz = X > 0
        total += float(np.sum(X[nz] * np.log(mix[nz])))
    return total


def _observed_tokens(model: FittedModel, observed: Document, exclude=()):
    unknown = [m for m in observed.counts if m not in model.phi]
    if unknown:
        raise ConfigError(f"document {observed.id!r} has modalities unknown to the model: {unknown}")
    words, blocks, offset = [], [], 0
    for m in model.modalities:
        if m in exclude:
            continue
        vec = observed.counts.get(m, ())
        if not vec:
            continue
        for w, c in vec:
            words.append(np.full(c, offset + w))
        blocks.append(model.phi[m].T)
        offset += model.phi[m].shape[1]
    if not words:
        return None, None
    tok = np.ascontiguousarray(np.concatenate(words), dtype=np.int64)
    return tok, np.ascontiguousarray(np.vstack(blocks))


def infer_new(model: FittedModel, observed: Document, sweeps: int = DEFAULT_INFER_SWEEPS,
              seed: int = 0, burn_in: int | None = None, *, exclude=(), kernels=None):
    """Posterior category distribution of an unseen document, phi held fixed.

    Averages the smoothed ``(n_k + alpha) / (n + K alpha)`` over post-burn-in
    sweeps. ``burn_in`` defaults to 50, capped at a quarter of ``sweeps``.
    A document with no tokens gets the uniform distribution.
    """
    if burn_in is None:
        burn_in = min(DEFAULT_INFER_BURN_IN, sweeps // 4)
    if not 0 <= burn_in < sweeps:
        raise ConfigError(f"need 0 <= burn_in < sweeps, got burn_in={burn_in}, sweeps={sweeps}")
    K = model.K
    tok, phi_t = _observed_tokens(model, observed, exclude)
    if tok is None:
        return np.full(K, 1.0 / K)
    kernels = kernels or _backend.kernels
    rng = np.random.default_rng(seed)
    z = np.ascontiguousarray(rng.integers(0, K, size=tok.shape[0]), dtype=np.int64)
    n_k = np.bincount(z, minlength=K).astype(np.int64)
    u = rng.random((sweeps, tok.shape[0]))
    acc = np.zeros(K)
    kept = kernels.infer(z, tok, phi_t, float(model.config.alpha), n_k, u, burn_in, acc, np.zeros(K))
    post = acc / kept
    return post / post.sum()


def classify(model: FittedModel, observed: Document, **kw) -> int:
    return int(np.argmax(infer_new(model, observed, **kw)))


def predict_modality(model: FittedModel, observed: Document, target: str, posterior=None, **kw):
    """Predicted feature distribution of ``target``: sum_k phi_target[k] P(k | observed).

    Any counts the document has for ``target`` are ignored.
    """
    if target not in model.phi:
        raise ConfigError(f"unknown target modality {target!r}")
    if posterior is None:
        posterior = infer_new(model, observed, exclude=(target,), **kw)
    return np.asarray(posterior) @ model.phi[target]


def heldout_log_likelihood(model: FittedModel, corpus: Corpus, sweeps=DEFAULT_INFER_SWEEPS,
                           seed=0) -> float:
    theta = np.array([infer_new(model, d, sweeps=sweeps, seed=seed + j)
                      for j, d in enumerate(corpus.documents)]).reshape(len(corpus), model.K)
    return log_likelihood(model, corpus, theta)


def grid_search_k(corpus: Corpus, k_range, base_config: ModelConfig, heldout: Corpus | None = None):
    """Fit one model per K; return (best K, [(K, log-likelihood), ...]).

    Uses training log-likelihood, or held-out log-likelihood when
    ``heldout`` is given. Ties go to the smallest K.
    """
    ks = list(k_range)
    if not ks:
        raise ConfigError("k_range is empty")
    table = []
    for K in sorted(ks):
        model = fit(corpus, replace(base_config, K=K))
        ll = heldout_log_likelihood(model, heldout) if heldout is not None else log_likelihood(model, corpus)
        table.append((K, ll))
    best = max(table, key=lambda row: (row[1], -row[0]))[0]
    return best, table


def relabel(model: FittedModel, perm) -> FittedModel:
    """Model with categories renamed: new category ``perm[k]`` is old ``k``."""
    perm = np.asarray(perm)
    inv = np.argsort(perm)
    return FittedModel(
        config=model.config,
        theta=model.theta[:, inv],
        phi={m: p[inv] for m, p in model.phi.items()},
        doc_ids=list(model.doc_ids),
        sweeps_run=model.sweeps_run,
    )


def _sig(a):
    return [float(f"{x:.12g}") for x in np.ravel(a)]


def _matrix(a):
    a = np.asarray(a)
    return [_sig(row) for row in a.reshape(a.shape[0], -1)] if a.size else []


def model_to_dict(model: FittedModel) -> dict:
    c = model.config
    return {
        "config": {"K": c.K, "alpha": c.alpha, "beta": dict(c.beta), "sweeps": c.sweeps,
                   "burn_in": c.burn_in, "seed": c.seed, "early_stop": c.early_stop},
        "seed": c.seed,
        "modalities": model.modalities,
        "doc_ids": list(model.doc_ids),
        "theta": _matrix(model.theta),
        "phi": {m: _matrix(p) for m, p in model.phi.items()},
        "sweeps_run": model.sweeps_run,
    }


def model_from_dict(data: dict) -> FittedModel:
    cfg = data["config"]
    config = ModelConfig(K=cfg["K"], beta=cfg["beta"], alpha=cfg["alpha"], sweeps=cfg["sweeps"],
                         burn_in=cfg["burn_in"], seed=cfg["seed"], early_stop=cfg.get("early_stop", False))
    theta = np.array(data["theta"], dtype=np.float64).reshape(len(data["doc_ids"]), config.K)
    phi = {m: np.array(data["phi"][m], dtype=np.float64) for m in data["modalities"]}
    return FittedModel(config, theta, phi, list(data["doc_ids"]), sweeps_run=data.get("sweeps_run", 0))


def save_model(model: FittedModel, path):
    from .corpus import dump_json
    dump_json(model_to_dict(model), path)


def load_model(path) -> FittedModel:
    from .corpus import read_json
    return model_from_dict(read_json(path))
