"""Rand index, chance baselines and KL-divergence evaluation of cross-modal predictions."""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import classify
from .corpus import Corpus, Lexicon, dense
from .hierarchy import HierarchyModel, predict_cross

log = logging.getLogger(__name__)


def _codes(labels) -> np.ndarray:
    return np.unique(np.asarray(labels, dtype=object).astype(str), return_inverse=True)[1].ravel()


def _pairs(x):
    return x * (x - 1) / 2


def rand_index(a, b) -> float:
    """Fraction of item pairs on which two partitions agree."""
    if len(a) != len(b):
        raise ValueError(f"label arrays differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("rand index needs at least 2 items")
    ca, cb = _codes(a), _codes(b)
    table = np.zeros((ca.max() + 1, cb.max() + 1), dtype=np.int64)
    np.add.at(table, (ca, cb), 1)
    together_both = _pairs(table).sum()
    together_a = _pairs(table.sum(axis=1)).sum()
    together_b = _pairs(table.sum(axis=0)).sum()
    total = _pairs(n)
    # agreeing pairs = together in both + apart in both
    return float((total + 2 * together_both - together_a - together_b) / total)


def _rand_batch(ref_onehot, assign, K):
    """Rand index of one reference against each row of ``assign`` (T, n)."""
    n = assign.shape[1]
    onehot = np.eye(K, dtype=np.int64)[assign]  # (T, n, K)
    table = np.einsum("ni,tnk->tik", ref_onehot, onehot)
    together_both = _pairs(table).sum(axis=(1, 2))
    together_a = _pairs(ref_onehot.sum(axis=0)).sum()
    together_b = _pairs(onehot.sum(axis=1)).sum(axis=1)
    total = _pairs(n)
    return (total + 2 * together_both - together_a - together_b) / total


def chance_rand(reference, K: int, trials: int = 100_000, seed: int = 0, scheme: str = "uniform",
                chunk: int = 5000) -> float:
    """Monte Carlo mean Rand index between ``reference`` and random partitions.

    ``scheme="uniform"`` draws every item's category uniformly from ``K``;
    ``scheme="sized"`` shuffles the reference labels (same category sizes).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    codes = _codes(reference)
    n = codes.size
    ref = np.eye(codes.max() + 1, dtype=np.int64)[codes]
    rng = np.random.default_rng(seed)
    total, done = 0.0, 0
    while done < trials:
        t = min(chunk, trials - done)
        if scheme == "uniform":
            assign = rng.integers(0, K, size=(t, n))
            k = K
        elif scheme == "sized":
            assign = rng.permuted(np.broadcast_to(codes, (t, n)), axis=1)
            k = codes.max() + 1
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        total += _rand_batch(ref, assign, k).sum()
        done += t
    return float(total / trials)


def analytic_chance_rand(sizes, K: int) -> float:
    """Expected Rand index against uniform random K-category assignment."""
    sizes = np.asarray(sizes)
    n = sizes.sum()
    p = _pairs(sizes).sum() / _pairs(n)
    q = 1.0 / K
    return float(p * q + (1 - p) * (1 - q))


def _as_prob(actual):
    a = np.asarray(actual, dtype=np.float64)
    s = a.sum()
    if not s > 0:
        raise ValueError("actual distribution has no mass")
    return a / s


def kl_divergence(actual, predicted) -> float:
    """KL(actual/sum(actual) || predicted), natural log, with 0 log 0 = 0."""
    p = _as_prob(actual)
    q = np.asarray(predicted, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    support = p > 0
    if np.any(q[support] <= 0):
        warnings.warn("predicted distribution is zero where actual has mass; KL is infinite",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def uniform_kl(actual) -> float:
    a = np.asarray(actual)
    return kl_divergence(a, np.full(a.shape[0], 1.0 / a.shape[0]))


def restrict_lexicon(actual, predicted, lexicon: Lexicon):
    """Both vectors restricted to the lexicon; prediction renormalized over it.

    Returns None when the actual counts have no mass on the lexicon.
    """
    if not lexicon.words:
        raise ValueError("lexicon is empty")
    idx = lexicon.indices()
    a = np.asarray(actual)[idx]
    if a.sum() <= 0:
        return None
    q = np.asarray(predicted, dtype=np.float64)[idx]
    return a, q / q.sum()


@dataclass
class KLRow:
    doc_id: str
    source: str
    source_modalities: str
    target: str
    kl_predicted: float
    kl_uniform: float
    kl_predicted_lexicon: float = math.nan
    kl_uniform_lexicon: float = math.nan
    lexicon_excluded: bool = True


@dataclass
class EvalReport:
    rand: float = math.nan
    chance_rand: float = math.nan
    chance_rand_sized: float = math.nan
    kl_rows: list = field(default_factory=list)

    def summary(self) -> list[dict]:
        """Mean/SD per (target, source), with source 'uniform' for the baseline."""
        groups: dict = {}
        for r in self.kl_rows:
            groups.setdefault((r.target, r.source), []).append(r)
        out = []
        for target in dict.fromkeys(r.target for r in self.kl_rows):
            rows = [r for (t, _), rs in groups.items() if t == target for r in rs]
            out.append(_stat(target, "uniform", [r.kl_uniform for r in rows]))
            for (t, s), rs in groups.items():
                if t == target:
                    out.append(_stat(target, s, [r.kl_predicted for r in rs]))
            lex = [r for r in rows if not r.lexicon_excluded]
            if lex:
                out.append(_stat(f"{target}(lexicon)", "uniform", [r.kl_uniform_lexicon for r in lex]))
                for (t, s), rs in groups.items():
                    vals = [r.kl_predicted_lexicon for r in rs if not r.lexicon_excluded]
                    if t == target and vals:
                        out.append(_stat(f"{target}(lexicon)", s, vals))
        return out

    def mean_kl(self, target, source=None) -> float:
        """Mean predicted KL for a target (over all sources when ``source`` is None)."""
        vals = [r.kl_predicted for r in self.kl_rows if r.target == target and source in (None, r.source)]
        return float(np.mean(vals))

    def mean_uniform_kl(self, target) -> float:
        return float(np.mean([r.kl_uniform for r in self.kl_rows if r.target == target]))


def _stat(target, source, vals):
    vals = np.asarray(vals, dtype=np.float64)
    sd = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
    return {"target": target, "source": source, "n": int(vals.size), "mean": float(vals.mean()), "sd": sd}


def evaluate_predictions(model: HierarchyModel, test: Corpus, lexicon: Lexicon | None = None,
                         lexicon_modality: str | None = None, sweeps: int = 200, seed: int = 0,
                         emotion_concept: str | None = None, chance_trials: int = 100_000) -> EvalReport:
    """Cross-modal KL for every test document and every (source concept, target modality).

    Each source concept's modalities are the only observed information; the
    target is any modality of another concept. Rows whose source is empty or
    whose target has no counts are skipped.
    """
    spec = model.spec
    if lexicon_modality is None:
        lexicon_modality = spec.concepts[-1].modalities[0]
    dims = test.dims
    report = EvalReport()
    for j, doc in enumerate(test.documents):
        for src in spec.concepts:
            observed = doc.restrict(src.modalities)
            if observed.total() == 0:
                continue
            for tc in spec.concepts:
                if tc.id == src.id:
                    continue
                for target in tc.modalities:
                    actual = dense(doc.counts.get(target, ()), dims[target])
                    if actual.sum() == 0:
                        continue
                    pred = predict_cross(model, observed, target, sweeps=sweeps, seed=seed + j)
                    row = KLRow(doc.id, src.id, "+".join(src.modalities), target,
                                kl_divergence(actual, pred), uniform_kl(actual))
                    if lexicon is not None and target == lexicon_modality:
                        sub = restrict_lexicon(actual, pred, lexicon)
                        if sub is not None:
                            row.kl_predicted_lexicon = kl_divergence(*sub)
                            row.kl_uniform_lexicon = uniform_kl(sub[0])
                            row.lexicon_excluded = False
                    report.kl_rows.append(row)
    cid = emotion_concept or spec.concepts[0].id
    if test.labels is not None and len(test) >= 2:
        lower = model.lower[cid]
        cats = [classify(lower, d.restrict(spec.concept(cid).modalities), sweeps=sweeps, seed=seed + j)
                for j, d in enumerate(test.documents)]
        labels = test.label_array()
        report.rand = rand_index(labels, cats)
        report.chance_rand = chance_rand(labels, lower.K, chance_trials, seed)
        report.chance_rand_sized = chance_rand(labels, lower.K, chance_trials, seed, scheme="sized")
    return report


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, rows, columns):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_report(report: EvalReport, directory):
    d = Path(directory)
    cols = [f.name for f in fields(KLRow)]
    write_csv(d / "report.csv", [vars(r) for r in report.kl_rows], cols)
    write_csv(d / "summary.csv", report.summary(), ["target", "source", "n", "mean", "sd"])
    write_csv(d / "metrics.csv",
              [{"metric": k, "value": getattr(report, k)} for k in ("rand", "chance_rand", "chance_rand_sized")],
              ["metric", "value"])
