"""Multimodal bag-of-feature corpora: data model, validation and JSON I/O.

A document holds one sparse count vector per modality, stored as a sorted
tuple of ``(feature index, count)`` pairs. A modality missing from a
document is *absent* (no tokens during training, zeros at inference), which
is kept distinct from a present-but-empty vector.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

log = logging.getLogger(__name__)

Sparse = tuple[tuple[int, int], ...]


class CorpusError(ValueError):
    """Base class for corpus problems."""


class CorpusFormatError(CorpusError):
    """The dataset file could not be parsed."""


class CorpusValidationError(CorpusError):
    """A corpus violates a structural invariant."""


@dataclass(frozen=True)
class ModalitySpec:
    id: str
    dimension: int

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CorpusValidationError(f"modality id must be a non-empty string, got {self.id!r}")
        if isinstance(self.dimension, bool) or not isinstance(self.dimension, (int, np.integer)):
            raise CorpusValidationError(f"modality {self.id!r}: dimension must be an integer")
        if self.dimension < 1:
            raise CorpusValidationError(f"modality {self.id!r}: dimension must be >= 1, got {self.dimension}")


def to_sparse(values, where: str = "vector") -> Sparse:
    """Normalize a sparse vector (pairs or mapping) to sorted nonzero pairs.

    Duplicate indices, negative counts and non-integer entries are rejected.
    """
    items = values.items() if isinstance(values, Mapping) else values
    out = {}
    for pair in items:
        try:
            idx, cnt = pair
        except (TypeError, ValueError):
            raise CorpusValidationError(f"{where}: entries must be [index, count] pairs, got {pair!r}") from None
        for name, v in (("index", idx), ("count", cnt)):
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise CorpusValidationError(f"{where}: {name} must be an integer, got {v!r}")
        idx, cnt = int(idx), int(cnt)
        if idx < 0:
            raise CorpusValidationError(f"{where}: negative feature index {idx}")
        if cnt < 0:
            raise CorpusValidationError(f"{where}: negative count {cnt} at index {idx}")
        if idx in out:
            raise CorpusValidationError(f"{where}: duplicate feature index {idx}")
        out[idx] = cnt
    return tuple((i, c) for i, c in sorted(out.items()) if c > 0)


def sparse_from_dense(arr) -> Sparse:
    arr = np.asarray(arr)
    nz = np.flatnonzero(arr)
    return to_sparse([(int(i), int(arr[i])) for i in nz])


def dense(vec: Sparse, dimension: int) -> np.ndarray:
    out = np.zeros(dimension, dtype=np.int64)
    for i, c in vec:
        out[i] = c
    return out


@dataclass(frozen=True)
class Document:
    id: str
    counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CorpusValidationError(f"document id must be a non-empty string, got {self.id!r}")
        object.__setattr__(
            self, "counts",
            {m: to_sparse(v, f"document {self.id!r}, modality {m!r}") for m, v in self.counts.items()},
        )

    def total(self, modality: str | None = None) -> int:
        if modality is not None:
            return sum(c for _, c in self.counts.get(modality, ()))
        return sum(c for vec in self.counts.values() for _, c in vec)

    def restrict(self, modalities) -> "Document":
        keep = set(modalities)
        return Document(self.id, {m: v for m, v in self.counts.items() if m in keep})

    def without(self, modality: str) -> "Document":
        return Document(self.id, {m: v for m, v in self.counts.items() if m != modality})


@dataclass(frozen=True)
class Lexicon:
    words: frozenset

    def __post_init__(self):
        object.__setattr__(self, "words", frozenset(int(w) for w in self.words))

    def validate(self, dimension: int):
        bad = [w for w in self.words if not 0 <= w < dimension]
        if bad:
            raise CorpusValidationError(f"lexicon indices out of range [0, {dimension}): {sorted(bad)[:5]}")

    def indices(self) -> np.ndarray:
        return np.array(sorted(self.words), dtype=np.int64)


@dataclass(frozen=True)
class Corpus:
    specs: tuple
    documents: tuple = ()
    labels: dict | None = None
    vocab: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "documents", tuple(self.documents))
        if self.labels is not None:
            object.__setattr__(self, "labels", dict(self.labels))
        if self.vocab is not None:
            object.__setattr__(self, "vocab", {m: list(v) for m, v in self.vocab.items()})
        self.validate()

    def validate(self):
        dims = {}
        for s in self.specs:
            if not isinstance(s, ModalitySpec):
                raise CorpusValidationError(f"specs must be ModalitySpec, got {s!r}")
            if s.id in dims:
                raise CorpusValidationError(f"duplicate modality id {s.id!r}")
            dims[s.id] = s.dimension
        seen = set()
        for doc in self.documents:
            if doc.id in seen:
                raise CorpusValidationError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
            for m, vec in doc.counts.items():
                if m not in dims:
                    raise CorpusValidationError(f"document {doc.id!r} references undeclared modality {m!r}")
                if vec and vec[-1][0] >= dims[m]:
                    raise CorpusValidationError(
                        f"document {doc.id!r}, modality {m!r}: feature index {vec[-1][0]} "
                        f">= dimension {dims[m]}"
                    )
        if self.labels is not None:
            extra = set(self.labels) - seen
            if extra:
                raise CorpusValidationError(f"labels reference unknown documents: {sorted(extra)[:5]}")
        if self.vocab is not None:
            for m, words in self.vocab.items():
                if m not in dims:
                    raise CorpusValidationError(f"vocab given for undeclared modality {m!r}")
                if len(words) != dims[m]:
                    raise CorpusValidationError(
                        f"vocab for {m!r} has {len(words)} entries, dimension is {dims[m]}")

    @property
    def modalities(self) -> list[str]:
        return [s.id for s in self.specs]

    @property
    def dims(self) -> dict[str, int]:
        return {s.id: s.dimension for s in self.specs}

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.documents]

    def __len__(self):
        return len(self.documents)

    def label_array(self) -> list:
        if self.labels is None:
            raise CorpusValidationError("corpus has no labels")
        missing = [d.id for d in self.documents if d.id not in self.labels]
        if missing:
            raise CorpusValidationError(f"documents without labels: {missing[:5]}")
        return [self.labels[d.id] for d in self.documents]

    def select(self, modalities) -> "Corpus":
        """Corpus restricted to ``modalities`` (in the given order)."""
        dims = self.dims
        unknown = [m for m in modalities if m not in dims]
        if unknown:
            raise CorpusValidationError(f"unknown modalities {unknown}")
        return Corpus(
            [ModalitySpec(m, dims[m]) for m in modalities],
            [d.restrict(modalities) for d in self.documents],
            self.labels,
            {m: v for m, v in self.vocab.items() if m in modalities} if self.vocab else None,
        )

    def subset(self, ids) -> "Corpus":
        keep = set(ids)
        docs = [d for d in self.documents if d.id in keep]
        labels = None if self.labels is None else {k: v for k, v in self.labels.items() if k in keep}
        return Corpus(self.specs, docs, labels, self.vocab)

    def dense(self, modality: str) -> np.ndarray:
        """(M, W) count matrix for one modality; absent vectors become zero rows."""
        W = self.dims[modality]
        out = np.zeros((len(self.documents), W), dtype=np.int64)
        for j, d in enumerate(self.documents):
            for i, c in d.counts.get(modality, ()):
                out[j, i] = c
        return out


def corpus_to_dict(corpus: Corpus) -> dict:
    out = {"specs": [{"id": s.id, "dimension": int(s.dimension)} for s in corpus.specs]}
    if corpus.vocab is not None:
        out["vocab"] = corpus.vocab
    docs = []
    for d in corpus.documents:
        row = {"id": d.id, "counts": {m: [[i, c] for i, c in v] for m, v in d.counts.items()}}
        if corpus.labels is not None and d.id in corpus.labels:
            row["label"] = corpus.labels[d.id]
        docs.append(row)
    out["documents"] = docs
    return out


def corpus_from_dict(data) -> Corpus:
    if not isinstance(data, dict):
        raise CorpusFormatError("top level must be an object with 'specs' and 'documents'")
    if "specs" not in data:
        raise CorpusFormatError("missing field 'specs'")
    specs = []
    for n, s in enumerate(data["specs"]):
        try:
            specs.append(ModalitySpec(s["id"], s["dimension"]))
        except (KeyError, TypeError) as exc:
            raise CorpusFormatError(f"specs[{n}]: expected {{id, dimension}}, got {s!r}") from exc
    docs, labels = [], {}
    any_label = False
    for n, d in enumerate(data.get("documents", [])):
        if not isinstance(d, dict) or "id" not in d:
            raise CorpusFormatError(f"documents[{n}]: expected an object with 'id'")
        counts = d.get("counts", {})
        if not isinstance(counts, dict):
            raise CorpusFormatError(f"documents[{n}].counts: expected an object")
        docs.append(Document(d["id"], counts))
        if "label" in d:
            any_label = True
            labels[d["id"]] = d["label"]
    return Corpus(specs, docs, labels if any_label else None, data.get("vocab"))


def dump_json(obj, path):
    """Write ``obj`` as deterministic JSON (sorted keys, fixed separators)."""
    path = Path(path)
    try:
        with path.open("w") as fh:
            json.dump(obj, fh, sort_keys=True, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def save_corpus(corpus: Corpus, path):
    dump_json(corpus_to_dict(corpus), path)


def load_corpus(path) -> Corpus:
    data = read_json(path)
    try:
        return corpus_from_dict(data)
    except CorpusError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def load_lexicon(path, corpus: Corpus, modality: str) -> Lexicon:
    """Read a lexicon file: one feature index or vocabulary word per line.

    Words are resolved against ``corpus.vocab[modality]``; words missing
    from the vocabulary are skipped (never uttered in this corpus).
    """
    dim = corpus.dims[modality]
    vocab = (corpus.vocab or {}).get(modality)
    lookup = {w: i for i, w in enumerate(vocab)} if vocab else {}
    words, skipped = set(), 0
    for line in Path(path).read_text().splitlines():
        tok = line.strip()
        if not tok or tok.startswith("#"):
            continue
        if tok.lstrip("-").isdigit():
            words.add(int(tok))
        elif tok in lookup:
            words.add(lookup[tok])
        else:
            skipped += 1
    if skipped:
        log.info("lexicon %s: %d words not in the %r vocabulary", path, skipped, modality)
    lex = Lexicon(frozenset(words))
    lex.validate(dim)
    return lex


def split_stratified(corpus: Corpus, per_category_counts: Mapping, seed: int):
    """Partition ``corpus`` into train/test with exact per-label sizes.

    ``per_category_counts`` maps label -> (n_train, n_test); the two numbers
    must add up to the number of documents carrying that label. Both halves
    keep the original document order.
    """
    if corpus.labels is None:
        raise CorpusValidationError("split_stratified needs labels")
    by_label = {}
    for d in corpus.documents:
        if d.id not in corpus.labels:
            raise CorpusValidationError(f"document {d.id!r} has no label")
        by_label.setdefault(corpus.labels[d.id], []).append(d.id)
    for label in by_label:
        if label not in per_category_counts:
            raise CorpusValidationError(f"no split request for category {label!r}")
    for label, (n_train, n_test) in per_category_counts.items():
        have = len(by_label.get(label, []))
        if n_train < 0 or n_test < 0 or n_train + n_test != have:
            raise CorpusValidationError(
                f"category {label!r}: requested {n_train}+{n_test} documents, {have} available")
    rng = np.random.default_rng(seed)
    test_ids = set()
    for label in sorted(by_label, key=str):
        ids = by_label[label]
        order = rng.permutation(len(ids))
        n_train = per_category_counts[label][0]
        test_ids.update(ids[i] for i in order[n_train:])
    train = corpus.subset([i for i in corpus.ids if i not in test_ids])
    test = corpus.subset([i for i in corpus.ids if i in test_ids])
    return train, test


def proportional_split_request(corpus: Corpus, test_fraction: float) -> dict:
    """Per-label (train, test) counts with ``test_fraction`` held out (largest remainder)."""
    sizes = {}
    for lab in corpus.label_array():
        sizes[lab] = sizes.get(lab, 0) + 1
    total = sum(sizes.values())
    want = test_fraction * total
    raw = {k: v * test_fraction for k, v in sizes.items()}
    test = {k: int(np.floor(x)) for k, x in raw.items()}
    left = int(round(want)) - sum(test.values())
    for k in sorted(raw, key=lambda k: (-(raw[k] - test[k]), str(k)))[:max(left, 0)]:
        test[k] += 1
    return {k: (sizes[k] - test[k], test[k]) for k in sizes}
