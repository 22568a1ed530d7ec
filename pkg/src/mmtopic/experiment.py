"""Experiment configuration and the end-to-end pipeline steps behind the CLI."""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import preprocess as pp
from .core import ConfigError, ModelConfig, fit
from .corpus import (Corpus, Document, ModalitySpec, load_corpus, load_lexicon, proportional_split_request,
                     read_json, sparse_from_dense, split_stratified)
from .evaluate import chance_rand, rand_index
from .hierarchy import HierarchySpec, emotion_spec, train_hierarchy
from .synth import (QUADRANT_SPLIT, QUADRANTS, SynthShape, desk_shape, make_separable_params,
                    sample_corpus)

log = logging.getLogger(__name__)

DEFAULTS = {
    "seed": 0,
    "corpus": None,
    "synth": None,
    "hierarchy": None,
    "split": None,
    "lexicon": None,
    "lexicon_modality": None,
    "eval": {"sweeps": 200, "chance_trials": 100_000},
    "compare": {"runs": 10, "sweeps": 500, "burn_in": 100},
    "preprocess": None,
    "out": "out",
}


@dataclass
class ExperimentConfig:
    seed: int = 0
    corpus: str | None = None
    synth: dict | None = None
    hierarchy: dict | None = None
    split: object = None
    lexicon: str | None = None
    lexicon_modality: str | None = None
    eval: dict = field(default_factory=lambda: dict(DEFAULTS["eval"]))
    compare: dict = field(default_factory=lambda: dict(DEFAULTS["compare"]))
    preprocess: dict | None = None
    out: str = "out"
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        merged = copy.deepcopy(DEFAULTS)
        for key in ("eval", "compare"):
            merged[key].update(data.get(key) or {})
        for key, value in data.items():
            if key not in ("eval", "compare"):
                merged[key] = value
        return cls(**merged, base_dir=Path(base_dir) if base_dir else Path.cwd())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(read_json(path), path.parent)

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self, needs_data=True):
        if needs_data and (self.corpus is None) == (self.synth is None):
            raise ConfigError("config needs exactly one data source: 'corpus' or 'synth'")
        if self.corpus is not None and not self.path(self.corpus).is_file():
            raise ConfigError(f"corpus file not found: {self.path(self.corpus)}")
        if self.lexicon is not None and not self.path(self.lexicon).is_file():
            raise ConfigError(f"lexicon file not found: {self.path(self.lexicon)}")
        if self.synth is not None:
            synth_shape(self.synth)
        self.hierarchy_spec()
        if self.split is not None and not (self.split == "quadrants" or isinstance(self.split, dict)):
            raise ConfigError("split must be null, 'quadrants', {'test_fraction': f} or {'counts': {...}}")
        if int(self.compare.get("runs", 1)) < 1:
            raise ConfigError("compare.runs must be >= 1")
        ModelConfig.for_modalities(["x"], 1, sweeps=int(self.compare["sweeps"]),
                                   burn_in=int(self.compare["burn_in"]))

    def hierarchy_spec(self) -> HierarchySpec:
        if self.hierarchy is None:
            return emotion_spec()
        data = dict(self.hierarchy)
        if "concepts" not in data:
            return emotion_spec(**data)
        return HierarchySpec.from_dict(data)


def synth_shape(options: dict) -> SynthShape:
    opts = dict(options)
    if "shape" in opts:
        return SynthShape.from_dict(opts["shape"])
    preset = opts.get("preset", "desk")
    if preset != "desk":
        raise ConfigError(f"unknown synth preset {preset!r}")
    M = int(opts.get("M", 60))
    if M < 0:
        raise ConfigError("synth.M must be >= 0")
    return desk_shape(M=M, complementary=bool(opts.get("complementary", True)), tokens=opts.get("tokens"))


def synth_data(options: dict, seed: int):
    shape = synth_shape(options)
    params = make_separable_params(shape, float(options.get("concentration", 0.05)),
                                   int(options.get("params_seed", seed)))
    corpus, truth = sample_corpus(params, seed)
    return corpus, truth, params


def resolve_corpus(cfg: ExperimentConfig, seed=None) -> Corpus:
    if cfg.corpus is not None:
        return load_corpus(cfg.path(cfg.corpus))
    return synth_data(cfg.synth, cfg.seed if seed is None else seed)[0]


def split_request(cfg: ExperimentConfig, corpus: Corpus) -> dict:
    if cfg.split == "quadrants":
        labels = sorted(set(corpus.label_array()), key=lambda s: QUADRANTS.index(s) if s in QUADRANTS else 99)
        if list(labels) != list(QUADRANTS):
            raise ConfigError("split 'quadrants' needs the four quadrant labels; give explicit counts instead")
        return dict(zip(QUADRANTS, QUADRANT_SPLIT))
    if "counts" in cfg.split:
        return {k: tuple(v) for k, v in cfg.split["counts"].items()}
    if "test_fraction" in cfg.split:
        return proportional_split_request(corpus, float(cfg.split["test_fraction"]))
    raise ConfigError(f"cannot interpret split {cfg.split!r}")


def split(cfg: ExperimentConfig, corpus: Corpus):
    if cfg.split is None:
        return corpus, corpus
    return split_stratified(corpus, split_request(cfg, corpus), cfg.seed)


def compare_models(corpus: Corpus, spec: HierarchySpec, seed: int, sweeps=500, burn_in=100,
                   concept: str | None = None) -> dict:
    """Rand index vs labels for single-modality LDAs, the concept MLDA and the full hierarchy.

    The first concept of ``spec`` (interoception) supplies the compared
    modalities and its K.
    """
    c = spec.concept(concept) if concept else spec.concepts[0]
    labels = corpus.label_array()
    out = {}
    for m in c.modalities:
        cfg = ModelConfig.for_modalities([m], c.K, beta=spec.beta, alpha=spec.alpha, sweeps=sweeps,
                                         burn_in=burn_in, seed=seed)
        out[f"LDA({m})"] = rand_index(labels, fit(corpus.select([m]), cfg).categories())
    cfg = ModelConfig.for_modalities(c.modalities, c.K, beta=spec.beta, alpha=spec.alpha, sweeps=sweeps,
                                     burn_in=burn_in, seed=seed)
    out[f"MLDA({'+'.join(c.modalities)})"] = rand_index(labels, fit(corpus.select(c.modalities), cfg).categories())
    model = train_hierarchy(corpus, spec, seed)
    out["mMLDA(ALL)"] = rand_index(labels, model.emotion_categories(c.id))
    return out


def mean_sd(values):
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), (float(v.std(ddof=1)) if v.size > 1 else math.nan)


def run_compare(cfg: ExperimentConfig):
    """Per-run Rand indices of the four models plus chance baselines.

    With synthetic data each run draws its own corpus (seed + run), like one
    subject; with a corpus file the runs differ only in the model seed.
    """
    spec = cfg.hierarchy_spec()
    runs = int(cfg.compare["runs"])
    rows, chance = [], []
    for r in range(runs):
        seed = cfg.seed + r
        corpus = resolve_corpus(cfg, seed)
        scores = compare_models(corpus, spec, seed, int(cfg.compare["sweeps"]), int(cfg.compare["burn_in"]))
        for name, value in scores.items():
            rows.append({"run": r, "seed": seed, "model": name, "rand": value})
        labels = corpus.label_array()
        K = spec.concepts[0].K
        trials = int(cfg.eval["chance_trials"])
        chance.append({"run": r, "seed": seed,
                       "chance_uniform": chance_rand(labels, K, trials, seed),
                       "chance_sized": chance_rand(labels, K, trials, seed, scheme="sized")})
    table = []
    for name in dict.fromkeys(row["model"] for row in rows):
        mean, sd = mean_sd([row["rand"] for row in rows if row["model"] == name])
        table.append({"model": name, "mean": mean, "sd": sd})
    return table, rows, chance


# --- raw-data preprocessing -------------------------------------------------

def _read_vector(path) -> np.ndarray:
    return np.array([float(x) for x in Path(path).read_text().replace(",", " ").split()])


def _physio(sig: pp.Signal, opts: dict):
    kind = opts.get("kind", "signal")
    if kind == "heartbeat":
        rate = float(opts.get("resample_rate", sig.rate))
        return pp.rri_series(sig, rate, min_distance_seconds=float(opts.get("min_distance", 0.4)),
                             min_prominence=float(opts.get("min_prominence", 0.3)))
    if opts.get("highpass"):
        sig = pp.highpass(sig, float(opts["highpass"]))
    if opts.get("smooth"):
        sig = pp.moving_average(sig, float(opts["smooth"]))
    return sig


def run_preprocess(manifest_path, seed: int = 0):
    """Build a corpus from a manifest of raw per-document files.

    Returns ``(corpus, codebooks, summary rows)``. Physiology modalities are
    filtered, standardized (per session or per trial), windowed and
    quantized with a k-means codebook fit on all documents' windows.
    """
    manifest_path = Path(manifest_path)
    man = read_json(manifest_path)
    base = manifest_path.parent
    mods = man.get("modalities")
    docs = man.get("documents")
    if not isinstance(mods, dict) or not isinstance(docs, list):
        raise ConfigError("manifest needs 'modalities' (object) and 'documents' (list)")
    for d in docs:
        if "id" not in d:
            raise ConfigError("every manifest document needs an 'id'")
        for m in mods:
            if m in d and isinstance(d[m], str) and not (base / d[m]).is_file():
                raise ConfigError(f"document {d['id']!r}: file not found for {m!r}: {base / d[m]}")

    counts = {d["id"]: {} for d in docs}
    summary = []
    specs, vocab, codebooks = [], {}, {}
    for m, opts in mods.items():
        kind = opts.get("kind")
        if kind in ("signal", "heartbeat"):
            series = {}
            for d in docs:
                if m not in d:
                    continue
                s = _physio(pp.read_signal(base / d[m], opts.get("rate")), opts)
                if s is not None:
                    series[d["id"]] = s
            if not series:
                raise ConfigError(f"modality {m!r}: no usable signals")
            if opts.get("standardize", "session") == "session":
                allv = np.concatenate([s.samples for s in series.values()])
                mean, sd = allv.mean(), allv.std()
                series = {k: pp.standardize(s, mean, sd) for k, s in series.items()}
            else:
                series = {k: pp.standardize(s) for k, s in series.items()}
            rate = next(iter(series.values())).rate
            window = int(opts.get("window") or max(1, round(rate)))
            stride = int(opts.get("stride") or max(1, window // 2))
            usable = {k: s for k, s in series.items() if len(s) >= window}
            if "codebook" in opts:
                cb = pp.load_codebook(base / opts["codebook"])
            else:
                X = np.vstack([pp.windows(s.samples, window, stride) for s in usable.values()])
                size = min(int(opts.get("codebook_size", 128)), X.shape[0])
                cb = pp.fit_codebook(X, size, int(opts.get("iterations", 50)), seed, stride=stride)
            codebooks[m] = cb
            for k, s in usable.items():
                counts[k][m] = sparse_from_dense(pp.encode_counts(s, cb))
            specs.append(ModalitySpec(m, cb.size))
        elif kind == "dense":
            dim = int(opts["dimension"])
            for d in docs:
                if m in d:
                    v = _read_vector(base / d[m]) if isinstance(d[m], str) else np.asarray(d[m], dtype=float)
                    if v.shape != (dim,):
                        raise ConfigError(f"document {d['id']!r}: {m!r} has {v.size} values, expected {dim}")
                    counts[d["id"]][m] = sparse_from_dense(pp.featurize_dense(v, int(opts.get("total", 100))))
            specs.append(ModalitySpec(m, dim))
        elif kind == "words":
            toks = {d["id"]: (Path(base / d[m]).read_text().split() if isinstance(d[m], str) else list(d[m]))
                    for d in docs if m in d}
            words = opts.get("vocab") or sorted({t for ts in toks.values() for t in ts})
            for k, ts in toks.items():
                vec, dropped = pp.bag_of_words(ts, words)
                counts[k][m] = sparse_from_dense(vec)
                summary.append({"document": k, "modality": m, "tokens": int(vec.sum()), "dropped": dropped})
            specs.append(ModalitySpec(m, len(words)))
            vocab[m] = list(words)
        else:
            raise ConfigError(f"modality {m!r}: unknown kind {kind!r}")
    for d in docs:
        for m in mods:
            if mods[m].get("kind") != "words":
                summary.append({"document": d["id"], "modality": m,
                                "tokens": sum(c for _, c in counts[d["id"]].get(m, ())), "dropped": 0})
    labels = {d["id"]: d["label"] for d in docs if "label" in d}
    corpus = Corpus(specs, [Document(d["id"], counts[d["id"]]) for d in docs], labels or None, vocab or None)
    summary.sort(key=lambda r: (r["document"], r["modality"]))
    return corpus, codebooks, summary


def lexicon_for(cfg: ExperimentConfig, corpus: Corpus, spec: HierarchySpec):
    if cfg.lexicon is None:
        return None, None
    modality = cfg.lexicon_modality or spec.concepts[-1].modalities[0]
    return load_lexicon(cfg.path(cfg.lexicon), corpus, modality), modality
