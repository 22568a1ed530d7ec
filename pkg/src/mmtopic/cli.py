"""Command-line harness: synth, preprocess, train, predict, eval, compare, report.

Exit codes: 0 success, 2 invalid configuration or input, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .core import ConfigError
from .corpus import CorpusError, dump_json, load_corpus, save_corpus
from .evaluate import evaluate_predictions, write_csv, write_report
from .hierarchy import load_hierarchy, predict_cross, save_hierarchy, train_hierarchy
from .preprocess import PreprocessError, save_codebook

log = logging.getLogger("mmtopic")

VALIDATION_ERRORS = (ConfigError, CorpusError, PreprocessError, FileNotFoundError)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmtopic", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("synth", "sample a synthetic corpus with ground truth"),
        ("preprocess", "turn raw signals, features and words into a corpus"),
        ("train", "train the hierarchical model"),
        ("predict", "cross-modal predictions for the test documents"),
        ("eval", "Rand index and KL-divergence report"),
        ("compare", "LDA / MLDA / mMLDA Rand-index comparison"),
        ("report", "aggregate eval/compare outputs into tables"),
    ]:
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="experiment config (JSON)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--rounds", type=int, help="message-passing rounds")
        sp.add_argument("--k", action="append", default=[], metavar="CONCEPT=K",
                        help="category count override, e.g. --k I=4 --k top=28")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name == "report":
            sp.add_argument("--from", dest="sources", type=Path, action="append", default=[],
                            help="run directory to aggregate (repeatable); defaults to --out")
        if name == "predict":
            sp.add_argument("--target", action="append", default=[], help="target modality (repeatable)")
    return p


def load_config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out.resolve())
    if args.rounds is not None or args.k:
        spec = cfg.hierarchy_spec().to_dict()
        if args.rounds is not None:
            spec["rounds"] = args.rounds
        for item in args.k:
            key, _, value = item.partition("=")
            if not value.isdigit():
                raise ConfigError(f"--k expects CONCEPT=K, got {item!r}")
            if key == "top":
                spec["top_K"] = int(value)
                continue
            for c in spec["concepts"]:
                if c["id"] == key:
                    c["K"] = int(value)
                    break
            else:
                raise ConfigError(f"--k: unknown concept {key!r}")
        cfg.hierarchy = spec
    return cfg


def out_dir(cfg) -> Path:
    d = cfg.path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_synth(cfg):
    if cfg.synth is None:
        raise ConfigError("synth needs a 'synth' section in the config")
    corpus, truth, params = ex.synth_data(cfg.synth, cfg.seed)
    d = out_dir(cfg)
    if len(corpus) == 0:
        log.warning("synth: M=0, writing an empty corpus")
    save_corpus(corpus, d / "corpus.json")
    dump_json(params.to_dict(), d / "genparams.json")
    dump_json(truth.to_dict(), d / "truth.json")
    sizes = {}
    for lab in (corpus.labels or {}).values():
        sizes[lab] = sizes.get(lab, 0) + 1
    print(f"{len(corpus)} documents, modalities {corpus.modalities}")
    for lab, n in sizes.items():
        print(f"  {lab}: {n}")
    return 0


def cmd_preprocess(cfg):
    if not cfg.preprocess or "manifest" not in cfg.preprocess:
        raise ConfigError("preprocess needs 'preprocess': {'manifest': path}")
    manifest = cfg.path(cfg.preprocess["manifest"])
    if not manifest.is_file():
        raise ConfigError(f"manifest not found: {manifest}")
    corpus, codebooks, summary = ex.run_preprocess(manifest, cfg.seed)
    d = out_dir(cfg)
    save_corpus(corpus, d / "corpus.json")
    for m, cb in codebooks.items():
        save_codebook(cb, d / f"codebook_{m}.txt")
    write_csv(d / "preprocess_summary.csv", summary, ["document", "modality", "tokens", "dropped"])
    print(f"{len(corpus)} documents, modalities {corpus.dims}")
    return 0


def _training_data(cfg):
    corpus = ex.resolve_corpus(cfg)
    spec = cfg.hierarchy_spec()
    missing = [m for m in spec.modalities if m not in corpus.dims]
    if missing:
        raise ConfigError(f"corpus lacks modalities required by the hierarchy: {missing}")
    train, test = ex.split(cfg, corpus)
    return corpus, train, test, spec


def cmd_train(cfg):
    corpus, train, test, spec = _training_data(cfg)
    d = out_dir(cfg)
    model = train_hierarchy(train, spec, cfg.seed)
    save_hierarchy(model, d / "model")
    save_corpus(train, d / "train.json")
    save_corpus(test, d / "test.json")
    cols = list(model.trajectory[0]) if model.trajectory else ["round"]
    write_csv(d / "diagnostics.csv", model.trajectory, cols)
    c = spec.concepts[0]
    theta = model.lower[c.id].theta
    rows = []
    for j, did in enumerate(train.ids):
        row = {"doc_id": did, "label": (train.labels or {}).get(did, ""), "category": int(np.argmax(theta[j]))}
        row.update({f"p{k}": float(theta[j, k]) for k in range(theta.shape[1])})
        rows.append(row)
    write_csv(d / f"categories_{c.id}.csv", rows,
              ["doc_id", "label", "category"] + [f"p{k}" for k in range(theta.shape[1])])
    print(f"trained on {len(train)} documents, {spec.rounds} rounds; "
          f"final top log-likelihood {model.trajectory[-1]['top_loglik']:.3f}")
    return 0


def _trained(cfg):
    d = cfg.path(cfg.out)
    if not (d / "model" / "hierarchy.json").is_file():
        raise ConfigError(f"no trained model in {d}; run 'train' first")
    if not (d / "test.json").is_file():
        raise ConfigError(f"no test corpus in {d}; run 'train' first")
    return d, load_hierarchy(d / "model"), load_corpus(d / "test.json")


def cmd_predict(cfg, targets=()):
    d, model, test = _trained(cfg)
    spec = model.spec
    for t in targets:
        spec.concept_of(t)
    sweeps = int(cfg.eval["sweeps"])
    rows = []
    for j, doc in enumerate(test.documents):
        for src in spec.concepts:
            observed = doc.restrict(src.modalities)
            if observed.total() == 0:
                continue
            for tc in spec.concepts:
                if tc.id == src.id:
                    continue
                for target in tc.modalities:
                    if targets and target not in targets:
                        continue
                    pred = predict_cross(model, observed, target, sweeps=sweeps, seed=cfg.seed + j)
                    rows.extend({"doc_id": doc.id, "source": src.id, "target": target, "feature": w,
                                 "probability": float(p)} for w, p in enumerate(pred))
    write_csv(d / "predictions.csv", rows, ["doc_id", "source", "target", "feature", "probability"])
    print(f"{len(rows)} prediction rows for {len(test)} documents")
    return 0


def cmd_eval(cfg):
    d, model, test = _trained(cfg)
    lexicon, lex_mod = ex.lexicon_for(cfg, test, model.spec)
    report = evaluate_predictions(model, test, lexicon, lex_mod, sweeps=int(cfg.eval["sweeps"]),
                                  seed=cfg.seed, chance_trials=int(cfg.eval["chance_trials"]))
    write_report(report, d)
    print(f"rand {report.rand:.3f} (chance {report.chance_rand:.3f} uniform, "
          f"{report.chance_rand_sized:.3f} size-matched); {len(report.kl_rows)} KL rows")
    return 0


def cmd_compare(cfg):
    table, rows, chance = ex.run_compare(cfg)
    d = out_dir(cfg)
    write_csv(d / "compare.csv", table, ["model", "mean", "sd"])
    write_csv(d / "compare_runs.csv", rows, ["run", "seed", "model", "rand"])
    write_csv(d / "chance.csv", chance, ["run", "seed", "chance_uniform", "chance_sized"])
    for row in table:
        print(f"{row['model']:<20} {row['mean']:.3f} ± {row['sd']:.3f}")
    return 0


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg, sources=()):
    dirs = list(sources) or [cfg.path(cfg.out)]
    for s in dirs:
        if not ((s / "summary.csv").is_file() or (s / "compare.csv").is_file()):
            raise ConfigError(f"{s}: no summary.csv or compare.csv to report")
    per_subject: dict = {}
    for s in dirs:
        if (s / "summary.csv").is_file():
            for r in _read_csv(s / "summary.csv"):
                per_subject.setdefault((r["target"], r["source"]), []).append(float(r["mean"]))
        if (s / "metrics.csv").is_file():
            for r in _read_csv(s / "metrics.csv"):
                per_subject.setdefault(("rand", r["metric"]), []).append(float(r["value"]))
        if (s / "compare.csv").is_file():
            for r in _read_csv(s / "compare.csv"):
                per_subject.setdefault(("compare", r["model"]), []).append(float(r["mean"]))
    d = out_dir(cfg)
    rows = []
    for (group, name), vals in per_subject.items():
        mean, sd = ex.mean_sd(vals)
        rows.append({"table": "kl" if group not in ("rand", "compare") else group,
                     "row": group if group not in ("rand", "compare") else name,
                     "column": name if group not in ("rand", "compare") else "",
                     "subjects": len(vals), "mean": mean, "sd": sd})
    write_csv(d / "tables.csv", rows, ["table", "row", "column", "subjects", "mean", "sd"])
    for r in rows:
        print(f"{r['table']:<8} {r['row']:<22} {r['column']:<8} {r['mean']:.3f} ± {r['sd']:.3f} "
              f"(n={r['subjects']})")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        cfg.validate(needs_data=args.command in ("synth", "train", "compare"))
    except (*VALIDATION_ERRORS, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "preprocess":
            return cmd_preprocess(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.target)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_report(cfg, args.sources)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
