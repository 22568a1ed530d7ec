import numpy as np
import pytest

from mmtopic import _backend
from mmtopic.corpus import Corpus, Document, ModalitySpec


def make_corpus(dims, docs, labels=None):
    """Corpus from ``dims`` {modality: W} and ``docs`` [{modality: [(w, c), ...]}, ...]."""
    specs = [ModalitySpec(m, w) for m, w in dims.items()]
    documents = [Document(f"d{j}", counts) for j, counts in enumerate(docs)]
    lab = None if labels is None else {f"d{j}": l for j, l in enumerate(labels)}
    return Corpus(specs, documents, lab)


def random_corpus(rng, M=6, dims=None, max_count=4):
    dims = dims or {"a": 5, "b": 3}
    docs = []
    for _ in range(M):
        counts = {}
        for m, W in dims.items():
            c = rng.integers(0, max_count, size=W)
            counts[m] = [(int(i), int(c[i])) for i in np.flatnonzero(c)]
        docs.append(counts)
    return make_corpus(dims, docs)


@pytest.fixture(params=_backend.available())
def kernels(request):
    return _backend.load(request.param)


@pytest.fixture(scope="session")
def desk_small():
    """120-document complementary desk corpus (K=4 per concept block)."""
    from mmtopic.synth import desk_shape, make_separable_params, sample_corpus
    corpus, _ = sample_corpus(make_separable_params(desk_shape(M=120), seed=0), seed=0)
    return corpus


def write_raw_dataset(directory, n_docs=6, seed=0):
    """Raw per-document files plus a preprocessing manifest; returns the manifest path.

    EDA-like slow signals at 4 Hz, heartbeat pulse trains at 128 Hz, dense
    vision vectors inline and word token files.
    """
    import json
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    words = ["calm", "happy", "tense", "sad", "bright", "dark"]
    docs = []
    for j in range(n_docs):
        label = "hi" if j % 2 else "lo"
        t = np.arange(240) / 4.0
        eda = 2.0 + (0.8 if j % 2 else 0.2) * np.sin(2 * np.pi * 0.2 * t) + 0.05 * rng.normal(size=t.size)
        (d / f"eda{j}.txt").write_text("rate 4\n" + "\n".join(repr(float(x)) for x in eda) + "\n")
        gap = 0.7 if j % 2 else 1.0
        beats = 0.5 + np.cumsum(rng.uniform(gap - 0.05, gap + 0.05, size=50))
        tt = np.arange(int((beats[-1] + 1) * 128)) / 128
        ecg = sum(np.exp(-0.5 * ((tt - b) / 0.02) ** 2) for b in beats)
        (d / f"ecg{j}.txt").write_text("\n".join(f"{float(a)!r} {float(b)!r}" for a, b in zip(tt, ecg)) + "\n")
        (d / f"words{j}.txt").write_text(" ".join(rng.choice(words[:3] if j % 2 else words[3:], 12)) + " zzz\n")
        docs.append({"id": f"s{j}", "label": label, "eda": f"eda{j}.txt", "rri": f"ecg{j}.txt",
                     "vision": rng.uniform(0, 1, 8).round(4).tolist(), "word": f"words{j}.txt"})
    manifest = {
        "modalities": {
            "eda": {"kind": "signal", "highpass": 0.05, "smooth": 1.0, "window": 8, "codebook_size": 6},
            "rri": {"kind": "heartbeat", "resample_rate": 4.0, "window": 8, "codebook_size": 6},
            "vision": {"kind": "dense", "dimension": 8, "total": 50},
            "word": {"kind": "words", "vocab": words},
        },
        "documents": docs,
    }
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path
