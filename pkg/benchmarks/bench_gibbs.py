"""Time the Gibbs kernels of the compiled and pure-Python backends.

Both backends consume the same pre-drawn uniforms, so their outputs are
also compared for equality.

    python3 benchmarks/bench_gibbs.py --sweeps 5 --docs 60
"""
import argparse
import time

import numpy as np

from mmtopic import _backend
from mmtopic.core import ModelConfig, _sweep, fit, infer_new, init_assignments
from mmtopic.hierarchy import emotion_spec
from mmtopic.synth import desk_shape, make_separable_params, sample_corpus


def time_sweeps(corpus, config, kernels, sweeps):
    state = init_assignments(corpus, config)
    start = time.perf_counter()
    for _ in range(sweeps):
        _sweep(state, config, None, kernels)
    return (time.perf_counter() - start) / sweeps, state.z.copy(), state.z.size


def time_infer(model_like, doc, kernels, sweeps):
    start = time.perf_counter()
    post = infer_new(model_like, doc, sweeps=sweeps, kernels=kernels)
    return time.perf_counter() - start, post


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--docs", type=int, default=60)
    p.add_argument("--sweeps", type=int, default=5)
    p.add_argument("--K", type=int, default=4)
    args = p.parse_args(argv)

    corpus, _ = sample_corpus(make_separable_params(desk_shape(M=args.docs)), seed=0)
    spec = emotion_spec()
    mods = list(spec.concept("I").modalities)
    sub = corpus.select(mods)
    config = ModelConfig.for_modalities(mods, args.K, seed=1)
    names = _backend.available()
    results = {}
    print(f"corpus: {len(sub)} documents, modalities {mods}, K={args.K}")
    for name in names:
        kernels = _backend.load(name)
        per_sweep, z, n_tok = time_sweeps(sub, config, kernels, args.sweeps)
        results[name] = (per_sweep, z)
        print(f"{name:>7}: {per_sweep * 1e3:9.2f} ms/sweep  {per_sweep / n_tok * 1e9:8.1f} ns/token")
    if len(names) == 2:
        (tc, zc), (tp, zp) = results["cython"], results["python"]
        print(f"speedup: {tp / tc:.1f}x, identical assignments: {np.array_equal(zc, zp)}")

    model = fit(sub, ModelConfig.for_modalities(mods, args.K, sweeps=20, burn_in=0, seed=2))
    doc = sub.documents[0]
    posts = {}
    for name in names:
        elapsed, posts[name] = time_infer(model, doc, _backend.load(name), 200)
        print(f"{name:>7}: infer_new 200 sweeps on {doc.total()} tokens in {elapsed * 1e3:.1f} ms")
    if len(names) == 2:
        print(f"identical posteriors: {np.array_equal(posts['cython'], posts['python'])}")


if __name__ == "__main__":
    main()
