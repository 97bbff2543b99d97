"""Operation-count and kernel benchmarks.

The decoding benchmark reports instrumented work counters (layer calls,
KV builds, KV floats) rather than wall-clock throughput: at desk scale
the interesting quantity is how much work each optimization removes. The
kernel benchmark times the compiled extension against the pure-Python
fallback on the same inputs.
"""

import time

import numpy as np

from adrec import _kernels
from adrec.model.decoder import DecoderConfig, DecoderModel, context_process
from adrec.model.layers import LayerCallCounter
from adrec.serving.beam import beam_search
from adrec.serving.schedule import BeamSchedule


def run_operation_bench(seed=0):
    """Deterministic rows comparing decode modes x pruning x KV sharing x
    schedules by instrumented operation counts."""
    cfg = DecoderConfig(feat_dim=4, d=8, d_ff=12, n_layers=3, trunk_depth=2,
                        level_vocab_sizes=(16, 16, 16), n_value_buckets=4,
                        seed=seed)
    model = DecoderModel(cfg)
    rng = np.random.default_rng(seed)
    x = context_process(rng.normal(size=(2, cfg.feat_dim)), model.params)
    schedules = {
        "constant-8": BeamSchedule((8, 8, 8), base_width=8),
        "progressive-4-8-16": BeamSchedule((4, 8, 16), base_width=16),
    }
    rows = []
    for mode, k in (("vanilla", 0), ("lazy", cfg.trunk_depth)):
        for sched_name, schedule in schedules.items():
            for precut in (False, True):
                for shared in (False, True):
                    counter = LayerCallCounter()
                    beam_search(model, x, schedule, shared_kv=shared,
                                precut=precut, counter=counter, trunk_depth=k)
                    rows.append({
                        "mode": mode,
                        "schedule": sched_name,
                        "precut": int(precut),
                        "shared_kv": int(shared),
                        "layer_calls": counter.layer_calls,
                        "kv_builds": counter.kv_builds,
                        "kv_floats": counter.kv_floats,
                    })
    return rows


def run_kernel_bench(seed=0, n_points=4000, k=64, d=16, repeats=3):
    """Time each kernel backend on identical inputs; results must agree."""
    rng = np.random.default_rng(seed)
    points = np.ascontiguousarray(rng.normal(size=(n_points, d)))
    centroids = np.ascontiguousarray(rng.normal(size=(k, d)))
    diff = points[:, None, :] - centroids[None, :, :]
    dists = np.ascontiguousarray(np.einsum("nkd,nkd->nk", diff, diff))
    order = np.argsort(rng.permutation(n_points)).astype(np.int64)
    rows = []
    for backend_name in _kernels.backends():
        kern = _kernels.get_backend(backend_name)
        for kernel_name, fn in (
            ("greedy_balanced_assign",
             lambda: kern.greedy_balanced_assign(dists, order, n_points // k,
                                                 n_points % k)),
            ("nearest_centroid", lambda: kern.nearest_centroid(points, centroids)),
        ):
            best = min(_time_once(fn) for _ in range(repeats))
            rows.append({
                "kernel": kernel_name,
                "backend": backend_name,
                "n_points": n_points,
                "k": k,
                "d": d,
                "seconds": round(best, 6),
            })
    return rows


def _time_once(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start
