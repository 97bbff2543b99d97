"""Decoder building blocks over autodiff tensors.

Every function here accepts either 2-D (positions, d) matrices for
teacher-forced training or 3-D (beam, steps, d) stacks for incremental
serving; the arithmetic is the same numpy matmul either way.
"""

import threading

import numpy as np

from adrec import autodiff as ad
from adrec.autodiff import Tensor

LN_EPS = 1e-5


class LayerCallCounter:
    """Counts decoder-layer applications per state row, and KV-cache
    builds/allocation for the cross-attention context. Thread-safe."""

    def __init__(self):
        self._lock = threading.Lock()
        self.layer_calls = 0
        self.kv_builds = 0
        self.kv_floats = 0

    def add_layer_calls(self, rows):
        with self._lock:
            self.layer_calls += int(rows)

    def add_kv_build(self, builds, floats):
        with self._lock:
            self.kv_builds += int(builds)
            self.kv_floats = max(self.kv_floats, int(floats))


def layer_norm(x, gain, bias):
    mean = ad.tmean(x, axis=-1, keepdims=True)
    centered = ad.sub(x, mean)
    var = ad.tmean(ad.mul(centered, centered), axis=-1, keepdims=True)
    inv = ad.power(ad.add(var, LN_EPS), -0.5)
    return ad.add(ad.mul(ad.mul(centered, inv), gain), bias)


def _attention(q, k, v, w_out, mask=None):
    d = q.shape[-1]
    scores = ad.mul(ad.matmul(q, _swap(k)), 1.0 / np.sqrt(d))
    if mask is not None:
        scores = ad.where_mask(scores, mask, -np.inf)
    return ad.matmul(ad.matmul(ad.softmax(scores, axis=-1), v), w_out)


def _swap(t):
    axes = list(range(t.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    data = np.transpose(t.data, axes)

    def backward(g):
        if t.requires_grad:
            t._accumulate(np.transpose(g, axes))

    return ad._make(data, (t,), backward)


def decoder_layer(params, prefix, states, context, counter=None,
                  self_kv=None, cross_kv=None):
    """One pre-LN decoder layer.

    ``states`` is (P, d) in teacher forcing (causal self-attention over
    the P positions) or (B, 1, d) incrementally, in which case
    ``self_kv`` must hold the (B, t-1, d) key/value history; the new
    position's key/value rows are appended and returned.

    ``cross_kv`` optionally supplies precomputed context keys/values
    (the per-request shared KV cache). Returns ``(new_states, new_self_kv)``.
    """
    p = _layer_params(params, prefix)
    if counter is not None:
        counter.add_layer_calls(states.shape[0])

    # cross-attention into the context
    normed = layer_norm(states, p["ln1.g"], p["ln1.b"])
    q = ad.matmul(normed, p["cross.Wq"])
    if cross_kv is None:
        ck = ad.matmul(context, p["cross.Wk"])
        cv = ad.matmul(context, p["cross.Wv"])
    else:
        ck, cv = cross_kv
    states = ad.add(states, _attention(q, ck, cv, p["cross.Wo"]))

    # self-attention over decoder positions decoded so far
    normed = layer_norm(states, p["ln2.g"], p["ln2.b"])
    if self_kv is None:
        n = states.shape[-2]
        mask = np.tril(np.ones((n, n), dtype=bool))
        q = ad.matmul(normed, p["self.Wq"])
        k = ad.matmul(normed, p["self.Wk"])
        v = ad.matmul(normed, p["self.Wv"])
        new_kv = None
    else:
        q = ad.matmul(normed, p["self.Wq"])
        k_new = ad.matmul(normed, p["self.Wk"])
        v_new = ad.matmul(normed, p["self.Wv"])
        past_k, past_v = self_kv
        if past_k is not None:
            k = ad.concat([past_k, k_new], axis=-2)
            v = ad.concat([past_v, v_new], axis=-2)
        else:
            k, v = k_new, v_new
        new_kv = (k, v)
        mask = None
    states = ad.add(states, _attention(q, k, v, p["self.Wo"], mask=mask))

    # position-wise feed-forward
    normed = layer_norm(states, p["ln3.g"], p["ln3.b"])
    hidden = ad.gelu(ad.add(ad.matmul(normed, p["ffn.W1"]), p["ffn.b1"]))
    states = ad.add(states, ad.add(ad.matmul(hidden, p["ffn.W2"]), p["ffn.b2"]))
    return states, new_kv


def _layer_params(params, prefix):
    names = ("ln1.g", "ln1.b", "cross.Wq", "cross.Wk", "cross.Wv", "cross.Wo",
             "ln2.g", "ln2.b", "self.Wq", "self.Wk", "self.Wv", "self.Wo",
             "ln3.g", "ln3.b", "ffn.W1", "ffn.b1", "ffn.W2", "ffn.b2")
    return {name: params[f"{prefix}.{name}"] for name in names}


def fuse(m, s_prev, w_f, w_g):
    """Gated injection of the previous token embedding into a trunk state:
    concat(m * (s W_g), s) W_f. Works on matching (..., d) shapes."""
    gate = ad.matmul(s_prev, w_g)
    return ad.matmul(ad.concat([ad.mul(m, gate), s_prev], axis=-1), w_f)
