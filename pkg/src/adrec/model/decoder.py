"""The generative decoder: token-level factorized model over semantic-ID
levels plus one value-bucket step.

Two forward modes share one code path, selected by ``trunk_depth``:

* ``trunk_depth == 0``: classic early injection. The previous level's
  token embedding is added to the position embedding at the input and all
  layers condition on it.
* ``trunk_depth == K >= 1``: the first K layers run on position
  embeddings only (token-independent "trunk", computable once and shared
  across beams); the token embedding enters at layer K through a gated
  fusion, and only the remaining layers are token-conditioned.

The trace also exposes "trunk logits" (classifier applied to the trunk
state directly, bypassing fusion), used as an auxiliary prediction target
so the trunk learns to carry predictive signal on its own.
"""

import io
import json
from dataclasses import dataclass, field

import numpy as np

from adrec import autodiff as ad
from adrec.autodiff import Tensor
from adrec.model.layers import decoder_layer, fuse

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DecoderConfig:
    feat_dim: int
    d: int
    d_ff: int
    n_layers: int
    trunk_depth: int
    level_vocab_sizes: tuple
    n_value_buckets: int
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.trunk_depth < self.n_layers:
            raise ValueError("trunk_depth must satisfy 0 <= K < n_layers")
        if not self.level_vocab_sizes or any(v < 1 for v in self.level_vocab_sizes):
            raise ValueError("level_vocab_sizes must be positive")

    @property
    def n_levels(self):
        return len(self.level_vocab_sizes)


_LAYER_SHAPES = (
    ("ln1.g", "ones"), ("ln1.b", "zeros"),
    ("cross.Wq", "dd"), ("cross.Wk", "dd"), ("cross.Wv", "dd"), ("cross.Wo", "dd"),
    ("ln2.g", "ones"), ("ln2.b", "zeros"),
    ("self.Wq", "dd"), ("self.Wk", "dd"), ("self.Wv", "dd"), ("self.Wo", "dd"),
    ("ln3.g", "ones"), ("ln3.b", "zeros"),
    ("ffn.W1", "dff"), ("ffn.b1", "zeros_ff"), ("ffn.W2", "ffd"), ("ffn.b2", "zeros"),
)


class DecoderModel:
    """Parameter container; all tensors are float64 and trainable."""

    def __init__(self, config, params=None):
        self.config = config
        self.params = params if params is not None else self._init_params(config)

    @staticmethod
    def _init_params(cfg):
        rng = np.random.default_rng(cfg.seed)
        params = {}

        def uniform(shape, fan_in):
            scale = 1.0 / np.sqrt(fan_in)
            return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)

        d, dff = cfg.d, cfg.d_ff
        params["ctx.W"] = uniform((cfg.feat_dim, d), cfg.feat_dim)
        params["ctx.b"] = Tensor(np.zeros(d), requires_grad=True)
        params["pos"] = uniform((cfg.n_levels + 1, d), d)
        params["bos"] = uniform((d,), d)
        for t, vocab in enumerate(cfg.level_vocab_sizes):
            params[f"emb.{t}"] = uniform((vocab, d), d)
        for i in range(cfg.n_layers):
            for name, kind in _LAYER_SHAPES:
                key = f"layer{i}.{name}"
                if kind == "ones":
                    params[key] = Tensor(np.ones(d), requires_grad=True)
                elif kind == "zeros":
                    params[key] = Tensor(np.zeros(d), requires_grad=True)
                elif kind == "zeros_ff":
                    params[key] = Tensor(np.zeros(dff), requires_grad=True)
                elif kind == "dd":
                    params[key] = uniform((d, d), d)
                elif kind == "dff":
                    params[key] = uniform((d, dff), d)
                elif kind == "ffd":
                    params[key] = uniform((dff, d), dff)
        params["fuse.Wg"] = uniform((d, d), d)
        params["fuse.Wf"] = uniform((2 * d, d), 2 * d)
        for t, vocab in enumerate(cfg.level_vocab_sizes):
            params[f"head.{t}"] = uniform((d, vocab), d)
        params["head.value"] = uniform((d, cfg.n_value_buckets), d)
        return params

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def clone(self):
        """Deep copy of parameters (copy-on-publish snapshots)."""
        params = {k: Tensor(v.data.copy(), requires_grad=True)
                  for k, v in self.params.items()}
        return DecoderModel(self.config, params)

    def head_layer_names(self):
        """Parameter keys exclusive to layers above the trunk."""
        k = self.config.trunk_depth
        return [name for name in self.params
                if name.startswith("layer") and int(name[5:name.index(".")]) >= k]


@dataclass
class ForwardTrace:
    head_logits: list  # per level, (V_t,) tensors
    trunk_logits: list  # per level, (V_t,) tensors (fusion bypassed)
    value_logits: object  # (n_value_buckets,) tensor or None
    states: object = None  # final (P, d) decoder states


def context_process(features, params):
    """Linear map of raw per-position features into decoder space."""
    feats = features if isinstance(features, Tensor) else Tensor(np.atleast_2d(features))
    if feats.shape[-1] != params["ctx.W"].shape[0]:
        raise ValueError(
            f"feature dim {feats.shape[-1]} != expected {params['ctx.W'].shape[0]}")
    return ad.add(ad.matmul(feats, params["ctx.W"]), params["ctx.b"])


def _token_inputs(model, tokens, n_positions):
    """Embedding of the previously decoded token per position (BOS first)."""
    cfg = model.config
    rows = [ad.reshape(model.params["bos"], (1, cfg.d))]
    for p in range(1, n_positions):
        tok = tokens[p - 1]
        if not 0 <= tok < cfg.level_vocab_sizes[p - 1]:
            raise ValueError(f"token {tok} out of range at level {p - 1}")
        rows.append(ad.take_rows(model.params[f"emb.{p - 1}"], [tok]))
    return ad.concat(rows, axis=0)


def _run_layers(model, states, context, lo, hi, counter):
    for i in range(lo, hi):
        states, _ = decoder_layer(model.params, f"layer{i}", states, context,
                                  counter=counter)
    return states


def lazy_forward(model, context, tokens, trunk_depth=None, include_value_step=True,
                 counter=None):
    """Teacher-forced forward pass; see the module docstring for modes.

    ``tokens`` are the target semantic-ID tokens, one per level. Returns a
    ForwardTrace with per-level head logits, per-level trunk logits, and
    the value-bucket logits (when ``include_value_step``).
    """
    cfg = model.config
    k = cfg.trunk_depth if trunk_depth is None else trunk_depth
    if not 0 <= k < cfg.n_layers:
        raise ValueError("trunk_depth must satisfy 0 <= K < n_layers")
    if len(tokens) != cfg.n_levels:
        raise ValueError(f"expected {cfg.n_levels} tokens, got {len(tokens)}")
    n_pos = cfg.n_levels + (1 if include_value_step else 0)
    pos = ad.take_rows(model.params["pos"], list(range(n_pos)))
    tok_in = _token_inputs(model, tokens, n_pos)

    if k == 0:
        trunk = pos
        fused = ad.add(tok_in, pos)
    else:
        trunk = _run_layers(model, pos, context, 0, k, counter)
        fused = fuse(trunk, tok_in, model.params["fuse.Wf"], model.params["fuse.Wg"])
    states = _run_layers(model, fused, context, k, cfg.n_layers, counter)

    head_logits, trunk_logits = [], []
    for t in range(cfg.n_levels):
        w = model.params[f"head.{t}"]
        head_logits.append(ad.reshape(ad.matmul(ad.take_rows(states, [t]), w),
                                      (cfg.level_vocab_sizes[t],)))
        trunk_logits.append(ad.reshape(ad.matmul(ad.take_rows(trunk, [t]), w),
                                       (cfg.level_vocab_sizes[t],)))
    value_logits = None
    if include_value_step:
        value_logits = ecpm_head(model, ad.take_rows(states, [cfg.n_levels]))
    return ForwardTrace(head_logits, trunk_logits, value_logits, states)


def vanilla_forward(model, context, tokens, include_value_step=True, counter=None):
    """Early-injection forward: identical arithmetic to trunk_depth=0."""
    return lazy_forward(model, context, tokens, trunk_depth=0,
                        include_value_step=include_value_step, counter=counter)


def ecpm_head(model, final_state):
    """Value-bucket logits from the decoder state of the extra step."""
    return ad.reshape(ad.matmul(final_state, model.params["head.value"]),
                      (model.config.n_value_buckets,))


def sequence_log_prob(trace, tokens):
    """Total log-probability of the token sequence under the trace."""
    terms = []
    for t, tok in enumerate(tokens):
        logp = ad.log_softmax(trace.head_logits[t])
        terms.append(ad.take_rows(logp, [int(tok)]))
    return ad.tsum(ad.concat(terms, axis=0))


def save_checkpoint(model, path, step=0, extra_arrays=None, meta=None):
    """Persist parameters + hyperparameters; round-trips exactly."""
    header = {
        "format_version": _FORMAT_VERSION,
        "config": {
            "feat_dim": model.config.feat_dim,
            "d": model.config.d,
            "d_ff": model.config.d_ff,
            "n_layers": model.config.n_layers,
            "trunk_depth": model.config.trunk_depth,
            "level_vocab_sizes": list(model.config.level_vocab_sizes),
            "n_value_buckets": model.config.n_value_buckets,
            "seed": model.config.seed,
        },
        "step": step,
        "meta": meta or {},
        "extra_keys": sorted(extra_arrays) if extra_arrays else [],
    }
    arrays = {f"param::{k}": v.data for k, v in model.params.items()}
    if extra_arrays:
        arrays.update({f"extra::{k}": np.asarray(v) for k, v in extra_arrays.items()})
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
             **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path):
    """Returns ``(model, step, extra_arrays, meta)``."""
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format {header['format_version']}")
        cfg_d = dict(header["config"])
        cfg_d["level_vocab_sizes"] = tuple(cfg_d["level_vocab_sizes"])
        cfg = DecoderConfig(**cfg_d)
        params = {k[len("param::"):]: Tensor(data[k], requires_grad=True)
                  for k in data.files if k.startswith("param::")}
        extra = {k[len("extra::"):]: data[k]
                 for k in data.files if k.startswith("extra::")}
    return DecoderModel(cfg, params), header["step"], extra, header["meta"]
