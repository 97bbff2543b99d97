"""Beam search over semantic-ID levels.

The engine processes each level as a fixed-width batch of hypothesis
slots (the width given by the schedule), the way a static-shape
accelerator kernel would: live hypotheses occupy the leading rows and
padding rows are masked to -inf so they can never win selection. With a
non-decreasing schedule this makes the decoder-layer call count exactly
``T*K`` for the shared trunk plus ``(L-K) * width_t`` per level.

Two independently toggleable optimizations, both result-preserving:

* ``shared_kv``: context keys/values for the layers above the trunk are
  built once per request and broadcast to the slots, instead of being
  materialized per slot.
* ``precut``: candidate expansion selects per-slot top-k first and only
  then a global top-k, which never changes the outcome because a global
  winner is necessarily a winner within its own slot.
"""

import numpy as np

from adrec.autodiff import Tensor, no_grad
from adrec.model.decoder import _run_layers
from adrec.model.layers import decoder_layer, fuse
from adrec.quantizer.residual import SemanticId

NEG_INF = -np.inf


def _ordered_topk(scores, beams, tokens, k):
    """Top-k triples under (-score, beam, token) lexicographic order."""
    order = np.lexsort((tokens, beams, -scores))
    take = order[:k]
    return beams[take], tokens[take], scores[take]


def topk_global(beam_scores, level_logprobs, k):
    """Exhaustive expansion selection: all (beam, token) pairs ranked by
    cumulative score. ``k`` clamps to the expansion count."""
    beam_scores = np.asarray(beam_scores, dtype=np.float64)
    logprobs = np.asarray(level_logprobs, dtype=np.float64)
    b, v = logprobs.shape
    k = min(k, b * v)
    total = (beam_scores[:, None] + logprobs).ravel()
    beams = np.repeat(np.arange(b), v)
    tokens = np.tile(np.arange(v), b)
    return _ordered_topk(total, beams, tokens, k)


def topk_precut(prev_beams, level_logprobs, k):
    """Per-beam top-k followed by a global top-k over the survivors.

    ``prev_beams`` is a list of (prefix, cumulative_score) pairs. Returns
    the top-k expansions as (beam_index, token, score) tuples, identical
    in set and order to exhaustive expansion: any global top-k candidate
    is by definition within the top-k of its own beam.
    """
    scores = np.asarray([s for _, s in prev_beams], dtype=np.float64)
    beams, tokens, totals = _precut_arrays(scores, np.asarray(level_logprobs), k)
    return list(zip(beams.tolist(), tokens.tolist(), totals.tolist()))


def _precut_arrays(beam_scores, logprobs, k):
    b, v = logprobs.shape
    k = min(k, b * v)
    per_beam = min(k, v)
    total = beam_scores[:, None] + logprobs
    pooled_beams, pooled_tokens, pooled_scores = [], [], []
    token_ids = np.arange(v)
    for row in range(b):
        row_scores = total[row]
        if per_beam < v:
            part = np.argpartition(-row_scores, per_beam - 1)[:per_beam]
        else:
            part = token_ids
        order = np.lexsort((part, -row_scores[part]))
        chosen = part[order]
        pooled_beams.append(np.full(per_beam, row))
        pooled_tokens.append(chosen)
        pooled_scores.append(row_scores[chosen])
    return _ordered_topk(np.concatenate(pooled_scores),
                         np.concatenate(pooled_beams),
                         np.concatenate(pooled_tokens), k)


def _select(beam_scores, logprobs, k, precut):
    if precut:
        return _precut_arrays(beam_scores, logprobs, k)
    return topk_global(beam_scores, logprobs, k)


def _log_softmax_rows(logits):
    mx = logits.max(axis=-1, keepdims=True)
    shifted = logits - mx
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def shared_encoder_kv(model, context, trunk_depth=None):
    """Build the per-request cross-attention KV cache for the layers above
    the trunk: one (keys, values) pair per layer, computed once and read
    by every beam slot."""
    ctx = context.data if isinstance(context, Tensor) else np.atleast_2d(context)
    k_depth = model.config.trunk_depth if trunk_depth is None else trunk_depth
    handle = {}
    for i in range(k_depth, model.config.n_layers):
        ck = ctx @ model.params[f"layer{i}.cross.Wk"].data
        cv = ctx @ model.params[f"layer{i}.cross.Wv"].data
        handle[i] = (ck, cv)
    return handle


def beam_search(model, context, schedule, shared_kv=True, precut=True,
                counter=None, value_rerank=False, buckets=None,
                trunk_depth=None):
    """Generate the top sequences level by level.

    Returns a list of ``(SemanticId, log_prob)`` sorted by descending
    cumulative log-probability (or by the value-weighted score when
    ``value_rerank`` is on). With widths equal to the full vocabulary at
    every level this is exhaustive search. ``trunk_depth`` overrides the
    model's configured depth (0 decodes in early-injection mode).
    """
    cfg = model.config
    ctx_data = context.data if isinstance(context, Tensor) else np.atleast_2d(context)
    if ctx_data.size == 0:
        raise ValueError("empty context")
    if not np.isfinite(ctx_data).all():
        raise ValueError("context must be finite")
    widths = schedule.widths
    n_levels = cfg.n_levels
    if len(widths) != n_levels:
        raise ValueError(f"schedule has {len(widths)} widths for {n_levels} levels")

    # clamp each width to the number of reachable prefixes at that level
    eff = []
    reach = 1
    for w, vocab in zip(widths, cfg.level_vocab_sizes):
        reach = min(reach * vocab, 1 << 40)
        eff.append(min(w, reach))

    with no_grad():
        return _beam_loop(model, Tensor(ctx_data), eff, shared_kv, precut,
                          counter, value_rerank, buckets, trunk_depth)


def _beam_loop(model, x, eff, shared_kv, precut, counter, value_rerank,
               buckets, trunk_depth=None):
    cfg = model.config
    params = model.params
    n_levels = cfg.n_levels
    n_pos = n_levels + (1 if value_rerank else 0)
    d = cfg.d
    s_ctx = x.shape[0]
    k_depth = cfg.trunk_depth if trunk_depth is None else trunk_depth
    if not 0 <= k_depth < cfg.n_layers:
        raise ValueError("trunk_depth must satisfy 0 <= K < n_layers")
    head_layers = list(range(k_depth, cfg.n_layers))

    pos = params["pos"].data[:n_pos]
    if k_depth > 0:
        trunk = _run_layers(model, Tensor(pos), x, 0, k_depth, counter).data
    else:
        trunk = pos

    shared_ck = {}
    if shared_kv:
        shared_ck = shared_encoder_kv(model, x, trunk_depth=k_depth)
        if counter is not None:
            counter.add_kv_build(1, len(head_layers) * 2 * s_ctx * d)

    prefixes = np.zeros((1, 0), dtype=np.int64)
    cum = np.zeros(1)
    caches = {i: None for i in head_layers}

    for t in range(n_levels):
        live = prefixes.shape[0]
        slots = max(eff[t], live)
        row_src = np.where(np.arange(slots) < live, np.arange(slots), 0)

        if t == 0:
            tok_emb = np.broadcast_to(params["bos"].data, (slots, d))
        else:
            last = prefixes[row_src, -1]
            tok_emb = params[f"emb.{t - 1}"].data[last]
        tok = Tensor(tok_emb.reshape(slots, 1, d))

        if k_depth > 0:
            m_t = Tensor(np.broadcast_to(trunk[t], (slots, 1, d)))
            states = fuse(m_t, tok, params["fuse.Wf"], params["fuse.Wg"])
        else:
            states = Tensor(tok.data + pos[t])

        cross_kv = _level_cross_kv(model, x, head_layers, slots, shared_kv,
                                   shared_ck, counter)
        states, new_caches = _head_pass(model, states, x, head_layers, caches,
                                        row_src, cross_kv, counter)

        logits = states.data.reshape(slots, d) @ params[f"head.{t}"].data
        logp = _log_softmax_rows(logits)
        cum_slot = np.where(np.arange(slots) < live, cum[row_src], NEG_INF)
        beams, tokens, scores = _select(cum_slot, logp, eff[t], precut)
        alive = np.isfinite(scores)
        beams, tokens, scores = beams[alive], tokens[alive], scores[alive]

        parent_rows = row_src[beams]
        prefixes = np.concatenate(
            [prefixes[parent_rows], tokens[:, None]], axis=1)
        cum = scores
        caches = {i: (kc.data[beams], vc.data[beams])
                  for i, (kc, vc) in new_caches.items()}

    results = [(SemanticId(tuple(int(v) for v in row), cfg.level_vocab_sizes),
                float(score)) for row, score in zip(prefixes, cum)]
    if value_rerank:
        results = _value_rerank(model, x, prefixes, cum, trunk, caches,
                                head_layers, shared_kv, shared_ck, counter,
                                buckets, results, k_depth)
    return results


def _level_cross_kv(model, x, head_layers, slots, shared_kv, shared_ck, counter):
    """Per-layer context K/V shaped (slots, S, d): zero-copy broadcast
    views when shared, materialized per-slot copies otherwise."""
    params = model.params
    s_ctx, d = x.shape[0], model.config.d
    out = {}
    if shared_kv:
        for i in head_layers:
            ck, cv = shared_ck[i]
            out[i] = (Tensor(np.broadcast_to(ck, (slots, s_ctx, d))),
                      Tensor(np.broadcast_to(cv, (slots, s_ctx, d))))
    else:
        for i in head_layers:
            ck = x.data @ params[f"layer{i}.cross.Wk"].data
            cv = x.data @ params[f"layer{i}.cross.Wv"].data
            out[i] = (Tensor(np.broadcast_to(ck, (slots, s_ctx, d)).copy()),
                      Tensor(np.broadcast_to(cv, (slots, s_ctx, d)).copy()))
        if counter is not None:
            counter.add_kv_build(slots, len(head_layers) * 2 * slots * s_ctx * d)
    return out


def _head_pass(model, states, x, head_layers, caches, row_src, cross_kv, counter):
    new_caches = {}
    for i in head_layers:
        past = caches[i]
        if past is not None:
            past = (Tensor(past[0][row_src]), Tensor(past[1][row_src]))
        else:
            past = (None, None)
        states, new_kv = decoder_layer(model.params, f"layer{i}", states, x,
                                       counter=counter, self_kv=past,
                                       cross_kv=cross_kv[i])
        new_caches[i] = new_kv
    return states, new_caches


def _value_rerank(model, x, prefixes, cum, trunk, caches, head_layers,
                  shared_kv, shared_ck, counter, buckets, results, k_depth):
    """One extra decoding step; candidates reorder by expected bucket
    value times generation probability."""
    cfg = model.config
    params = model.params
    live = prefixes.shape[0]
    d = cfg.d
    t = cfg.n_levels
    last = prefixes[:, -1]
    tok = Tensor(params[f"emb.{t - 1}"].data[last].reshape(live, 1, d))
    if k_depth > 0:
        m_t = Tensor(np.broadcast_to(trunk[t], (live, 1, d)))
        states = fuse(m_t, tok, params["fuse.Wf"], params["fuse.Wg"])
    else:
        states = Tensor(tok.data + params["pos"].data[t])
    row_src = np.arange(live)
    cross_kv = _level_cross_kv(model, x, head_layers, live, shared_kv,
                               shared_ck, counter)
    states, _ = _head_pass(model, states, x, head_layers, caches, row_src,
                           cross_kv, counter)
    logits = states.data.reshape(live, d) @ params["head.value"].data
    probs = np.exp(_log_softmax_rows(logits))
    reps = np.asarray(buckets.representatives, dtype=np.float64)
    if reps.size < cfg.n_value_buckets:
        reps = np.concatenate([reps, np.full(cfg.n_value_buckets - reps.size,
                                             reps[-1])])
    expected = probs @ reps[:cfg.n_value_buckets]
    rank_score = expected * np.exp(cum)
    order = np.lexsort((np.arange(live), -rank_score))
    return [(results[i][0], float(rank_score[i])) for i in order]
