"""The closed loop in one process: serve requests over virtual time,
synthesize feedback, build supervised and preference log streams, train
continuously, and republish snapshots to the serving side."""

import math
from collections import deque
from dataclasses import dataclass, field, asdict

import numpy as np

from adrec.autodiff import no_grad
from adrec.losses.preference import LossConfig, RlSample, unified_loss
from adrec.losses.ranking import ndcg
from adrec.losses.supervised import TrainingSample, discretize_ecpm, fit_ecpm_buckets
from adrec.model.decoder import (DecoderConfig, DecoderModel, context_process,
                                 lazy_forward, sequence_log_prob)
from adrec.model.optim import Adam
from adrec.quantizer.index import SidIndex
from adrec.quantizer.residual import encode_items, fit_quantizer
from adrec.serving.beam import beam_search
from adrec.serving.engine import ServingConfig, ServingEngine, SnapshotStore
from adrec.serving.schedule import BeamSchedule, resolve_dbw
from adrec.sim.catalog import gen_catalog, gen_users
from adrec.sim.reward import RewardModelStub


@dataclass
class SimConfig:
    # world
    n_items: int = 500
    n_users: int = 20
    d_e: int = 16
    n_clusters: int = 12
    dup_fraction: float = 0.1
    dup_copies: int = 4
    # quantizer
    level_sizes: tuple = (16, 8, 8)
    quant_mode: str = "mgmr"
    # decoder
    d: int = 16
    d_ff: int = 32
    n_layers: int = 2
    trunk_depth: int = 1
    n_value_buckets: int = 4
    # serving
    schedule_spec: object = (4, 8, 8)
    q_threshold: float = 8.0
    boost: float = 0.6
    ttl: float = 60.0
    shared_kv: bool = True
    precut: bool = True
    value_rerank: bool = False
    # traffic (two-phase profile over virtual seconds; one tick = one second)
    peak_qps: float = 16.0
    offpeak_qps: float = 2.0
    phase_length: int = 100
    tick_duration: float = 0.12
    # learning
    lr: float = 0.02
    batch_vsl: int = 6
    batch_rl: int = 1
    rl_sample_rate: float = 0.1
    explore_eps: float = 0.1
    relax_factor: int = 2
    rl_list_size: int = 6
    train_every: int = 1
    publish_every: int = 1
    feedback_sharpness: float = 4.0
    feedback_bias: float = -1.0
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0


def _user_features(user):
    return user.interest[None, :]


def build_rl_log(model, user, index, items_by_id, reward, buckets, schedule,
                 rng, explore_eps=0.1, list_size=6, shared_kv=True, precut=True):
    """Candidate list for preference training: a relaxed-width generation
    pass, epsilon-random injection of indexed IDs, reward scoring, and
    generation-time log-probs recorded as the reference."""
    x_feat = _user_features(user)
    with no_grad():
        x = context_process(x_feat, model.params)
        generated = beam_search(model, x, schedule, shared_kv=shared_kv,
                                precut=precut)
    candidates = [sid for sid, _ in generated[:list_size]]
    all_indexed = index.all_sids()
    for pos in range(len(candidates)):
        if rng.random() < explore_eps and all_indexed:
            candidates[pos] = all_indexed[int(rng.integers(0, len(all_indexed)))]
    seen, unique = set(), []
    for sid in candidates:
        if sid.tokens not in seen:
            seen.add(sid.tokens)
            unique.append(sid)

    scored = []
    with no_grad():
        for sid in unique:
            ids = index.lookup(sid)
            r = reward.score(user, items_by_id[min(ids)]) if ids else 0.0
            trace = lazy_forward(model, context_process(x_feat, model.params),
                                 sid.tokens, include_value_step=False)
            logp = float(sequence_log_prob(trace, sid.tokens).data)
            scored.append((sid, r, logp))
    scored.sort(key=lambda rec: (-rec[1], rec[0].tokens))
    return RlSample(
        features=x_feat,
        tokens_list=[sid.tokens for sid, _, _ in scored],
        rewards=np.array([r for _, r, _ in scored]),
        value_tokens=[discretize_ecpm(buckets, r) for _, r, _ in scored],
        ref_logp=[lp for _, _, lp in scored],
    )


def _dcg(rewards_in_order):
    v = np.asarray(rewards_in_order, dtype=np.float64)
    ranks = np.arange(1, v.size + 1)
    return float(np.sum((np.exp2(v) - 1.0) / np.log2(1.0 + ranks)))


def list_quality_ndcg(served_rewards, catalog_rewards_desc):
    """Reward-scored list quality: DCG of the served order against the
    ideal DCG of the best same-length list this user could have been
    served from the whole catalog."""
    if not len(served_rewards):
        return None
    ideal = _dcg(catalog_rewards_desc[: len(served_rewards)])
    if ideal == 0.0:
        return 1.0
    return _dcg(served_rewards) / ideal


def evaluate_ndcg(model, users, index, user_rewards, schedule,
                  shared_kv=True, precut=True):
    """Mean reward-scored list quality of freshly generated lists, one per
    user, plus the mean served reward and the pure ordering NDCG."""
    scores, mean_rewards, ordering = [], [], []
    with no_grad():
        for user in users:
            x = context_process(_user_features(user), model.params)
            sids = beam_search(model, x, schedule, shared_kv=shared_kv,
                               precut=precut)
            by_item, sorted_desc = user_rewards[user.user_id]
            rewards = []
            for sid, _ in sids:
                ids = index.lookup(sid)
                if ids:
                    rewards.append(by_item[min(ids)])
            if rewards:
                scores.append(list_quality_ndcg(rewards, sorted_desc))
                ordering.append(ndcg(rewards))
                mean_rewards.append(float(np.mean(rewards)))
    if not scores:
        return 0.0, 0.0, 0.0
    return (float(np.mean(scores)), float(np.mean(mean_rewards)),
            float(np.mean(ordering)))


class _World:
    """Deterministically constructed catalog, users, quantizer, index,
    reward scorer, and value buckets."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.catalog = gen_catalog(cfg.n_items, cfg.d_e, seed=cfg.seed,
                                   n_clusters=cfg.n_clusters,
                                   dup_fraction=cfg.dup_fraction,
                                   dup_copies=cfg.dup_copies)
        self.users = gen_users(cfg.n_users, self.catalog, seed=cfg.seed + 1)
        self.reward = RewardModelStub(cfg.d_e, seed=cfg.seed + 5)
        self.quantizer = fit_quantizer(self.catalog, cfg.level_sizes,
                                       mode=cfg.quant_mode, seed=cfg.seed)
        self.index = SidIndex()
        self.items_by_id = {}
        for item, sid in zip(self.catalog, encode_items(self.quantizer, self.catalog)):
            self.index.upsert(item.item_id, sid)
            self.items_by_id[item.item_id] = item
        # precomputed reward table: per user, item->reward plus the sorted
        # reward ceiling used by the list-quality metric
        self.user_rewards = {}
        for user in self.users:
            by_item = {it.item_id: self.reward.score(user, it)
                       for it in self.catalog}
            sorted_desc = np.sort(np.array(list(by_item.values())))[::-1]
            self.user_rewards[user.user_id] = (by_item, sorted_desc)
        rng = np.random.default_rng(cfg.seed + 6)
        values = np.concatenate([self.user_rewards[u.user_id][1]
                                 for u in self.users])
        sample = values[rng.choice(values.size, size=min(1000, values.size),
                                   replace=False)]
        self.buckets = fit_ecpm_buckets(sample, cfg.n_value_buckets)


def online_loop(steps, config, out_dir=None, model=None, optimizer_arrays=None,
                start_step=0, collect_training_log=False):
    """Run the closed loop for ``steps`` virtual ticks; see module docs.

    Returns a report dict: per-tick curves, summary numbers, and (under
    non-serializable keys) the trained model and optimizer state. With
    ``collect_training_log`` the consumed supervised/preference samples
    are kept as serializable records under "training_log".
    """
    cfg = config
    world = _World(cfg)
    schedule = resolve_dbw(cfg.schedule_spec, len(cfg.level_sizes))

    if model is None:
        model = DecoderModel(DecoderConfig(
            feat_dim=cfg.d_e, d=cfg.d, d_ff=cfg.d_ff, n_layers=cfg.n_layers,
            trunk_depth=cfg.trunk_depth, level_vocab_sizes=tuple(cfg.level_sizes),
            n_value_buckets=cfg.n_value_buckets, seed=cfg.seed + 2))
    optimizer = Adam(model.params, lr=cfg.lr)
    if optimizer_arrays:
        optimizer.load_state_arrays(optimizer_arrays)

    store = SnapshotStore(model)
    engine = ServingEngine(store, world.index, ServingConfig(
        schedule=schedule, q_threshold=cfg.q_threshold, boost=cfg.boost,
        ttl=cfg.ttl, shared_kv=cfg.shared_kv, precut=cfg.precut,
        value_rerank=cfg.value_rerank), buckets=world.buckets)

    relaxed = BeamSchedule(tuple(w * cfg.relax_factor for w in schedule.widths),
                           base_width=schedule.base_width)
    rng_traffic = np.random.default_rng(cfg.seed + 3)
    rng_feedback = np.random.default_rng(cfg.seed + 4)
    rng_explore = np.random.default_rng(cfg.seed + 7)
    vsl_buffer, rl_buffer = deque(maxlen=1024), deque(maxlen=256)

    baseline_ndcg, baseline_reward, baseline_ordering = evaluate_ndcg(
        model, world.users, world.index, world.user_rewards, schedule,
        cfg.shared_kv, cfg.precut)

    curves = []
    request_log = []
    training_log = []
    for tick in range(start_step, start_step + steps):
        peak = (tick // cfg.phase_length) % 2 == 0
        qps = cfg.peak_qps if peak else cfg.offpeak_qps
        now = float(tick)

        tick_ndcgs = []
        for user in world.users:
            n_req = rng_traffic.poisson(user.activity_rate * cfg.tick_duration)
            for _ in range(n_req):
                result = engine.serve_request(user.user_id, _user_features(user),
                                              now, qps, capacity_slack=1.0)
                request_log.append(result.record(user.user_id, now))
                by_item, sorted_desc = world.user_rewards[user.user_id]
                rewards = [by_item[i] for i, _ in result.items]
                if rewards:
                    tick_ndcgs.append(list_quality_ndcg(rewards, sorted_desc))
                _synthesize_feedback(cfg, world, user, result, rng_feedback,
                                     vsl_buffer)
                if rng_explore.random() < cfg.rl_sample_rate:
                    _, snapshot = store.current()
                    rl_buffer.append(build_rl_log(
                        snapshot, user, world.index, world.items_by_id,
                        world.reward, world.buckets, relaxed, rng_explore,
                        explore_eps=cfg.explore_eps,
                        list_size=cfg.rl_list_size,
                        shared_kv=cfg.shared_kv, precut=cfg.precut))

        loss_val = None
        components = {}
        if tick % cfg.train_every == 0:
            batch = [vsl_buffer.popleft() for _ in range(min(cfg.batch_vsl,
                                                             len(vsl_buffer)))]
            batch += [rl_buffer.popleft() for _ in range(min(cfg.batch_rl,
                                                             len(rl_buffer)))]
            if batch:
                if collect_training_log:
                    from adrec.records import training_sample_to_record
                    training_log.extend(training_sample_to_record(s)
                                        for s in batch)
                loss = unified_loss(batch, model, cfg.loss,
                                    component_sink=components)
                loss_val = float(loss.data)
                if not math.isfinite(loss_val):
                    if out_dir is not None:
                        from adrec.model.decoder import save_checkpoint
                        save_checkpoint(model, f"{out_dir}/diverged.npz",
                                        step=tick)
                    raise RuntimeError(
                        f"training diverged at tick {tick}: loss={loss_val}")
                model.zero_grad()
                loss.backward()
                optimizer.step()
                model.zero_grad()
        if tick % cfg.publish_every == 0:
            store.publish(model)

        curves.append({
            "tick": tick,
            "loss": loss_val,
            "loss_sid": components.get("sid"),
            "loss_ecpm": components.get("ecpm"),
            "loss_mtp": components.get("mtp"),
            "loss_preference": components.get("preference"),
            "requests": engine.requests,
            "ndcg": float(np.mean(tick_ndcgs)) if tick_ndcgs else None,
            "cache_hit_rate": engine.hit_rate(),
            "layer_calls": engine.counter.layer_calls,
            "snapshot_version": store.current()[0],
            "qps": qps,
        })

    final_ndcg, final_reward, final_ordering = evaluate_ndcg(
        model, world.users, world.index, world.user_rewards, schedule,
        cfg.shared_kv, cfg.precut)
    report = {
        "baseline_ndcg": baseline_ndcg,
        "final_ndcg": final_ndcg,
        "baseline_mean_reward": baseline_reward,
        "final_mean_reward": final_reward,
        "baseline_ordering_ndcg": baseline_ordering,
        "final_ordering_ndcg": final_ordering,
        "requests": engine.requests,
        "model_invocations": engine.model_invocations,
        "cache_hit_rate": engine.hit_rate(),
        "layer_calls": engine.counter.layer_calls,
        "curves": curves,
        "request_log": request_log,
        "steps": start_step + steps,
    }
    if collect_training_log:
        report["training_log"] = training_log
    report["_model"] = model
    report["_optimizer_arrays"] = optimizer.state_arrays()
    return report


def _synthesize_feedback(cfg, world, user, result, rng, vsl_buffer):
    """Engagement model: click odds rise with interest-embedding affinity;
    engaged impressions become weighted supervised samples."""
    by_item, _ = world.user_rewards[user.user_id]
    for item_id, _ in result.items:
        item = world.items_by_id[item_id]
        affinity = float(user.interest @ item.embedding)
        p_click = 1.0 / (1.0 + math.exp(-(cfg.feedback_sharpness * affinity
                                          + cfg.feedback_bias)))
        roll = rng.random()
        if roll < p_click * 0.25:
            w_behavior = 4.0  # deep engagement
        elif roll < p_click:
            w_behavior = 2.0  # click
        elif roll < p_click + 0.05:
            w_behavior = 1.0  # sampled plain impression
        else:
            continue
        value = by_item[item_id]
        sid = world.index.sid_of(item_id)
        vsl_buffer.append(TrainingSample(
            features=_user_features(user),
            tokens=sid.tokens,
            ecpm_value=value,
            value_token=discretize_ecpm(world.buckets, value),
            w_user=user.value_tier,
            w_behavior=w_behavior,
        ))
