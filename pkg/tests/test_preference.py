"""List-wise preference loss: frozen scalar cases, the reference gate,
alignment scores, unified weights, and the cost-bound property."""

import math

import numpy as np
import pytest

from adrec.autodiff import Tensor
from adrec.losses.preference import (CandidateList, LossConfig, RlSample,
                                     alignment_score, ref_gate, rspo_loss,
                                     unified_loss, unified_weights)
from adrec.losses.supervised import TrainingSample
from adrec.verify import (_rspo_oracle_parts, random_candidate_list,
                          random_decoder)


def _clist(rewards, policy, ref=None):
    tokens = [(i,) for i in range(len(rewards))]
    return CandidateList(tokens, np.asarray(rewards, dtype=float),
                         list(policy), ref_logp=ref)


class TestRspoLoss:
    def test_single_candidate_is_zero(self):
        clist = _clist([2.0], [-0.5])
        assert float(rspo_loss(clist, LossConfig()).data) == 0.0

    def test_two_candidate_closed_form(self):
        # rewards (1, 0), equal policy log-probs, no reference: the only
        # term is log2(1 + M_12)
        clist = _clist([1.0, 0.0], [-1.0, -1.0])
        got = float(rspo_loss(clist, LossConfig(beta=3.7)).data)
        m12 = abs(1.0 - 1.0 / math.log2(3.0))
        want = math.log2(1.0 + m12)
        assert np.isclose(got, want, atol=1e-12)
        assert np.isclose(got, 0.4532, atol=5e-4)

    def test_equal_rewards_contribute_nothing(self):
        clist = _clist([1.5, 1.5, 1.5], [-0.2, -1.0, -2.0])
        assert float(rspo_loss(clist, LossConfig()).data) == 0.0

    def test_shift_invariance_without_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            clist, cfg = random_candidate_list(rng, with_ref=False)
            base = float(rspo_loss(clist, cfg).data)
            shifted = _clist(clist.rewards,
                             [lp + 123.456 for lp in clist.policy_logp])
            got = float(rspo_loss(shifted, cfg).data)
            assert np.isclose(got, base, atol=1e-9)

    def test_upper_bounds_indicator_cost_on_random_lists(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            clist, cfg = random_candidate_list(rng)
            loss = float(rspo_loss(clist, cfg).data)
            indicator_total, per_i = _rspo_oracle_parts(clist, cfg)
            assert loss + 1e-9 >= indicator_total
            for _, mid, msum in per_i:
                assert msum < 1.0

    def test_sorting_enforced(self):
        with pytest.raises(ValueError):
            _clist([0.0, 1.0], [-1.0, -1.0])

    def test_finite_policy_required(self):
        with pytest.raises(ValueError):
            _clist([1.0, 0.0], [-np.inf, -1.0])


class TestRefGate:
    def test_absent_reference_gates_off(self):
        clist = _clist([1.0, 0.0], [-1.0, -2.0])
        assert ref_gate(clist, 0, delta=10.0) == 0

    def test_partial_reference_gates_off(self):
        clist = _clist([1.0, 0.0], [-1.0, -2.0], ref=[-1.0, None])
        assert ref_gate(clist, 0, delta=10.0) == 0

    def test_identical_reference_gates_on(self):
        clist = _clist([1.0, 0.0], [-1.0, -2.0], ref=[-1.0, -2.0])
        assert ref_gate(clist, 0, delta=0.5) == 1

    def test_boundary_is_strict(self):
        # mean absolute log-ratio exactly delta -> gate off
        clist = _clist([1.0, 0.0], [-1.0, -2.0], ref=[-1.5, -2.5])
        assert ref_gate(clist, 0, delta=0.5) == 0
        assert ref_gate(clist, 0, delta=0.5 + 1e-9) == 1

    def test_gate_changes_loss(self):
        policy = [-0.3, -2.0]
        ref = [-2.0, -0.4]
        gated = _clist([1.0, 0.0], policy, ref=ref)
        ungated = _clist([1.0, 0.0], policy)
        on = float(rspo_loss(gated, LossConfig(beta=1.0, delta=1e9)).data)
        off = float(rspo_loss(ungated, LossConfig(beta=1.0, delta=1e9)).data)
        assert not np.isclose(on, off)


class TestAlignment:
    def test_identical_orderings(self):
        clist = _clist([3.0, 2.0, 1.0], [-0.1, -0.5, -0.9])
        for i in range(3):
            assert alignment_score(clist, i) == 0.0

    def test_full_reversal_extremes(self):
        n = 4
        clist = _clist([3.0, 2.0, 1.0, 0.5], [-4.0, -3.0, -2.0, -1.0])
        assert alignment_score(clist, 0) == 1.0
        assert alignment_score(clist, n - 1) == 1.0

    def test_direct_arithmetic(self):
        # policy ranks: candidate 3 is ranked 2nd by policy, 4th by reward
        policy = [-0.1, -3.0, -4.0, -0.2, -5.0]
        clist = _clist([5.0, 4.0, 3.0, 2.0, 1.0], policy)
        assert np.isclose(alignment_score(clist, 3), 0.5)

    def test_single_candidate_defined_zero(self):
        assert alignment_score(_clist([1.0], [-0.5]), 0) == 0.0


class TestUnifiedWeights:
    def test_aligned_sample(self):
        cfg = LossConfig(w0=1.0, z_max=2.0)
        w_vsl, w_rl = unified_weights(0.0, 5.0, cfg)
        assert (w_vsl, w_rl) == (1.0, 2.0)

    def test_misaligned_boundary(self):
        cfg = LossConfig(w0=0.7, z_max=2.0)
        w_vsl, w_rl = unified_weights(1.0, 3.0, cfg)
        assert np.isclose(w_vsl, 0.7 * 4.0)
        assert w_rl == 0.0

    def test_monotonicity_in_alignment(self):
        cfg = LossConfig(w0=1.0, z_max=1.5)
        grid = np.linspace(0, 1, 11)
        vsl = [unified_weights(a, 2.0, cfg)[0] for a in grid]
        rl = [unified_weights(a, 2.0, cfg)[1] for a in grid]
        assert all(b >= a for a, b in zip(vsl, vsl[1:]))
        assert all(b < a for a, b in zip(rl, rl[1:]))

    def test_negative_reward_rejected(self):
        with pytest.raises(ValueError):
            unified_weights(0.5, -1.0, LossConfig())


class TestUnifiedLoss:
    def _batch(self, rng, model):
        sizes = model.config.level_vocab_sizes
        vsl = TrainingSample(
            features=rng.normal(size=(1, model.config.feat_dim)),
            tokens=tuple(int(rng.integers(0, v)) for v in sizes),
            ecpm_value=1.0, value_token=0, w_user=2.0, w_behavior=1.0)
        rl = RlSample(
            features=rng.normal(size=(1, model.config.feat_dim)),
            tokens_list=[tuple(int(rng.integers(0, v)) for v in sizes)
                         for _ in range(3)],
            rewards=np.array([2.0, 1.0, 0.5]),
            value_tokens=[0, 0, 0])
        return [vsl, rl]

    def test_zero_zmax_is_pure_weighted_vsl(self):
        rng = np.random.default_rng(5)
        model = random_decoder(rng)
        batch = self._batch(rng, model)
        cfg_rl = LossConfig(z_max=1.0)
        cfg_novl = LossConfig(z_max=0.0)
        with_rl = float(unified_loss(batch, model, cfg_rl).data)
        without = float(unified_loss(batch, model, cfg_novl).data)
        assert with_rl > without  # preference terms only add

    def test_zero_w0_zeroes_list_terms(self):
        rng = np.random.default_rng(6)
        model = random_decoder(rng)
        _, rl = self._batch(rng, model)
        cfg = LossConfig(w0=0.0, z_max=1.0)
        got = float(unified_loss([rl], model, cfg).data)
        assert got == 0.0

    def test_empty_batch_rejected(self):
        rng = np.random.default_rng(7)
        model = random_decoder(rng)
        with pytest.raises(ValueError):
            unified_loss([], model, LossConfig())


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(beta=0.0)
    with pytest.raises(ValueError):
        LossConfig(delta=-1.0)
    with pytest.raises(ValueError):
        LossConfig(lambda_e=-0.1)
    # zero w0 / z_max are exercised by documented degenerate cases
    LossConfig(w0=0.0, z_max=0.0)
