"""Value buckets and the token-level supervised losses."""

import numpy as np
import pytest

from adrec import autodiff as ad
from adrec.autodiff import no_grad
from adrec.losses.preference import LossConfig
from adrec.losses.supervised import (EcpmBuckets, TrainingSample,
                                     discretize_ecpm, ecpm_loss,
                                     fit_ecpm_buckets, mtp_loss, ntp_loss,
                                     sid_loss, vsl_loss)
from adrec.model.decoder import context_process, lazy_forward
from adrec.verify import random_decoder
from tests.test_model import _model


class TestBuckets:
    def test_midpoint_convention(self):
        buckets = fit_ecpm_buckets([1.0, 2.0, 3.0, 4.0], 2)
        np.testing.assert_allclose(buckets.boundaries, [2.5])
        tokens = [discretize_ecpm(buckets, v) for v in (1, 2, 3, 4)]
        assert tokens == [0, 0, 1, 1]

    def test_out_of_range_clamps(self):
        buckets = fit_ecpm_buckets([1.0, 2.0, 3.0, 4.0], 2)
        assert discretize_ecpm(buckets, -100.0) == 0
        assert discretize_ecpm(buckets, 100.0) == 1

    def test_single_bucket(self):
        buckets = fit_ecpm_buckets([3.0, 7.0], 1)
        assert buckets.effective_buckets == 1
        assert discretize_ecpm(buckets, 5.0) == 0

    def test_boundary_value_goes_right(self):
        buckets = fit_ecpm_buckets([1.0, 2.0, 3.0, 4.0], 2)
        assert discretize_ecpm(buckets, 2.5) == 1  # left-closed buckets

    def test_duplicate_values_collapse(self):
        buckets = fit_ecpm_buckets([1.0] * 10, 4)
        assert buckets.effective_buckets < 4

    def test_populations_balanced_on_random_sets(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            values = rng.normal(size=int(rng.integers(4, 120)))
            n_buckets = int(rng.integers(1, 8))
            buckets = fit_ecpm_buckets(values, n_buckets)
            tokens = np.searchsorted(buckets.boundaries, values, side="right")
            counts = np.bincount(tokens, minlength=buckets.effective_buckets)
            assert counts.max() - counts.min() <= 1

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_ecpm_buckets([], 2)
        with pytest.raises(ValueError):
            fit_ecpm_buckets([1.0], 0)


def _uniform_trace(model):
    """Trace with all-equal logits: per-level loss is exactly ln(V)."""
    x = context_process(np.ones((1, model.config.feat_dim)), model.params)
    for t in range(model.config.n_levels):
        model.params[f"head.{t}"].data[:] = 0.0
    model.params["head.value"].data[:] = 0.0
    return lazy_forward(model, x, tuple(0 for _ in model.config.level_vocab_sizes))


class TestTokenLosses:
    def test_uniform_logits_give_log_vocab(self):
        model = _model(sizes=(4, 3), buckets=5)
        trace = _uniform_trace(model)
        got = float(sid_loss(trace, (0, 0)).data)
        assert np.isclose(got, np.log(4) + np.log(3), atol=1e-12)
        assert np.isclose(float(ecpm_loss(trace, 2).data), np.log(5),
                          atol=1e-12)
        assert np.isclose(float(mtp_loss(trace, (1, 1)).data),
                          np.log(4) + np.log(3), atol=1e-12)

    def test_large_margin_drives_loss_to_zero(self):
        model = _model(sizes=(4,), buckets=1)
        x = context_process(np.ones((1, 3)), model.params)
        losses = []
        for margin in (0.0, 5.0, 50.0):
            model.params["head.0"].data[:] = 0.0
            model.params["head.0"].data[:, 2] = margin
            trace = lazy_forward(model, x, (2,))
            losses.append(float(sid_loss(trace, (2,)).data))
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-20

    def test_matches_independent_softmax_oracle(self):
        rng = np.random.default_rng(3)
        model = random_decoder(rng)
        feats = rng.normal(size=(1, model.config.feat_dim))
        x = context_process(feats, model.params)
        tokens = tuple(int(rng.integers(0, v))
                       for v in model.config.level_vocab_sizes)
        v_tok = int(rng.integers(0, model.config.n_value_buckets))
        with no_grad():
            trace = lazy_forward(model, x, tokens)
            got_sid = float(sid_loss(trace, tokens).data)
            got_ecpm = float(ecpm_loss(trace, v_tok).data)

        def nll(logits, target):
            logits = np.asarray(logits, dtype=np.float64)
            return float(np.log(np.exp(logits).sum()) - logits[target])

        want_sid = sum(nll(trace.head_logits[t].data, tok)
                       for t, tok in enumerate(tokens))
        want_ecpm = nll(trace.value_logits.data, v_tok)
        assert np.isclose(got_sid, want_sid, atol=1e-9)
        assert np.isclose(got_ecpm, want_ecpm, atol=1e-9)

    def test_mtp_ignores_head_only_parameters(self):
        model = _model(sizes=(4, 3), L=3, K=1)
        x = context_process(np.ones((1, 3)), model.params)
        trace = lazy_forward(model, x, (1, 2))
        loss = mtp_loss(trace, (1, 2))
        model.zero_grad()
        loss.backward()
        for name in model.head_layer_names():
            grad = model.params[name].grad
            assert grad is None or not np.any(grad), name
        for name in ("fuse.Wf", "fuse.Wg", "bos", "emb.0"):
            grad = model.params[name].grad
            assert grad is None or not np.any(grad), name
        # trunk layers and shared classifiers do receive gradient
        assert model.params["layer0.cross.Wq"].grad is not None
        assert np.any(model.params["head.0"].grad)

    def test_mtp_finite_with_zeroed_head_layers(self):
        model = _model(sizes=(3, 3), L=2, K=1)
        for name in model.head_layer_names():
            model.params[name].data[:] = 0.0
        x = context_process(np.ones((1, 3)), model.params)
        trace = lazy_forward(model, x, (0, 1))
        assert np.isfinite(float(mtp_loss(trace, (0, 1)).data))


class TestVslComposite:
    def _setup(self):
        model = _model(sizes=(4, 3), buckets=4)
        x = context_process(np.ones((1, 3)), model.params)
        trace = lazy_forward(model, x, (1, 0))
        return model, trace

    def test_weight_scaling_is_linear(self):
        _, trace = self._setup()
        cfg = LossConfig(lambda_e=0.5, lambda_mtp=0.25)

        def sample(w_user):
            return TrainingSample(features=np.ones((1, 3)), tokens=(1, 0),
                                  ecpm_value=1.0, value_token=2,
                                  w_user=w_user, w_behavior=2.0)

        one = float(vsl_loss(sample(1.0), trace, cfg).data)
        two = float(vsl_loss(sample(2.0), trace, cfg).data)
        assert np.isclose(two, 2.0 * one, atol=1e-12)

    def test_zero_lambdas_reduce_to_weighted_sid(self):
        _, trace = self._setup()
        cfg = LossConfig(lambda_e=0.0, lambda_mtp=0.0)
        sample = TrainingSample(features=np.ones((1, 3)), tokens=(1, 0),
                                ecpm_value=1.0, value_token=2,
                                w_user=3.0, w_behavior=1.0)
        got = float(vsl_loss(sample, trace, cfg).data)
        want = 3.0 * float(sid_loss(trace, (1, 0)).data)
        assert np.isclose(got, want, atol=1e-12)

    def test_composition(self):
        _, trace = self._setup()
        cfg = LossConfig(lambda_e=0.7, lambda_mtp=0.3)
        sample = TrainingSample(features=np.ones((1, 3)), tokens=(1, 0),
                                ecpm_value=1.0, value_token=2,
                                w_user=2.0, w_behavior=2.0)
        got = float(vsl_loss(sample, trace, cfg).data)
        want = 4.0 * (float(sid_loss(trace, (1, 0)).data)
                      + 0.7 * float(ecpm_loss(trace, 2).data)
                      + 0.3 * float(mtp_loss(trace, (1, 0)).data))
        assert np.isclose(got, want, atol=1e-10)

    def test_sample_validation(self):
        with pytest.raises(ValueError):
            TrainingSample(features=np.ones((1, 3)), tokens=(0,),
                           ecpm_value=1.0, value_token=0, w_user=0.0)
        with pytest.raises(ValueError):
            TrainingSample(features=np.ones((1, 3)), tokens=(0,),
                           ecpm_value=np.inf, value_token=0)
