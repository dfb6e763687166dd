import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from shelving.classify.subbin import SubbinModel, classify_subbin, decay_weights, log_likelihoods
from shelving.classify.threshold import ThresholdModel, classify_threshold
from shelving.mc import Label, ProtocolConfig

from oracles import integrated_likelihood

TYPICAL = SubbinModel(k=5, delta=5e-5, lam_bright=2.5, lam_dark=0.025, tau_B=2e-3, tau_D=30e-3)


def formula_likelihood(counts, lam_start, lam_end, tau, k, delta):
    """Direct loop over the leak subbin, written from the definition."""
    total = 0.0
    for j in range(k + 1):
        if math.isinf(tau):
            w = 1.0 if j == k else 0.0
        elif j < k:
            w = math.exp(-j * delta / tau) - math.exp(-(j + 1) * delta / tau)
        else:
            w = math.exp(-k * delta / tau)
        p = 1.0
        for i, n in enumerate(counts):
            lam = lam_start if (i < j or j == k) else (0.5 * (lam_start + lam_end) if i == j else lam_end)
            p *= poisson.pmf(n, lam)
        total += w * p
    return total


class TestModel:
    def test_invalid(self):
        for kw in (dict(k=0), dict(delta=0.0), dict(lam_bright=-1.0), dict(prior_bright=2.0), dict(tau_B=0.0)):
            base = dict(k=2, delta=1e-5, lam_bright=1.0, lam_dark=0.1)
            with pytest.raises(ValueError):
                SubbinModel(**(base | kw))

    def test_json_roundtrip(self):
        m = SubbinModel(3, 1e-5, 1.0, 0.1, tau_D=math.inf)
        assert SubbinModel.from_json(m.to_json()) == m
        assert SubbinModel.from_json(TYPICAL.to_json()) == TYPICAL

    def test_for_protocol(self):
        m = SubbinModel.for_protocol(ProtocolConfig.standard(detection_time=2.5e-4), 5)
        assert m.delta == pytest.approx(5e-5)
        assert m.lam_bright == pytest.approx(2.525) and m.lam_dark == pytest.approx(0.025)
        assert (m.tau_B, m.tau_D) == (2e-3, 30e-3)
        d = SubbinModel.for_protocol(ProtocolConfig.d52_shelved(), 2)
        assert math.isinf(d.tau_B) and d.tau_D == pytest.approx(7.4e-3 / (0.185 / 1.001))

    def test_weights(self):
        w = decay_weights(5, 5e-5, 2e-3)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)
        assert w[-1] == pytest.approx(math.exp(-2.5e-4 / 2e-3))
        assert decay_weights(3, 1.0, math.inf).tolist() == [0, 0, 0, 1]


class TestLikelihood:
    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 9), min_size=5, max_size=5))
    def test_matches_formula(self, counts):
        lb, ld = log_likelihoods(TYPICAL, counts)
        m = TYPICAL
        assert math.exp(lb) == pytest.approx(formula_likelihood(counts, m.lam_bright, m.lam_dark, m.tau_B, 5, m.delta), rel=1e-10)
        assert math.exp(ld) == pytest.approx(formula_likelihood(counts, m.lam_dark, m.lam_bright, m.tau_D, 5, m.delta), rel=1e-10)

    def test_close_to_integration_oracle(self):
        # the midpoint rule only changes the leak-subbin term, so the two agree
        # to within the spread of that term (about 20% at worst, for an all-zero vector under the bright hypothesis)
        m = TYPICAL
        rng = np.random.default_rng(0)
        counts = rng.poisson(1.0, size=(200, 5))
        lb, _ = log_likelihoods(m, counts)
        ref = integrated_likelihood(counts, m.lam_bright, m.lam_dark, m.tau_B, m.delta)
        assert np.allclose(np.exp(lb), ref, rtol=0.3)
        assert np.median(np.abs(np.exp(lb) / ref - 1)) < 0.05

    def test_normalised(self):
        m = SubbinModel(k=3, delta=5e-5, lam_bright=2.5, lam_dark=0.025, tau_B=2e-3, tau_D=30e-3)
        grid = np.array(list(itertools.product(range(26), repeat=3)))
        lb, ld = log_likelihoods(m, grid)
        assert np.exp(lb).sum() == pytest.approx(1.0, abs=1e-9)
        assert np.exp(ld).sum() == pytest.approx(1.0, abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            classify_subbin(TYPICAL, [1, 2, 3])
        with pytest.raises(ValueError):
            classify_subbin(TYPICAL, [1, -1, 0, 0, 0])


class TestDecisions:
    def test_early_burst_is_bright(self):
        label, llr = classify_subbin(TYPICAL, [8, 0, 0, 0, 0])
        assert label is Label.BRIGHT and llr > 0

    def test_examples(self):
        assert classify_subbin(TYPICAL, [1, 0, 0, 0, 0])[0] is Label.DARK
        assert classify_subbin(TYPICAL, [3, 2, 3, 2, 3])[0] is Label.BRIGHT

    def test_k1_is_threshold(self):
        m = SubbinModel(k=1, delta=2.5e-4, lam_bright=12.5, lam_dark=0.125, tau_B=2e-3, tau_D=30e-3)
        n = np.arange(60)[:, None]
        labels, llr = classify_subbin(m, n)
        assert np.all(np.diff(llr) > 0)
        crossing = int(np.argmax(labels))
        model = ThresholdModel(crossing - 0.5)
        assert np.array_equal(labels, classify_threshold(model, n[:, 0]))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 10), min_size=4, max_size=4), st.randoms())
    def test_no_decay_sufficiency(self, counts, rnd):
        m = SubbinModel(k=4, delta=5e-5, lam_bright=2.5, lam_dark=0.025)
        other = list(counts)
        rnd.shuffle(other)
        moved = [sum(counts)] + [0, 0, 0]
        _, a = classify_subbin(m, counts)
        _, b = classify_subbin(m, other)
        _, c = classify_subbin(m, moved)
        assert a == pytest.approx(b, rel=1e-12, abs=1e-9) and a == pytest.approx(c, rel=1e-12, abs=1e-9)

    def test_batch_matches_single(self):
        counts = np.random.default_rng(1).poisson(1.0, size=(20, 5))
        labels, llr = classify_subbin(TYPICAL, counts)
        for row, lab, r in zip(counts, labels, llr):
            l1, r1 = classify_subbin(TYPICAL, row)
            assert int(l1) == lab and r1 == pytest.approx(r)

    def test_prior(self):
        sure = SubbinModel(5, 5e-5, 2.5, 0.025, prior_bright=1.0)
        assert classify_subbin(sure, [0, 0, 0, 0, 0])[0] is Label.BRIGHT
