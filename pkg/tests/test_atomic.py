import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from shelving.atomic import (DEFAULT_CONSTANTS, NO_DECAY, TABLE_KEYS, AtomicConstants, Level, Measured,
                             StableStateError, Term, UnsupportedTransition, line_center, sample_decay,
                             sample_decays, transition_frequency, zeeman_shift)

S0 = Level(Term.S12, 0, 0)
S1 = Level(Term.S12, 1, 0)
D2 = Level(Term.D52, 2, 0)
D3 = Level(Term.D52, 3, 0)
F3 = Level(Term.F72, 3, 0)


class TestLevel:
    def test_valid(self):
        assert str(Level(Term.D52, 3, -3)) == "D52|3,-3>"

    @pytest.mark.parametrize("term,F,mF", [(Term.D52, 1, 0), (Term.S12, 2, 0), (Term.D52, 2, 3), (Term.F72, 3, -4)])
    def test_invalid(self, term, F, mF):
        with pytest.raises(ValueError):
            Level(term, F, mF)

    def test_term_from_string(self):
        assert Level("F72", 4).term is Term.F72


class TestConstants:
    def test_branching_normalised(self):
        for lvl in (D2, D3):
            assert sum(p for _, p in DEFAULT_CONSTANTS.branching(lvl)) == pytest.approx(1.0, abs=1e-9)

    def test_s_branch(self):
        assert DEFAULT_CONSTANTS.s_branch(D2) == pytest.approx((0.111 + 0.074) / 1.001, rel=1e-12)
        assert DEFAULT_CONSTANTS.s_branch(D3) == pytest.approx(0.176)

    def test_stable_state(self):
        with pytest.raises(StableStateError):
            DEFAULT_CONSTANTS.lifetime(S1)
        with pytest.raises(StableStateError):
            DEFAULT_CONSTANTS.branching(S0)

    def test_f72_infinite(self):
        assert math.isinf(DEFAULT_CONSTANTS.lifetime(F3))

    def test_uncertainty_nonnegative(self):
        with pytest.raises(ValueError):
            Measured(1.0, -0.1)

    def test_bad_lifetime(self):
        with pytest.raises(ValueError):
            AtomicConstants(lifetime_D52_F2=Measured(0.0))

    def test_overrides(self, tmp_path):
        key = "Lifetime of D5/2|2> (ms)"
        c = DEFAULT_CONSTANTS.with_overrides({key: 8.0})
        assert c.lifetime(D2) == pytest.approx(8e-3)
        assert c.lifetime_D52_F2.sigma == DEFAULT_CONSTANTS.lifetime_D52_F2.sigma
        path = tmp_path / "c.json"
        path.write_text(json.dumps({key: [9.0, 0.5]}))
        c2 = AtomicConstants.from_json(path)
        assert c2.lifetime_D52_F2.value == pytest.approx(9e-3)
        assert c2.lifetime_D52_F2.sigma == pytest.approx(0.5e-3)
        with pytest.raises(KeyError):
            DEFAULT_CONSTANTS.with_overrides({"nonsense": 1})

    def test_every_table_key_maps_to_a_field(self):
        for attr, _ in TABLE_KEYS.values():
            assert isinstance(getattr(DEFAULT_CONSTANTS, attr), Measured)


class TestFrequencies:
    def test_clock_line_zero_field(self):
        assert transition_frequency(S0, D2, 0.0) == 729.487752e12

    def test_zero_field_identity(self):
        assert transition_frequency(S1, D3, 0.0) == line_center(S1, D3)

    def test_quadratic_shift(self):
        # direct arithmetic from the tabulated coefficient
        expected = -0.350 * 440.9**2
        assert expected == pytest.approx(-68.03e3, abs=10)
        f = transition_frequency(S1, D3, 440.9)
        assert f - 729.474917e12 == pytest.approx(expected, abs=0.5)  # float spacing at 729 THz is 0.125 Hz

    def test_linear_shift(self):
        up = Level(Term.D52, 2, 1)
        lo = Level(Term.S12, 0, 0)
        B = 10.0
        expected = 19.61e3 * 1 * B
        assert transition_frequency(lo, up, B) - 729.487752e12 == pytest.approx(expected, abs=1e-2)
        lo1, up3 = Level(Term.S12, 1, -1), Level(Term.D52, 3, 1)
        expected = 13.96e3 * B - 13.98e3 * (-1) * B
        assert transition_frequency(lo1, up3, B) - 729.474917e12 == pytest.approx(expected, abs=1e-2)

    def test_760_lines(self):
        assert line_center(Level(Term.F72, 4), Level(Term.B1D32, 1)) == 394.430203e12
        assert line_center(Level(Term.F72, 3), Level(Term.B1D32, 1)) == 394.424943e12

    def test_errors(self):
        with pytest.raises(UnsupportedTransition):
            transition_frequency(S0, D3, 0.0)
        with pytest.raises(ValueError):
            transition_frequency(S0, D2, -1.0)

    @given(st.sampled_from([(Term.S12, 1), (Term.D52, 2), (Term.D52, 3)]),
           st.sampled_from([(Term.S12, 1), (Term.D52, 2), (Term.D52, 3)]),
           st.integers(-3, 3), st.integers(-3, 3), st.floats(0, 1000))
    def test_shift_antisymmetry(self, a, b, ma, mb, B):
        if abs(ma) > a[1] or abs(mb) > b[1]:
            return
        la, lb = Level(a[0], a[1], ma), Level(b[0], b[1], mb)
        d_ab = zeeman_shift(lb, B) - zeeman_shift(la, B)
        d_ba = zeeman_shift(la, B) - zeeman_shift(lb, B)
        assert d_ab == -d_ba


class TestDecay:
    def test_f72_sentinel(self):
        for seed in range(20):
            ev = sample_decay(F3, seed)
            assert ev is NO_DECAY and not ev.decays
        d, idx = sample_decays(F3, 5, 0)
        assert np.all(np.isinf(d)) and np.all(idx == -1)

    def test_stable_source(self):
        with pytest.raises(StableStateError):
            sample_decay(S1, 0)

    def test_single_draw_valid(self):
        dests = {lvl for lvl, _ in DEFAULT_CONSTANTS.branching(D2)}
        for seed in range(50):
            ev = sample_decay(D2, seed)
            assert ev.delay >= 0 and ev.destination in dests

    def test_single_matches_seeded_generator(self):
        a = sample_decay(D3, 123)
        b = sample_decay(D3, 123)
        assert a == b

    def test_branching_frequencies_d3(self):
        n = 10**6
        _, idx = sample_decays(D3, n, 1)
        for i, (_, p) in enumerate(DEFAULT_CONSTANTS.branching(D3)):
            k = np.count_nonzero(idx == i)
            assert abs(k / n - p) <= 3 * math.sqrt(p * (1 - p) / n)
        assert abs(np.count_nonzero(idx == 0) / n - 0.176) <= 3 * math.sqrt(0.176 * 0.824 / n)

    def test_branching_frequencies_d2(self):
        n = 10**6
        _, idx = sample_decays(D2, n, 2)
        for i, (_, p) in enumerate(DEFAULT_CONSTANTS.branching(D2)):
            k = np.count_nonzero(idx == i)
            assert abs(k / n - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_mean_delay_d2(self):
        n = 10**6
        d, _ = sample_decays(D2, n, 3)
        tau = 7.4e-3
        assert abs(d.mean() - tau) <= 3 * tau / math.sqrt(n)

    def test_ks_exponential(self):
        d, _ = sample_decays(D3, 10**5, 4)
        assert stats.kstest(d, "expon", args=(0, 7.1e-3)).pvalue > 0.01

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**63))
    def test_delays_nonnegative(self, seed):
        d, idx = sample_decays(D2, 100, seed)
        assert np.all(d >= 0) and np.all((0 <= idx) & (idx < 3))
