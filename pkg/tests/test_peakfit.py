import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import curve_fit

from shelving.classify.lm import FitError, levenberg_marquardt
from shelving.classify.peakfit import gaussian_peak_fit

F760 = 394.430203e12


def gauss(x, a, c, s, off):
    return off + a * np.exp(-((x - c) ** 2) / (2 * s * s))


class TestLM:
    def test_against_curve_fit(self):
        rng = np.random.default_rng(0)
        x = np.linspace(0, 5, 60)
        y = 2.0 * np.exp(-0.7 * x) + 0.3 + rng.normal(0, 0.02, x.size)

        def resid(p):
            return p[0] * np.exp(-p[1] * x) + p[2] - y

        def jac(p):
            e = np.exp(-p[1] * x)
            return np.column_stack([e, -p[0] * x * e, np.ones_like(x)])

        res = levenberg_marquardt(resid, jac, [1.0, 1.0, 0.0])
        ref, cov = curve_fit(lambda x, a, b, c: a * np.exp(-b * x) + c, x, y, p0=[1.0, 1.0, 0.0])
        assert np.allclose(res.params, ref, rtol=1e-6)
        assert np.allclose(res.stderr, np.sqrt(np.diag(cov)), rtol=1e-4)
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))

    def test_no_convergence(self):
        with pytest.raises(FitError) as exc:
            levenberg_marquardt(lambda p: np.array([np.sin(p[0] * 1e3), p[0] - 1e9]),
                                lambda p: np.array([[1e3 * np.cos(p[0] * 1e3)], [1.0]]) * 1e-9, [0.0], max_iter=2)
        assert exc.value.residual_norm is not None


class TestPeakFit:
    def test_noiseless_exact(self):
        sigma = 3e6
        x = F760 + np.linspace(-15e6, 15e6, 121)
        y = gauss(x, 0.8, F760, sigma, 0.05)
        (p,) = gaussian_peak_fit(x, y)
        assert abs(p.center - F760) / F760 < 1e-9
        assert abs(p.center - F760) / sigma < 1e-6
        assert p.width == pytest.approx(sigma, rel=1e-9)
        assert p.amplitude == pytest.approx(0.8, rel=1e-9)
        assert p.offset == pytest.approx(0.05, rel=1e-9)

    def test_all_zero(self):
        with pytest.raises(FitError):
            gaussian_peak_fit(np.arange(10.0), np.zeros(10))

    @pytest.mark.parametrize("seed", range(5))
    def test_two_peaks_noisy(self, seed):
        rng = np.random.default_rng(seed)
        s = 3e6
        c1, c2 = F760 - 2.5 * s, F760 + 2.5 * s
        x = F760 + np.linspace(-20e6, 20e6, 161)
        y = gauss(x, 1.0, c1, s, 0.0) + gauss(x, 0.7, c2, s, 0.0) + rng.normal(0, 0.01, x.size)
        p1, p2 = gaussian_peak_fit(x, y, n_peaks=2)
        assert abs(p1.center - c1) <= 3 * p1.center_err
        assert abs(p2.center - c2) <= 3 * p2.center_err

    def test_history_nonincreasing(self):
        x = np.linspace(-5, 5, 50)
        y = gauss(x, 1.0, 0.3, 1.1, 0.1) + np.random.default_rng(1).normal(0, 0.02, 50)
        _, res = gaussian_peak_fit(x, y, return_result=True)
        assert all(b <= a for a, b in zip(res.history, res.history[1:]))

    def test_validation(self):
        x = np.arange(10.0)
        with pytest.raises(ValueError):
            gaussian_peak_fit(x, x, n_peaks=3)
        with pytest.raises(ValueError):
            gaussian_peak_fit(x[::-1], x)
        with pytest.raises(ValueError):
            gaussian_peak_fit(x, x[:5])
        with pytest.raises(FitError):
            gaussian_peak_fit(x, np.exp(-((x - 4) ** 2)), n_peaks=2)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-2, 2), st.floats(0.3, 1.5), st.floats(0.1, 10), st.floats(-1, 1))
    def test_noiseless_recovery(self, c, s, a, off):
        x = np.linspace(-6, 6, 80)
        (p,) = gaussian_peak_fit(x, gauss(x, a, c, s, off))
        assert p.center == pytest.approx(c, abs=1e-7) and p.width == pytest.approx(s, rel=1e-6)

    def test_standard_error_coverage(self):
        # over many noise draws the 3-sigma interval should cover the truth almost always
        s, hits, n = 3e6, 0, 200
        c1, c2 = -2.5 * s, 2.5 * s
        x = np.linspace(-20e6, 20e6, 161)
        for seed in range(n):
            rng = np.random.default_rng(1000 + seed)
            y = gauss(x, 1.0, c1, s, 0.0) + gauss(x, 0.7, c2, s, 0.0) + rng.normal(0, 0.01, x.size)
            p1, p2 = gaussian_peak_fit(x, y, n_peaks=2)
            hits += abs(p1.center - c1) <= 3 * p1.center_err and abs(p2.center - c2) <= 3 * p2.center_err
        assert hits / n >= 0.97
