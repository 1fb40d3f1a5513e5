import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpreg.timeseries import Series, build_lagged, monthly_to_quarterly, pacf


def ar1(phi, n, seed=0, noise=1.0):
    rng = np.random.default_rng(seed)
    x = np.zeros(n)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + noise * rng.standard_normal()
    return x


class TestPacf:
    def test_white_noise_inside_band(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(2000)
        values = pacf(x, max_lag=5)
        band = 2.0 * 2.0 / np.sqrt(2000)
        assert np.all(np.abs(values) < band)

    def test_ar1_cuts_off_after_first_lag(self):
        x = ar1(0.8, 2000, seed=7)
        values = pacf(x, max_lag=5)
        assert 0.75 < values[0] < 0.85
        band = 2.0 * 2.0 / np.sqrt(2000)
        assert np.all(np.abs(values[1:]) < band)

    def test_deterministic_recursion_saturates(self):
        # noiseless unit-coefficient recursion with drift: x_t = x_{t-1} + 2
        x = np.zeros(400)
        for i in range(1, 400):
            x[i] = x[i - 1] + 2.0
        assert pacf(x, max_lag=1)[0] == pytest.approx(1.0, abs=0.02)

    def test_lag1_equals_sample_autocorrelation(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(200)
        xc = x - x.mean()
        rho1 = (xc[:-1] @ xc[1:]) / (xc @ xc)
        assert pacf(x, max_lag=4)[0] == pytest.approx(rho1, rel=1e-12)

    def test_constant_series_rejected(self):
        with pytest.raises(ValueError):
            pacf(np.ones(100), max_lag=3)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            pacf(np.arange(5.0), max_lag=4)

    def test_accepts_series_wrapper(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal(100)
        s = Series(values=x)
        np.testing.assert_array_equal(pacf(s, 3), pacf(x, 3))


class TestMonthlyToQuarterly:
    def test_simple_averaging(self):
        out = monthly_to_quarterly(Series(values=[1, 2, 3, 4, 5, 6]))
        assert out.values.tolist() == [2.0, 5.0]

    def test_constant(self):
        out = monthly_to_quarterly(Series(values=[7.0] * 9))
        assert out.values.tolist() == [7.0, 7.0, 7.0]

    def test_sparse_month(self):
        assert monthly_to_quarterly(Series(values=[0, 0, 3])).values.tolist() == [1.0]

    def test_labels_from_month_starts(self):
        s = Series(values=[1, 2, 3, 4, 5, 6],
                   labels=("1991-01", "1991-02", "1991-03", "1991-04", "1991-05", "1991-06"))
        out = monthly_to_quarterly(s)
        assert out.labels == ("1991-01", "1991-04")

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            monthly_to_quarterly(Series(values=[1.0, 2.0]))

    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=60).filter(lambda v: len(v) % 3 == 0))
    @settings(max_examples=100, deadline=None)
    def test_preserves_mean(self, values):
        out = monthly_to_quarterly(Series(values=values))
        assert out.values.mean() == pytest.approx(np.mean(values), abs=1e-9)


class TestBuildLagged:
    def test_lag_one_alignment(self):
        result = build_lagged(Series(values=[1.0, 2.0, 3.0], labels=("a", "b", "c")), lag=1)
        assert result.values.tolist() == [1.0, 2.0]
        assert result.target_labels == ("b", "c")
        assert result.dropped_labels == ("a",)

    def test_lag_zero_warns(self):
        with pytest.warns(UserWarning):
            result = build_lagged(np.array([1.0, 2.0]), lag=0)
        assert result.values.tolist() == [1.0, 2.0]

    def test_lag_too_large(self):
        with pytest.raises(ValueError):
            build_lagged(np.arange(3.0), lag=3)

    @given(st.integers(1, 5), st.integers(6, 40))
    @settings(max_examples=50, deadline=None)
    def test_length_identity(self, lag, n):
        result = build_lagged(np.arange(float(n)), lag=lag)
        assert result.values.size == n - lag
