import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hemirecon import (
    DegenerateBaseline,
    FormatError,
    MissingDataError,
    NoCompleteBlock,
    NoOverlap,
    TimeSeries,
    align,
    interpolate_linear,
    loess_smooth,
    read_series_csv,
    split_bands,
    to_anomaly,
    write_series_csv,
)
from hemirecon.timeseries import block_start_for, decadal_average, decade_blocks


def series(start, values):
    return TimeSeries(start, np.asarray(values, dtype=float))


class TestTimeSeries:
    def test_mask_and_nan_consistent(self):
        s = TimeSeries(2000, [1.0, np.nan, 3.0])
        assert list(s.mask) == [True, False, True]
        s2 = TimeSeries(2000, [1.0, 2.0, 3.0], mask=[True, False, True])
        assert np.isnan(s2.values[1])

    def test_length_validation(self):
        with pytest.raises(ValueError):
            TimeSeries(2000, [])
        with pytest.raises(ValueError):
            TimeSeries(2000, [1.0, 2.0], mask=[True])

    def test_years_axis(self):
        s = series(1856, range(5))
        assert s.end_year == 1860
        assert list(s.years) == [1856, 1857, 1858, 1859, 1860]

    def test_immutable(self):
        s = series(0, [1, 2, 3])
        with pytest.raises(ValueError):
            s.values[0] = 9.0


class TestAlign:
    def test_paper_calibration_overlap(self):
        # [1000-1980] vs [1856-2006] meet exactly on the calibration interval
        a = series(1000, np.zeros(981))
        b = series(1856, np.zeros(151))
        aa, bb = align(a, b)
        assert (aa.start_year, aa.end_year) == (1856, 1980)
        assert (bb.start_year, bb.end_year) == (1856, 1980)

    def test_identity_on_same_axis(self):
        a = series(1900, [1, 2, 3])
        b = series(1900, [4, 5, 6])
        aa, bb = align(a, b)
        assert aa.start_year == a.start_year and len(aa) == len(a)
        np.testing.assert_array_equal(aa.values, a.values)

    def test_disjoint_raises(self):
        with pytest.raises(NoOverlap):
            align(series(1000, np.zeros(501)), series(1600, np.zeros(101)))

    def test_masks_preserved(self):
        a = TimeSeries(1900, [1.0, np.nan, 3.0, 4.0])
        b = series(1901, [1, 2, 3])
        aa, bb = align(a, b)
        assert list(aa.mask) == [False, True, True]

    @given(
        st.integers(min_value=-200, max_value=200),
        st.integers(min_value=1, max_value=50),
        st.integers(min_value=-200, max_value=200),
        st.integers(min_value=1, max_value=50),
    )
    def test_span_commutative(self, s1, n1, s2, n2):
        a = series(s1, np.zeros(n1))
        b = series(s2, np.zeros(n2))
        try:
            aa, bb = align(a, b)
        except NoOverlap:
            with pytest.raises(NoOverlap):
                align(b, a)
            return
        bb2, aa2 = align(b, a)
        assert aa.start_year == aa2.start_year and len(aa) == len(aa2)
        assert bb.start_year == bb2.start_year


class TestToAnomaly:
    def test_constant_goes_to_zero(self):
        s = series(1900, np.full(30, 3.7))
        out = to_anomaly(s, 1900, 1929)
        np.testing.assert_allclose(out.values, 0.0, atol=1e-14)

    def test_symmetric_case(self):
        out = to_anomaly(series(0, [1, 2, 3]), 0, 2)
        np.testing.assert_allclose(out.values, [-1, 0, 1])

    def test_base_mean_is_zero_after(self):
        rng = np.random.default_rng(5)
        s = series(1800, rng.normal(2.0, 1.0, 120))
        out = to_anomaly(s, 1856, 1900)
        base = out.crop(1856, 1900)
        # independent oracle: recompute the mean directly
        assert abs(np.nanmean(base.values)) < 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        s = series(1800, rng.normal(0, 1, 100))
        once = to_anomaly(s, 1820, 1860)
        twice = to_anomaly(once, 1820, 1860)
        np.testing.assert_allclose(once.values, twice.values, atol=1e-12)

    def test_degenerate_baseline(self):
        s = TimeSeries(1900, [1.0, np.nan, np.nan, 4.0])
        with pytest.raises(DegenerateBaseline):
            to_anomaly(s, 1901, 1902)
        with pytest.raises(DegenerateBaseline):
            to_anomaly(series(1900, [1, 2]), 1990, 1999)

    def test_mask_unchanged(self):
        s = TimeSeries(1900, [1.0, np.nan, 3.0, 5.0])
        out = to_anomaly(s, 1900, 1903)
        assert list(out.mask) == list(s.mask)


class TestDecadalAverage:
    def test_block_anchoring_1997_2006(self):
        assert block_start_for(2006) == 1997
        assert block_start_for(1997) == 1997
        assert block_start_for(1996) == 1987

    def test_block_mean_oracle(self):
        s = series(1997, np.arange(1.0, 11.0))
        out = decadal_average(s)
        assert out.value_at(2006) == pytest.approx(5.5)
        assert out.n_available == 1

    def test_constant_series(self):
        s = series(1950, np.full(60, 2.5))
        out = decadal_average(s)
        np.testing.assert_allclose(out.values[out.mask], 2.5)

    def test_final_block_is_1997_2006(self):
        s = series(1900, np.zeros(107))  # 1900-2006
        starts, _, _ = decade_blocks(s)
        assert starts[-1] == 1997
        assert starts[0] == 1907

    def test_low_count_block_masked(self):
        values = np.full(20, 1.0)
        values[10:16] = np.nan  # second block keeps only 4 entries
        s = TimeSeries(1987, values)
        out = decadal_average(s)
        assert out.value_at(1996) == pytest.approx(1.0)
        assert not out.mask[out.index_of(2006)]

    def test_no_complete_block(self):
        with pytest.raises(NoCompleteBlock):
            decadal_average(series(1998, np.zeros(9)))

    def test_decadal_constant_roundtrip(self):
        # block-constant series: block means reproduce the constants exactly
        consts = [1.5, -2.0, 0.25]
        values = np.concatenate([np.full(10, c) for c in consts])
        s = series(1987, values)
        _, means, _ = decade_blocks(s)
        np.testing.assert_array_equal(means, consts)


class TestSplitBands:
    def test_constant_series(self):
        s = series(1000, np.full(300, 4.2))
        bands = split_bands(s, 20.0)
        np.testing.assert_allclose(bands.low.values, 4.2, atol=1e-8)
        np.testing.assert_allclose(bands.high.values, 0.0, atol=1e-8)

    def test_long_period_sinusoid_passes_low(self):
        years = np.arange(500)
        x = np.sin(2 * np.pi * years / 100.0)
        bands = split_bands(series(1000, x), 20.0)
        # high-band amplitude measured numerically
        assert bands.high.values.std() < 0.05 * x.std()

    def test_complementarity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(400)
        bands = split_bands(series(0, x), 20.0)
        assert np.abs(bands.low.values + bands.high.values - x).max() < 1e-10

    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(min_value=0, max_value=2**31),
        st.integers(min_value=2, max_value=300),
        st.floats(min_value=2.5, max_value=100.0),
    )
    def test_complementarity_property(self, seed, n, period):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(n) * 10
        bands = split_bands(series(0, x), period)
        assert np.abs(bands.low.values + bands.high.values - x).max() < 1e-10

    def test_missing_values_rejected(self):
        s = TimeSeries(0, [1.0, np.nan, 3.0, 4.0])
        with pytest.raises(MissingDataError):
            split_bands(s, 20.0)

    def test_split_period_validation(self):
        with pytest.raises(ValueError):
            split_bands(series(0, np.zeros(10)), 2.0)


class TestLoess:
    def test_linear_reproduction(self):
        t = np.arange(150.0)
        s = series(1800, 0.01 * t - 0.5)
        for span in (0.05, 0.3, 1.0):
            out = loess_smooth(s, span)
            np.testing.assert_allclose(out.values, s.values, atol=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(
        st.floats(min_value=-2, max_value=2),
        st.floats(min_value=-10, max_value=10),
        st.floats(min_value=0.05, max_value=1.0),
    )
    def test_linear_reproduction_property(self, a, b, span):
        t = np.arange(80.0)
        s = series(0, a * t + b)
        out = loess_smooth(s, span)
        scale = max(np.abs(s.values).max(), 1.0)
        assert np.abs(out.values - s.values).max() < 1e-9 * scale

    def test_constant(self):
        out = loess_smooth(series(0, np.full(50, 3.0)), 0.2)
        np.testing.assert_allclose(out.values, 3.0, atol=1e-12)

    def test_span_005_suppresses_sub50yr_variance(self):
        rng = np.random.default_rng(1)
        n = 1000
        slow = np.sin(2 * np.pi * np.arange(n) / 200.0)
        fast = rng.standard_normal(n)
        s = series(1000, slow + fast)
        smoothed = loess_smooth(s, 0.05)
        # window of ceil(0.05 * 1000) = 50 years
        high_in = split_bands(s, 50.0).high.values
        high_out = split_bands(smoothed, 50.0).high.values
        assert np.var(high_out) < 0.1 * np.var(high_in)

    def test_mask_propagation(self):
        values = np.arange(60.0)
        values[10] = np.nan
        out = loess_smooth(TimeSeries(0, values), 0.2)
        assert not out.mask[10]
        assert out.mask[0] and out.mask[59]

    def test_too_few_points_masked(self):
        out = loess_smooth(series(0, [1.0, 2.0, 3.0]), 1.0)
        assert not out.mask.any()

    def test_span_validation(self):
        with pytest.raises(ValueError):
            loess_smooth(series(0, np.zeros(10)), 0.0)


class TestInterpolate:
    def test_interior_gap_filled(self):
        s = TimeSeries(0, [1.0, np.nan, 3.0])
        out = interpolate_linear(s)
        np.testing.assert_allclose(out.values, [1.0, 2.0, 3.0])

    def test_edges_left_missing(self):
        s = TimeSeries(0, [np.nan, 1.0, np.nan, 3.0, np.nan])
        out = interpolate_linear(s)
        assert not out.mask[0] and not out.mask[4]
        assert out.value_at(2) == pytest.approx(2.0)


class TestSeriesCsv:
    def test_roundtrip(self, tmp_path):
        s = TimeSeries(1990, [1.5, np.nan, -0.25])
        path = tmp_path / "s.csv"
        write_series_csv(s, path)
        back = read_series_csv(path)
        assert back.start_year == 1990
        np.testing.assert_array_equal(back.mask, s.mask)
        np.testing.assert_allclose(back.values[back.mask], s.values[s.mask])

    def test_year_gap_becomes_missing(self):
        back = read_series_csv(io.StringIO("year,value\n2000,1.0\n2002,2.0\n"))
        assert len(back) == 3 and not back.mask[1]

    def test_non_ascending_rejected(self):
        with pytest.raises(FormatError):
            read_series_csv(io.StringIO("year,value\n2000,1.0\n2000,2.0\n"))

    def test_bad_header(self):
        with pytest.raises(FormatError):
            read_series_csv(io.StringIO("time,value\n2000,1.0\n"))

    def test_empty_file(self):
        with pytest.raises(FormatError):
            read_series_csv(io.StringIO(""))
