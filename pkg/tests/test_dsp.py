"""Filterbank design, causal filtering, and temporal windows."""

import numpy as np
import pytest
from scipy.signal import sosfreqz

from mibci import dsp
from mibci.errors import NumericError
from tests.oracles import naive_sosfilt

FS = 250.0
INV_SQRT2 = 1.0 / np.sqrt(2.0)


class TestSpecs:
    def test_band_validation(self):
        dsp.BandSpec(4.0, 8.0)
        for lo, hi in ((0.0, 4.0), (-1.0, 4.0), (8.0, 8.0), (9.0, 8.0)):
            with pytest.raises(ValueError, match="invalid band edges"):
                dsp.BandSpec(lo, hi)

    def test_window_validation(self):
        dsp.WindowSpec(0.0, 1.0)
        for t0, t1 in ((-0.5, 1.0), (1.0, 1.0), (2.0, 1.0)):
            with pytest.raises(ValueError, match="invalid window"):
                dsp.WindowSpec(t0, t1)

    def test_band_width_and_window_length(self):
        assert dsp.BandSpec(4.0, 12.0).width == 8.0
        assert dsp.WindowSpec(1.0, 4.5).length == 3.5

    def test_cascade_rejects_unstable_poles(self):
        # pole at z = 2 through a2 = -2, a1 = 0 is outside the unit circle
        bad = np.asarray([[1.0, 0.0, 0.0, 1.0, 0.0, -4.0]])
        with pytest.raises(NumericError, match="unstable filter"):
            dsp.BiquadCascade(sos=bad)

    def test_cascade_shape_check(self):
        with pytest.raises(ValueError, match="shape"):
            dsp.BiquadCascade(sos=np.zeros((2, 5)))


class TestBandFamilies:
    def test_b43_counts_and_widths(self):
        bands = dsp.default_bands("b43")
        assert len(bands) == 43
        widths = [b.width for b in bands]
        assert widths.count(2.0) == 18
        assert widths.count(4.0) == 17
        assert widths.count(8.0) == 8

    def test_b43_tiling(self):
        bands = dsp.default_bands("b43")
        assert bands[0] == dsp.BandSpec(4.0, 6.0)
        assert bands[17] == dsp.BandSpec(38.0, 40.0)
        assert bands[18] == dsp.BandSpec(4.0, 8.0)
        assert bands[34] == dsp.BandSpec(36.0, 40.0)
        assert bands[35] == dsp.BandSpec(4.0, 12.0)
        assert bands[42] == dsp.BandSpec(32.0, 40.0)

    def test_b80_extends_b43(self):
        b43 = dsp.default_bands("b43")
        b80 = dsp.default_bands("b80")
        assert len(b80) == 80
        assert b80[:43] == b43
        one_hz = b80[43:79]
        assert all(b.width == 1.0 for b in one_hz)
        assert one_hz[0] == dsp.BandSpec(4.0, 5.0)
        assert one_hz[-1] == dsp.BandSpec(39.0, 40.0)
        assert b80[79] == dsp.BandSpec(4.0, 40.0)

    def test_all_edges_inside_analysis_range(self):
        lo, hi = dsp.ANALYSIS_BAND
        for b in dsp.default_bands("b80"):
            assert lo <= b.f_lo < b.f_hi <= hi

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="unknown band scheme"):
            dsp.default_bands("b7")


class TestWindowFamilies:
    def test_counts(self):
        assert len(dsp.default_windows("t11")) == 11
        assert len(dsp.default_windows("t1")) == 1
        assert len(dsp.default_windows("t1t2t5")) == 3

    def test_t11_structure(self):
        wins = dsp.default_windows("t11")
        assert wins[0] == dsp.WindowSpec(1.0, 4.5)
        halves = wins[1:4]
        assert [w.length for w in halves] == [1.75] * 3
        assert [w.t_start for w in halves] == [1.0, 1.875, 2.75]
        quarters = wins[4:]
        assert [round(w.length, 6) for w in quarters] == [0.875] * 7
        assert quarters[0].t_start == 1.0
        assert quarters[-1].t_end == pytest.approx(4.5)

    def test_t1t2t5_prefix_of_each_level(self):
        t11 = dsp.default_windows("t11")
        assert dsp.default_windows("t1t2t5") == [t11[0], t11[1], t11[4]]

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="unknown window scheme"):
            dsp.default_windows("t3")


class TestSampleRanges:
    def test_full_window_range(self):
        assert dsp.window_sample_range(dsp.WindowSpec(1.0, 4.5), FS) == (250, 1125)

    def test_rounding_half_away_from_zero(self):
        # 1.875 s * 250 Hz = 468.75 -> 469, 3.625 s * 250 Hz = 906.25 -> 906
        assert dsp.window_sample_range(dsp.WindowSpec(1.875, 3.625), FS) == (469, 906)
        # equal durations can differ by one sample across grid positions
        a = dsp.window_sample_range(dsp.WindowSpec(1.0, 1.875), FS)
        b = dsp.window_sample_range(dsp.WindowSpec(1.875, 2.75), FS)
        assert a == (250, 469)
        assert b == (469, 688)
        assert (a[1] - a[0]) == 219
        assert (b[1] - b[0]) == 219

    def test_slice_window_is_a_view(self):
        x = np.arange(2 * 2 * 1200, dtype=float).reshape(2, 2, 1200)
        cut = dsp.slice_window(x, dsp.WindowSpec(1.0, 4.5), FS)
        assert cut.shape == (2, 2, 875)
        assert np.shares_memory(cut, x)

    def test_slice_window_outside(self):
        x = np.zeros((2, 500))
        with pytest.raises(ValueError, match="outside the trial"):
            dsp.slice_window(x, dsp.WindowSpec(1.0, 4.5), FS)


class TestFilterDesign:
    def test_edge_gains_are_half_power(self):
        for scheme in ("b43", "b80"):
            for band in dsp.default_bands(scheme):
                cascade = dsp.design_butter_bandpass(band, FS)
                gains = np.abs(dsp.freq_response(
                    cascade, [band.f_lo, band.f_hi], FS))
                assert np.max(np.abs(gains - INV_SQRT2)) < 1e-12, band

    def test_passband_peak_near_unity(self):
        for band in (dsp.BandSpec(8.0, 12.0), dsp.BandSpec(4.0, 40.0)):
            cascade = dsp.design_butter_bandpass(band, FS)
            freqs = np.linspace(band.f_lo, band.f_hi, 201)
            gains = np.abs(dsp.freq_response(cascade, freqs, FS))
            assert np.max(gains) == pytest.approx(1.0, abs=1e-6)

    def test_stopband_attenuates(self):
        cascade = dsp.design_butter_bandpass(dsp.BandSpec(8.0, 12.0), FS)
        gains = np.abs(dsp.freq_response(cascade, [1.0, 50.0, 100.0], FS))
        assert np.all(gains < 0.1)

    def test_all_designs_stable(self):
        for band in dsp.default_bands("b80"):
            cascade = dsp.design_butter_bandpass(band, FS)
            assert np.max(cascade.pole_moduli()) < 1.0

    def test_near_nyquist_is_rejected(self):
        with pytest.raises(ValueError, match="too close to Nyquist"):
            dsp.design_butter_bandpass(dsp.BandSpec(4.0, 120.0), FS)

    def test_bad_fs(self):
        with pytest.raises(ValueError, match="fs must be positive"):
            dsp.design_butter_bandpass(dsp.BandSpec(4.0, 8.0), 0.0)

    def test_freq_response_matches_sosfreqz(self):
        cascade = dsp.design_butter_bandpass(dsp.BandSpec(6.0, 14.0), FS)
        freqs = np.linspace(0.5, 100.0, 57)
        _, h_ref = sosfreqz(np.array(cascade.sos), worN=freqs, fs=FS)
        h = dsp.freq_response(cascade, freqs, FS)
        assert np.allclose(h, h_ref, rtol=1e-10, atol=1e-12)


class TestFilterForward:
    def test_matches_naive_recurrence(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=400)
        for band in (dsp.BandSpec(4.0, 6.0), dsp.BandSpec(8.0, 30.0),
                     dsp.BandSpec(4.0, 40.0)):
            cascade = dsp.design_butter_bandpass(band, FS)
            got = dsp.filter_forward(cascade, x)
            ref = naive_sosfilt(cascade.sos, x)
            assert np.max(np.abs(got - ref)) < 1e-9

    def test_batched_equals_per_trial(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(3, 4, 200))
        cascade = dsp.design_butter_bandpass(dsp.BandSpec(8.0, 12.0), FS)
        batch = dsp.filter_forward(cascade, x)
        assert batch.shape == x.shape
        assert batch.dtype == np.float64
        for t in range(3):
            for c in range(4):
                row = dsp.filter_forward(cascade, x[t, c])
                assert np.array_equal(batch[t, c], row)

    def test_causality(self):
        # an impulse at sample k cannot influence earlier samples
        x = np.zeros(300)
        x[150] = 1.0
        cascade = dsp.design_butter_bandpass(dsp.BandSpec(8.0, 12.0), FS)
        y = dsp.filter_forward(cascade, x)
        assert np.all(y[:150] == 0.0)
        assert np.any(y[150:] != 0.0)

    def test_linearity(self):
        rng = np.random.default_rng(13)
        a = rng.normal(size=256)
        b = rng.normal(size=256)
        cascade = dsp.design_butter_bandpass(dsp.BandSpec(6.0, 10.0), FS)
        lhs = dsp.filter_forward(cascade, 2.0 * a - 3.0 * b)
        rhs = 2.0 * dsp.filter_forward(cascade, a) - 3.0 * dsp.filter_forward(cascade, b)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_tone_gain_tracks_frequency_response(self):
        cascade = dsp.design_butter_bandpass(dsp.BandSpec(8.0, 12.0), FS)
        t = np.arange(5000) / FS
        for f in (10.0, 20.0):
            y = dsp.filter_forward(cascade, np.sin(2 * np.pi * f * t))
            tail = y[2500:]
            expected = np.abs(dsp.freq_response(cascade, [f], FS))[0]
            measured = np.sqrt(2.0 * np.mean(tail**2))
            assert measured == pytest.approx(expected, rel=5e-3)

    def test_rejects_non_finite(self):
        x = np.zeros(64)
        x[10] = np.nan
        cascade = dsp.design_butter_bandpass(dsp.BandSpec(8.0, 12.0), FS)
        with pytest.raises(ValueError, match="non-finite"):
            dsp.filter_forward(cascade, x)
