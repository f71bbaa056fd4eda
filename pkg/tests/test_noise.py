import numpy as np
import pytest
from scipy import integrate

from resmooth.lti import freq_response
from resmooth.noise import (
    NoiseSpec,
    SampledSeries,
    forcing_series,
    lorentzian_psd,
    shaping_filter,
    welch_psd,
    white_noise,
    write_psd_csv,
    write_series_csv,
)

from conftest import F_REF, GAMMA_REF, N_REF, OMEGA_M, Q_REF, make_noise


class TestNoiseSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec(Q=-1.0, R=1.0, gamma=1.0, omega_i=0.0)
        with pytest.raises(ValueError):
            NoiseSpec(Q=1.0, R=1.0, gamma=0.0, omega_i=0.0)
        with pytest.raises(ValueError):
            NoiseSpec(Q=1.0, R=1.0, gamma=1.0, omega_i=-1.0)

    def test_total_power_closed_form(self):
        spec = make_noise()
        # each Lorentzian integrates to 1/(2 gamma) against d(omega)/2pi
        assert spec.total_forcing_power() == pytest.approx(2.7757e-5, rel=1e-4)


class TestLorentzianPsd:
    def test_reference_peak_value(self):
        spec = make_noise()
        expected = 0.5 * Q_REF * (
            1.0 / GAMMA_REF**2 + 1.0 / (4.0 * OMEGA_M**2 + GAMMA_REF**2)
        )
        assert lorentzian_psd(spec, OMEGA_M) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(2.083e-8, rel=1e-3)

    def test_baseband_limit(self):
        spec = make_noise(omega_i=0.0)
        w = np.linspace(-5e4, 5e4, 101)
        assert np.allclose(
            lorentzian_psd(spec, w), Q_REF / (w**2 + GAMMA_REF**2), rtol=1e-12
        )

    def test_even_and_positive(self):
        spec = make_noise()
        rng = np.random.default_rng(5)
        w = rng.uniform(-1e6, 1e6, 200)
        vals = lorentzian_psd(spec, w)
        assert np.all(vals > 0)
        assert np.allclose(lorentzian_psd(spec, -w), vals, rtol=1e-12)

    def test_quadrature_matches_total_power(self):
        spec = make_noise()
        f = lambda w: lorentzian_psd(spec, w)
        lo = spec.omega_i - 5.0 * spec.gamma
        hi = spec.omega_i + 5.0 * spec.gamma
        cut = 1e9
        val = (
            integrate.quad(f, 0, lo, limit=300)[0]
            + integrate.quad(f, lo, hi, limit=300)[0]
            + integrate.quad(f, hi, cut, limit=300)[0]
        )
        # tail beyond the cut is below Q/cut, i.e. < 1e-10 of the total
        assert val / np.pi == pytest.approx(spec.total_forcing_power(), rel=1e-6)


class TestShapingFilter:
    def test_reproduces_forcing_psd(self):
        spec = make_noise()
        g = shaping_filter(spec)
        w = np.logspace(0, 7, 1000)
        got = np.abs(freq_response(g, w)) ** 2 * spec.Q
        assert np.allclose(got, lorentzian_psd(spec, w), rtol=1e-10)

    def test_closed_form_coefficients(self):
        spec = make_noise()
        g = shaping_filter(spec)
        wn = spec.omega_n
        assert g.numerator_coeffs == pytest.approx([1.0, wn], rel=1e-10)
        assert g.denominator_coeffs == pytest.approx(
            [1.0, 2.0 * spec.gamma, wn**2], rel=1e-10
        )


class TestWhiteNoise:
    def test_zero_intensity(self):
        s = white_noise(0.0, 256, F_REF, seed=1)
        assert np.all(s.samples == 0.0)

    def test_variance_within_five_standard_errors(self):
        q, n = 3.2e-9, 2**15
        s = white_noise(q, n, F_REF, seed=42)
        target = q * F_REF
        se = target * np.sqrt(2.0 / (n - 1))
        assert abs(np.var(s.samples) - target) < 5.0 * se

    def test_seed_determinism(self):
        a = white_noise(1e-9, 1024, F_REF, seed=7)
        b = white_noise(1e-9, 1024, F_REF, seed=7)
        assert np.array_equal(a.samples, b.samples)
        c = white_noise(1e-9, 1024, F_REF, seed=8)
        assert not np.array_equal(a.samples, c.samples)

    def test_validation(self):
        with pytest.raises(ValueError):
            white_noise(-1.0, 10, F_REF, seed=0)
        with pytest.raises(ValueError):
            white_noise(1.0, 0, F_REF, seed=0)


class TestForcingSeries:
    def test_seed_determinism_both_methods(self):
        spec = make_noise()
        for method in ("shaping-filter", "ou-carrier"):
            a = forcing_series(spec, 2048, F_REF, 11, method=method)
            b = forcing_series(spec, 2048, F_REF, 11, method=method)
            assert np.array_equal(a.samples, b.samples)

    def test_q_scaling_is_exact_per_seed(self):
        spec = make_noise()
        doubled = make_noise(Q=2.0 * Q_REF)
        a = forcing_series(spec, 2048, F_REF, 3)
        b = forcing_series(doubled, 2048, F_REF, 3)
        assert np.allclose(b.samples, np.sqrt(2.0) * a.samples, rtol=1e-12)

    def test_total_power(self):
        spec = make_noise()
        variances = [
            np.var(forcing_series(spec, N_REF, F_REF, 100 + k).samples)
            for k in range(12)
        ]
        mean = np.mean(variances)
        se = np.std(variances, ddof=1) / np.sqrt(len(variances))
        assert abs(mean - spec.total_forcing_power()) < 5.0 * se

    def test_peak_beyond_nyquist_rejected(self):
        spec = make_noise()
        with pytest.raises(ValueError, match="Nyquist"):
            forcing_series(spec, 1024, 10e3, 0)

    def test_zero_q_gives_zeros(self):
        spec = make_noise(Q=0.0)
        s = forcing_series(spec, 512, F_REF, 5)
        assert np.all(s.samples == 0.0)

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="method"):
            forcing_series(make_noise(), 512, F_REF, 0, method="bogus")

    def test_welch_psd_matches_model_within_3db(self):
        spec = make_noise()
        acc = None
        for seed in range(21):
            s = forcing_series(spec, N_REF, F_REF, 500 + seed)
            freqs, psd = welch_psd(s, segment_len=4096)
            acc = psd if acc is None else acc + psd
        acc /= 21.0
        model = 2.0 * lorentzian_psd(spec, 2.0 * np.pi * freqs)  # one-sided
        lo = (spec.omega_i - 3.0 * spec.gamma) / (2.0 * np.pi)
        hi = (spec.omega_i + 3.0 * spec.gamma) / (2.0 * np.pi)
        band = (freqs >= lo) & (freqs <= hi)
        ratio = acc[band] / model[band]
        assert np.all(ratio < 10 ** 0.3)
        assert np.all(ratio > 10 ** -0.3)

    def test_ou_carrier_peak_power(self):
        spec = make_noise()
        acc = None
        for seed in range(8):
            s = forcing_series(spec, N_REF, F_REF, 700 + seed, method="ou-carrier")
            freqs, psd = welch_psd(s, segment_len=4096)
            acc = psd if acc is None else acc + psd
        acc /= 8.0
        model = 2.0 * lorentzian_psd(spec, 2.0 * np.pi * freqs)
        peak_bin = int(np.argmin(np.abs(freqs - spec.omega_i / (2.0 * np.pi))))
        ratio = acc[peak_bin] / model[peak_bin]
        assert 0.5 < ratio < 2.0


class TestWelchPsd:
    def test_white_noise_level(self):
        r = 4.4e-10
        s = white_noise(r, 2**16, F_REF, seed=9)
        freqs, psd = welch_psd(s, segment_len=1024)
        # one-sided density of two-sided intensity r is 2r
        assert np.mean(psd[1:-1]) == pytest.approx(2.0 * r, rel=0.05)

    def test_parseval_consistency(self):
        s = white_noise(1e-9, 2**15, F_REF, seed=12)
        freqs, psd = welch_psd(s, segment_len=2048)
        df = freqs[1] - freqs[0]
        assert np.sum(psd) * df == pytest.approx(np.mean(s.samples**2), rel=0.03)

    def test_sinusoid_integrated_power(self):
        amp, f0 = 0.7, 10e3
        n = 2**15
        t = np.arange(n) / F_REF
        s = SampledSeries(amp * np.sin(2.0 * np.pi * f0 * t), F_REF)
        freqs, psd = welch_psd(s, segment_len=4096)
        df = freqs[1] - freqs[0]
        assert np.sum(psd) * df == pytest.approx(amp**2 / 2.0, rel=0.03)

    def test_forcing_peak_location(self):
        spec = make_noise()
        s = forcing_series(spec, N_REF, F_REF, 77)
        freqs, psd = welch_psd(s, segment_len=4096)
        assert freqs[int(np.argmax(psd))] == pytest.approx(7930.0, rel=0.02)

    def test_degenerate_segmentation(self):
        s = white_noise(1e-9, 128, F_REF, seed=0)
        with pytest.raises(ValueError):
            welch_psd(s, segment_len=256)
        with pytest.raises(ValueError):
            welch_psd(s, segment_len=64, overlap_fraction=0.95)


class TestCsvExports:
    def test_series_roundtrip(self, tmp_path):
        s = white_noise(1e-9, 64, F_REF, seed=2)
        path = tmp_path / "series.csv"
        write_series_csv(s, path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (64, 2)
        assert np.allclose(data[:, 1], s.samples, rtol=1e-10)
        assert np.allclose(data[:, 0], s.times(), rtol=1e-10)

    def test_psd_roundtrip(self, tmp_path):
        s = white_noise(1e-9, 2048, F_REF, seed=2)
        freqs, psd = welch_psd(s, segment_len=256)
        path = tmp_path / "psd.csv"
        write_psd_csv(freqs, psd, path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.allclose(data[:, 0], freqs, rtol=1e-10)
        assert np.allclose(data[:, 1], psd, rtol=1e-10)
