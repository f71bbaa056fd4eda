import numpy as np
import pytest

from resmooth.errors import EvaluationError, NotAPsdError, UnsupportedDelayError
from resmooth.lti import (
    RationalTransferFunction,
    StateSpaceModel,
    freq_response,
    is_stable,
    pade_delay,
    spectral_factorize,
    to_state_space,
)

from conftest import BETA, C1, C2, OMEGA_M, TAU, make_plant


class TestRationalTransferFunction:
    def test_validation(self):
        with pytest.raises(ValueError):
            RationalTransferFunction([1.0, 0.0, 0.0], [1.0, 1.0])  # improper
        with pytest.raises(ValueError):
            RationalTransferFunction([1.0], [0.0])  # zero denominator
        with pytest.raises(ValueError):
            RationalTransferFunction([1.0], [1.0], -1e-6)

    def test_leading_zero_trim(self):
        sys = RationalTransferFunction([0.0, 2.0], [0.0, 1.0, 3.0])
        assert sys.numerator_coeffs.tolist() == [2.0]
        assert sys.denominator_coeffs.tolist() == [1.0, 3.0]

    def test_multiplication_adds_delays(self):
        a = RationalTransferFunction([1.0], [1.0, 1.0], 1e-3)
        b = RationalTransferFunction([2.0], [1.0, 2.0], 2e-3)
        c = a * b
        assert c.delay_seconds == pytest.approx(3e-3)
        w = 17.0
        assert freq_response(c, w) == pytest.approx(
            freq_response(a, w) * freq_response(b, w)
        )


class TestFreqResponse:
    def test_unity_any_frequency(self):
        sys = RationalTransferFunction([1.0], [1.0])
        for w in (0.0, 1.0, -3.7e5):
            assert freq_response(sys, w) == 1.0 + 0.0j

    def test_reference_plant_dc(self):
        # at s = 0 the plant reduces to c2*omega_m/omega_m^2 = c2/omega_m
        sys = make_plant(delay=0.0)
        expected = C2 / OMEGA_M
        assert freq_response(sys, 0.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(3.9337e-3, rel=1e-4)

    def test_reference_plant_at_resonance(self):
        # at s = i*omega_m the terms s^2 + omega_m^2 cancel, leaving
        # (c1*i*omega_m + c2*omega_m)/(i*beta*omega_m) = (c1 - i*c2)/beta
        sys = make_plant(delay=0.0)
        expected = (C1 - 1j * C2) / BETA
        assert freq_response(sys, OMEGA_M) == pytest.approx(expected, rel=1e-12)
        assert expected.real == pytest.approx(0.052526, rel=1e-4)
        assert expected.imag == pytest.approx(-0.078589, rel=1e-4)

    def test_delay_changes_phase_not_magnitude(self):
        with_delay = make_plant()
        without = make_plant(delay=0.0)
        w = np.logspace(1, 5, 40)
        a = freq_response(with_delay, w)
        b = freq_response(without, w)
        assert np.allclose(np.abs(a), np.abs(b), rtol=1e-12)
        assert np.allclose(a, b * np.exp(-1j * w * TAU), rtol=1e-12)

    def test_conjugate_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            den = np.poly(-rng.uniform(0.1, 100.0, 3))
            num = rng.standard_normal(3)
            sys = RationalTransferFunction(num, den, rng.uniform(0, 1e-3))
            w = rng.uniform(0.1, 1e4)
            assert freq_response(sys, -w) == pytest.approx(
                np.conj(freq_response(sys, w)), rel=1e-12
            )

    def test_pole_on_axis_raises(self):
        w0 = 2.0 * np.pi * 100.0
        sys = RationalTransferFunction([1.0], [1.0, 0.0, w0**2])
        with pytest.raises(EvaluationError, match="omega"):
            freq_response(sys, w0)
        # off the pole the evaluation is fine
        assert np.isfinite(freq_response(sys, 1.5 * w0).real)


class TestToStateSpace:
    def test_first_order(self):
        ss = to_state_space(RationalTransferFunction([1.0], [1.0, 1.0]))
        assert ss.A.tolist() == [[-1.0]]
        assert ss.B.tolist() == [[1.0]]
        assert ss.C.tolist() == [[1.0]]
        assert ss.D.tolist() == [[0.0]]

    def test_constant_gain(self):
        ss = to_state_space(RationalTransferFunction([4.5], [1.0]))
        assert ss.n_states == 0
        assert ss.D.tolist() == [[4.5]]

    def test_delay_rejected(self):
        with pytest.raises(UnsupportedDelayError, match="pade_delay"):
            to_state_space(make_plant())

    @pytest.mark.parametrize("seed", range(5))
    def test_realization_roundtrip_random(self, seed):
        rng = np.random.default_rng(seed)
        order = rng.integers(1, 5)
        den = np.poly(-rng.uniform(0.5, 1e4, order))
        num = rng.standard_normal(rng.integers(1, order + 2))
        sys = RationalTransferFunction(num, den)
        ss = to_state_space(sys)
        w = np.logspace(0, 6, 100)
        direct = freq_response(sys, w)
        realized = ss.frequency_response(w)
        # relative to the local value, floored well below the response peak
        # so roundoff at deep nulls is not amplified
        floor = 1e-6 * np.abs(direct).max()
        err = np.abs(realized - direct) / np.maximum(np.abs(direct), floor)
        assert err.max() < 1e-9

    def test_realization_roundtrip_reference_plant(self):
        sys = make_plant(delay=0.0)
        ss = to_state_space(sys)
        assert ss.n_states == 2
        w = np.logspace(0, 6, 100)
        assert np.allclose(ss.frequency_response(w), freq_response(sys, w), rtol=1e-9)


class TestPadeDelay:
    def test_zero_delay_is_unity(self):
        sys = pade_delay(0.0, 3)
        assert sys.numerator_coeffs.tolist() == [1.0]
        assert sys.denominator_coeffs.tolist() == [1.0]

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            pade_delay(-1e-6, 2)
        with pytest.raises(ValueError):
            pade_delay(1e-6, 0)
        with pytest.raises(ValueError):
            pade_delay(1e-6, 11)

    @pytest.mark.parametrize("order", [1, 2, 4, 7, 10])
    def test_all_pass(self, order):
        sys = pade_delay(TAU, order)
        w = np.logspace(2, 6, 200)
        assert np.allclose(np.abs(freq_response(sys, w)), 1.0, atol=1e-9)

    def test_reference_phase(self):
        # order 2 at the plant resonance: omega*tau = 0.9218 rad
        sys = pade_delay(TAU, 2)
        target = -OMEGA_M * TAU
        assert target == pytest.approx(-0.92177, rel=1e-4)
        phase = np.angle(freq_response(sys, OMEGA_M))
        assert abs(phase - target) < 0.01 * abs(target)

    @pytest.mark.parametrize("order", range(2, 11))
    def test_phase_accuracy_within_half_order(self, order):
        sys = pade_delay(1.0, order)
        # track the phase by continuity from DC so it can exceed -pi
        ws = np.linspace(1e-3, order / 2.0, 400)
        phase = np.unwrap(np.angle(freq_response(sys, ws)))
        err = np.abs(phase + ws)
        assert np.all(err < 0.01 * ws)

    def test_order_one_weaker_at_edge(self):
        # the [1/1] approximant misses ~2% at omega*tau = 0.5 but holds the
        # 1% contract for omega*tau up to ~0.3
        sys = pade_delay(1.0, 1)
        ph = np.angle(freq_response(sys, 0.3))
        assert abs(ph + 0.3) < 0.01 * 0.3
        ph_edge = np.angle(freq_response(sys, 0.5))
        assert abs(ph_edge + 0.5) > 0.01 * 0.5


def _mag_squared_omega_poly(coeffs):
    """|P(i*omega)|^2 as a polynomial in omega for real P (test oracle)."""
    coeffs = np.asarray(coeffs, dtype=float)
    deg = coeffs.size - 1
    flipped = coeffs * np.array([(-1.0) ** (deg - j) for j in range(coeffs.size)])
    prod = np.polymul(coeffs, flipped)  # P(s) P(-s)
    pdeg = prod.size - 1
    out = prod * np.array([(1j ** (pdeg - j)).real for j in range(prod.size)])
    return out


class TestSpectralFactorize:
    def test_first_order_ou(self):
        q, lam = 2.5, 7.0
        g = spectral_factorize([q], [1.0, 0.0, lam**2])
        assert g.numerator_coeffs == pytest.approx([np.sqrt(q)], rel=1e-12)
        assert g.denominator_coeffs == pytest.approx([1.0, lam], rel=1e-12)

    def test_constant_psd(self):
        g = spectral_factorize([4.0], [1.0])
        assert g.numerator_coeffs.tolist() == [2.0]
        assert g.denominator_coeffs.tolist() == [1.0]

    def test_forcing_psd_closed_form(self):
        # S/Q = (w^2 + W^2) / ((w^2 - W^2)^2 + 4 g^2 w^2), W^2 = g^2 + wi^2
        # factors to (s + W)/(s^2 + 2 g s + W^2)
        gam, wi = 1333.0, OMEGA_M
        W2 = gam**2 + wi**2
        g = spectral_factorize(
            [1.0, 0.0, W2], [1.0, 0.0, 4.0 * gam**2 - 2.0 * W2, 0.0, W2**2]
        )
        assert g.numerator_coeffs == pytest.approx([1.0, np.sqrt(W2)], rel=1e-10)
        assert g.denominator_coeffs == pytest.approx([1.0, 2.0 * gam, W2], rel=1e-10)

    def test_identity_and_minimum_phase_random(self):
        rng = np.random.default_rng(123)
        for _ in range(10):
            num_s = np.atleast_1d(np.poly(-rng.uniform(0.5, 50.0, rng.integers(0, 3))))
            den_s = np.atleast_1d(np.poly(-rng.uniform(0.5, 50.0, rng.integers(1, 4))))
            if num_s.size >= den_s.size:
                continue
            psd_num = _mag_squared_omega_poly(num_s)
            psd_den = _mag_squared_omega_poly(den_s)
            g = spectral_factorize(psd_num, psd_den)
            w = np.logspace(-2, 4, 500)
            target = np.polyval(psd_num, w) / np.polyval(psd_den, w)
            got = np.abs(freq_response(g, w)) ** 2
            assert np.allclose(got, target, rtol=1e-10)
            assert is_stable(to_state_space(g))
            zeros = np.roots(g.numerator_coeffs)
            assert np.all(zeros.real <= 1e-9)

    def test_repeated_root_degenerate_lorentzian(self):
        # omega_i = 0 collapses the pair to a plain Lorentzian; the doubled
        # denominator root must cancel against the numerator root
        gam = 3.0
        W2 = gam**2
        g = spectral_factorize(
            [1.0, 0.0, W2], [1.0, 0.0, 4.0 * gam**2 - 2.0 * W2, 0.0, W2**2]
        )
        assert g.denominator_coeffs.size == 2  # reduced to 1/(s + gam)
        w = np.logspace(-2, 3, 400)
        assert np.allclose(
            np.abs(freq_response(g, w)) ** 2, 1.0 / (w**2 + gam**2), rtol=1e-10
        )

    def test_negative_psd_rejected(self):
        with pytest.raises(NotAPsdError):
            spectral_factorize([-1.0], [1.0, 0.0, 1.0])
        with pytest.raises(NotAPsdError):
            spectral_factorize([1.0, 0.0, -4.0], [1.0, 0.0, 0.0, 0.0, 1.0])

    def test_odd_polynomial_rejected(self):
        with pytest.raises(ValueError, match="even"):
            spectral_factorize([1.0, 1.0], [1.0, 0.0, 1.0])


class TestIsStable:
    def test_examples(self):
        assert is_stable(StateSpaceModel([[-1.0]], [[1.0]], [[1.0]], [[0.0]]))
        assert not is_stable(StateSpaceModel([[1.0]], [[1.0]], [[1.0]], [[0.0]]))

    def test_reference_plant(self):
        ss = to_state_space(make_plant(delay=0.0))
        assert is_stable(ss)
        # companion eigenvalues sit at -beta/2 +- i*sqrt(omega_m^2 - beta^2/4)
        eigs = np.linalg.eigvals(ss.A)
        assert np.allclose(eigs.real, -BETA / 2.0, rtol=1e-9)

    def test_margin(self):
        model = StateSpaceModel([[-1e-12]], [[1.0]], [[1.0]], [[0.0]])
        assert not is_stable(model)  # inside the default margin
        assert is_stable(model, margin=1e-6)

    def test_static_system(self):
        assert is_stable(to_state_space(RationalTransferFunction([2.0], [1.0])))
