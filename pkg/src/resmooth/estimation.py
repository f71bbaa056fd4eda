"""Optimal smoothing and the filtered baseline.

The frequency-domain optimal (non-causal Wiener) smoother for a signal seen
through a known plant in additive white noise, the error-spectrum and
mean-square-error integrals it induces, the steady-state Kalman-Bucy
filtered baseline, and the smoothing improvement factor that compares the
two.

The smoother and its MSE live entirely in the frequency domain, so a pure
plant delay is handled exactly; the filtered baseline is finite-dimensional
and uses the delay-free rational plant by default (optionally a Pade
augmentation).
"""

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, linalg

from .errors import (
    DegenerateBandError,
    ModelError,
    QuadratureError,
    RiccatiError,
)
from .lti import (
    RationalTransferFunction,
    StateSpaceModel,
    freq_response,
    pade_delay,
    to_state_space,
)
from .noise import SampledSeries, lorentzian_psd, shaping_filter

__all__ = [
    "SmootherDesign",
    "MseEstimate",
    "MseReport",
    "FilterBaseline",
    "design_smoother",
    "error_psd",
    "smoothed_mse",
    "apply_smoother",
    "filtered_mse",
    "improvement_factor",
    "solve_care",
    "solve_filter_care",
]


def _as_psd_callable(psd):
    if callable(psd):
        return psd
    value = float(psd)
    return lambda omega: np.full_like(np.asarray(omega, dtype=float), value)


class MseEstimate(NamedTuple):
    """Quadrature value with its absolute error estimate."""

    value: float
    error: float


@dataclass(frozen=True)
class MseReport:
    """Smoothed and filtered mean square errors and their ratio.

    band_limit_hz is None for an untruncated integral.  Units are V^2 for
    a voltage target and m^2 for a position target.
    """

    epsilon_smoothed: float
    epsilon_filtered: float
    sigma: float
    band_limit_hz: float | None
    quadrature_error_estimate: float

    def __post_init__(self):
        if self.epsilon_smoothed < 0 or self.epsilon_filtered < 0:
            raise ValueError("mean square errors must be >= 0")


@dataclass(frozen=True, eq=False)
class FilterBaseline:
    """Steady-state Kalman-Bucy filter for the shaping-filter + plant cascade."""

    augmented_model: StateSpaceModel
    kalman_gain: np.ndarray
    steady_state_covariance: np.ndarray
    riccati_residual: float


@dataclass(frozen=True, eq=False)
class SmootherDesign:
    """Frequency response of the MSE-optimal non-causal estimator.

    evaluate() is the closed-form evaluator
        h_s(omega) = conj(h) S_sig / (|h|^2 S_sig + S_noise)
    scaled by the volt-to-metre constant when target="position".  Conjugate
    symmetry holds by construction, and |h_s*h| <= 1 on the signal path.
    """

    plant: RationalTransferFunction
    signal_psd: Callable
    noise_psd: Callable
    target: str = "voltage"
    a_pzt: float | None = None

    def __post_init__(self):
        if self.target not in ("voltage", "position"):
            raise ValueError(f"target must be 'voltage' or 'position', got {self.target!r}")
        if self.target == "position" and not self.a_pzt:
            raise ValueError("position target requires a nonzero a_pzt [m/V]")

    @property
    def output_scale(self):
        return self.a_pzt if self.target == "position" else 1.0

    def evaluate(self, omega):
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        H = np.atleast_1d(freq_response(self.plant, om))
        sig = np.asarray(self.signal_psd(om), dtype=float)
        noi = np.asarray(self.noise_psd(om), dtype=float)
        den = np.abs(H) ** 2 * sig + noi
        if np.any(den <= 0.0):
            wbad = om[int(np.argmin(den))]
            raise DegenerateBandError(
                f"signal and noise spectra both vanish at omega = {wbad:.6g} rad/s"
            )
        out = np.conj(H) * sig / den * self.output_scale
        return complex(out[0]) if np.isscalar(omega) else out

    __call__ = evaluate


def design_smoother(h, signal_psd, noise_psd, target="voltage", a_pzt=None):
    """Build the optimal smoother for plant ``h`` and the given spectra.

    ``signal_psd``/``noise_psd`` may be callables of omega or constants.
    A plant delay enters the design exactly through conj(h).
    """
    return SmootherDesign(
        plant=h,
        signal_psd=_as_psd_callable(signal_psd),
        noise_psd=_as_psd_callable(noise_psd),
        target=target,
        a_pzt=a_pzt,
    )


def error_psd(design, h, signal_psd, noise_psd, omega):
    """Error spectrum |h_s h - 1|^2 S_sig + |h_s|^2 S_noise.

    ``design`` may be a SmootherDesign or any callable returning the
    estimator response; for a position-target design the spectrum is
    returned in m^2 s with the signal PSD rescaled accordingly.
    """
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    hs = np.atleast_1d(design(om)).astype(complex)
    H = np.atleast_1d(freq_response(h, om))
    sig = np.asarray(_as_psd_callable(signal_psd)(om), dtype=float)
    noi = np.asarray(_as_psd_callable(noise_psd)(om), dtype=float)
    scale = getattr(design, "output_scale", 1.0)
    sig_t = scale**2 * sig
    H_t = H / scale
    val = np.abs(hs * H_t - 1.0) ** 2 * sig_t + np.abs(hs) ** 2 * noi
    return float(val[0]) if np.isscalar(omega) else val


def _run_quad(fn, a, b, points, epsabs):
    kwargs = dict(limit=500, epsrel=1e-10, epsabs=epsabs, full_output=1)
    if points and np.isfinite(b):
        kwargs["points"] = points
    res = integrate.quad(fn, a, b, **kwargs)
    if len(res) > 3:
        raise QuadratureError(
            f"quadrature on [{a:.3g}, {b:.3g}] did not converge: {res[3]}",
            partial=res[0],
        )
    return res[0], res[1]


def smoothed_mse(
    h,
    signal_psd,
    noise_psd,
    band_limit_hz=None,
    target="voltage",
    a_pzt=None,
    breakpoints=None,
):
    """Optimal smoothed MSE: integral d(omega)/2pi of
    S_sig S_noise / (|h|^2 S_sig + S_noise) over |f| <= band_limit_hz.

    band_limit_hz=None integrates the whole axis (adaptive quadrature with
    an exactly transformed tail).  Returns an MseEstimate carrying the
    quadrature error; raises QuadratureError (with the partial value) if
    the integrator fails to converge.  A position target multiplies by
    a_pzt^2.
    """
    if target == "position" and not a_pzt:
        raise ValueError("position target requires a nonzero a_pzt [m/V]")
    sig = _as_psd_callable(signal_psd)
    noi = _as_psd_callable(noise_psd)
    num_poly = h.numerator_coeffs
    den_poly = h.denominator_coeffs

    def integrand(w):
        s = 1j * w
        mag2 = abs(np.polyval(num_poly, s)) ** 2 / abs(np.polyval(den_poly, s)) ** 2
        sf = float(sig(w))
        sn = float(noi(w))
        d = mag2 * sf + sn
        if d <= 0.0:
            raise DegenerateBandError(
                f"signal and noise spectra both vanish at omega = {w:.6g} rad/s"
            )
        return sf * sn / d

    if breakpoints is None:
        poles = h.poles()
        breakpoints = sorted(
            {float(x) for x in np.abs(poles.imag)} | {float(x) for x in np.abs(poles)}
        )
    upper = math.inf if band_limit_hz is None or math.isinf(band_limit_hz) else (
        2.0 * math.pi * float(band_limit_hz)
    )
    pts = sorted(p for p in breakpoints if 0.0 < p < upper)
    # probe a wide log grid so the adaptive anchor covers the integrand's
    # rolloff even when no breakpoint hints were given
    grid = np.logspace(-3.0, 10.0, 300)
    if math.isfinite(upper):
        grid = grid[grid < upper]
    probe = np.concatenate([[0.0], np.asarray(pts, dtype=float), grid])
    values = np.array([integrand(w) for w in probe])
    peak = max(float(values.max()), 1e-300)
    live = probe[values >= 1e-3 * peak]
    rolloff = float(live.max()) if live.size else 1.0
    anchor = 10.0 * max(max(pts, default=1.0), rolloff)
    epsabs = 1e-12 * peak * (upper if math.isfinite(upper) else anchor)
    if math.isfinite(upper):
        total, err = _run_quad(integrand, 0.0, upper, pts, epsabs)
    else:
        head, err1 = _run_quad(integrand, 0.0, anchor, pts, epsabs)
        # tail via u = 1/omega; the substituted integrand is smooth and
        # bounded, which QAGS handles where QAGI's own transform stalls
        tail, err2 = _run_quad(
            lambda u: integrand(1.0 / u) / (u * u), 0.0, 1.0 / anchor, None, 0.0
        )
        total, err = head + tail, err1 + err2
    scale = (a_pzt**2) if target == "position" else 1.0
    return MseEstimate(scale * total / math.pi, scale * err / math.pi)


def apply_smoother(design, series):
    """Apply the smoother to a sampled record in the frequency domain.

    Multiplies the DFT of the record by the smoother response on the DFT
    frequency grid (plant delay exact) and inverse-transforms; the output
    is exactly real by construction.  The circular convolution leaves
    wrap-around transients at the record edges; exclude an edge fraction
    when scoring (see simloop.score_mse).
    """
    if series.n < 2:
        raise ValueError("series must have at least 2 samples")
    x = series.samples
    spectrum = np.fft.rfft(x)
    omega = 2.0 * np.pi * np.fft.rfftfreq(series.n, d=1.0 / series.sample_rate)
    spectrum *= design.evaluate(omega)
    y = np.fft.irfft(spectrum, n=series.n)
    return SampledSeries(y, series.sample_rate, seed=series.seed)


# ---------------------------------------------------------------------------
# continuous algebraic Riccati machinery
# ---------------------------------------------------------------------------


def _stabilizable(A, B, tol=1e-9):
    """PBH test on the unstable eigenvalues of A."""
    n = A.shape[0]
    if n == 0:
        return True
    for lam in np.linalg.eigvals(A):
        if lam.real >= -tol:
            M = np.hstack([lam * np.eye(n) - A, B])
            if np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, abs(lam))) < n:
                return False
    return True


def _care_residual(A, G, Q, X):
    res = A.T @ X + X @ A - X @ G @ X + Q
    scale = max(
        np.linalg.norm(A.T @ X),
        np.linalg.norm(X @ G @ X),
        np.linalg.norm(Q),
        1e-300,
    )
    return np.linalg.norm(res) / scale


def solve_care(A, B, Q, R, S=None, residual_gate=1e-8):
    """Stabilizing solution of A'X + XA - (XB+S) R^-1 (B'X+S') + Q = 0.

    Hamiltonian invariant-subspace method (balanced, time-scaled) followed
    by Kleinman-Newton refinement; returns (X, relative_residual).  Raises
    RiccatiError if no stabilizing solution exists or the residual stays
    above ``residual_gate``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    Rinv = np.linalg.inv(R)
    if S is None:
        As, Qs = A, Q
    else:
        S = np.atleast_2d(np.asarray(S, dtype=float))
        As = A - B @ Rinv @ S.T
        Qs = Q - S @ Rinv @ S.T
    G = B @ Rinv @ B.T
    # time scaling: dividing the equation by alpha leaves X unchanged
    alpha = max(float(np.linalg.norm(As, 2)), 1e-300)
    H = np.block([[As / alpha, -G / alpha], [-Qs / alpha, -As.T / alpha]])
    with np.errstate(invalid="ignore", divide="ignore"):  # zero rows balance to -inf logs
        Hb, T = linalg.matrix_balance(H, separate=False)
    TT, Z, sdim = linalg.schur(Hb, output="real", sort=lambda re, im: re < 0.0)
    if sdim != n:
        raise RiccatiError(
            f"no stabilizing solution: {sdim} stable Hamiltonian eigenvalues, "
            f"expected {n} (eigenvalues on the imaginary axis?)"
        )
    U = T @ Z[:, :n]
    U1, U2 = U[:n, :], U[n:, :]
    try:
        X = np.linalg.solve(U1.T, U2.T).T
    except np.linalg.LinAlgError as exc:
        raise RiccatiError(f"singular invariant-subspace basis: {exc}") from exc
    X = (X + X.T) / 2.0
    # Kleinman refinement of the cross-term-free problem
    rel = _care_residual(As, G, Qs, X)
    for _ in range(20):
        if rel <= 1e-13:
            break
        K = Rinv @ (B.T @ X)
        Acl = As - B @ K
        if np.linalg.eigvals(Acl).real.max() >= 0.0:
            break
        X_new = linalg.solve_continuous_lyapunov(Acl.T, -(Qs + K.T @ R @ K))
        X_new = (X_new + X_new.T) / 2.0
        rel_new = _care_residual(As, G, Qs, X_new)
        if rel_new >= rel:
            break
        X, rel = X_new, rel_new
    if rel > residual_gate:
        raise RiccatiError(
            f"Riccati residual {rel:.3e} above the gate {residual_gate:.1e}"
        )
    return X, rel


def solve_filter_care(A, C, W, R, residual_gate=1e-8):
    """Filter-form CARE AP + PA' - P C' R^-1 C P + W = 0 via duality."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    return solve_care(A.T, C.T, W, R, residual_gate=residual_gate)


def augment_shaping_plant(shaping, plant):
    """Cascade a shaping filter into a plant: returns (A, B_noise, C_meas, C_signal).

    States are [shaping; plant].  B_noise injects the white forcing input,
    C_meas reads the plant output, C_signal reads the shaping-filter output
    (the quantity the estimators target).
    """
    ns, npl = shaping.n_states, plant.n_states
    if shaping.D[0, 0] != 0.0:
        raise ModelError("shaping filter must be strictly proper")
    A = np.zeros((ns + npl, ns + npl))
    A[:ns, :ns] = shaping.A
    A[ns:, ns:] = plant.A
    A[ns:, :ns] = plant.B @ shaping.C
    B_noise = np.vstack([shaping.B, np.zeros((npl, shaping.B.shape[1]))])
    C_meas = np.hstack([plant.D[0, 0] * shaping.C, plant.C])
    C_signal = np.hstack([shaping.C, np.zeros((1, npl))])
    return A, B_noise, C_meas, C_signal


def filtered_mse(plant_ss, shaping_ss, Q, R, target="voltage", a_pzt=None):
    """Steady-state Kalman-Bucy filtered MSE of the forcing signal.

    Solves the filter Riccati equation for the shaping + plant cascade
    driven by white noise of intensity Q and measured in white noise of
    intensity R; returns (FilterBaseline, mse).  The covariance must pass
    the symmetric-PSD and residual gates.
    """
    if R <= 0:
        raise ModelError(f"measurement intensity R must be > 0, got {R}")
    if Q < 0:
        raise ModelError(f"forcing intensity Q must be >= 0, got {Q}")
    A, B_noise, C_meas, C_signal = augment_shaping_plant(shaping_ss, plant_ss)
    model = StateSpaceModel(A, B_noise, C_meas, np.zeros((1, B_noise.shape[1])))
    if not _stabilizable(A, B_noise):
        raise ModelError("(A, noise input) is not stabilizable")
    if not _stabilizable(A.T, C_meas.T):
        raise ModelError("(A, measurement) is not detectable")
    n = A.shape[0]
    if Q == 0.0 or n == 0:
        P = np.zeros((n, n))
        residual = 0.0
    else:
        W = B_noise @ B_noise.T * float(Q)
        P, residual = solve_filter_care(A, C_meas, W, np.array([[float(R)]]))
    eigs = np.linalg.eigvalsh((P + P.T) / 2.0)
    if eigs.size and eigs.min() < -1e-10 * max(eigs.max(), 1e-300):
        raise RiccatiError("filter covariance is not positive semidefinite")
    gain = P @ C_meas.T / float(R)
    mse = float((C_signal @ P @ C_signal.T)[0, 0]) if n else 0.0
    if target == "position":
        if not a_pzt:
            raise ValueError("position target requires a nonzero a_pzt [m/V]")
        mse *= a_pzt**2
    baseline = FilterBaseline(
        augmented_model=model,
        kalman_gain=gain,
        steady_state_covariance=P,
        riccati_residual=residual,
    )
    return baseline, mse


def improvement_factor(
    h,
    noise_spec,
    band_limit_hz=None,
    target="voltage",
    a_pzt=None,
    filter_delay_pade_order=None,
):
    """Smoothing improvement factor: filtered MSE over smoothed MSE.

    The smoothed MSE is the frequency-domain quadrature (delay-invariant,
    since only |h|^2 enters); the filtered baseline uses the delay-free
    rational plant unless ``filter_delay_pade_order`` asks for a Pade
    augmentation of the plant delay.
    """
    spec = noise_spec
    sig = lambda w: lorentzian_psd(spec, w)
    pts = [spec.gamma] + [
        spec.omega_i + k * spec.gamma for k in (-3.0, -1.0, 0.0, 1.0, 3.0)
    ]
    eps_s, quad_err = smoothed_mse(
        h, sig, spec.R, band_limit_hz, target, a_pzt, breakpoints=pts
    )
    plant_rational = h.delay_free()
    if filter_delay_pade_order and h.delay_seconds > 0:
        plant_rational = plant_rational * pade_delay(
            h.delay_seconds, filter_delay_pade_order
        )
    plant_ss = to_state_space(plant_rational)
    shaping_ss = to_state_space(shaping_filter(spec))
    _, eps_f = filtered_mse(plant_ss, shaping_ss, spec.Q, spec.R, target, a_pzt)
    sigma = eps_f / eps_s if eps_s > 0 else math.nan
    return MseReport(
        epsilon_smoothed=eps_s,
        epsilon_filtered=eps_f,
        sigma=sigma,
        band_limit_hz=band_limit_hz,
        quadrature_error_estimate=quad_err,
    )
