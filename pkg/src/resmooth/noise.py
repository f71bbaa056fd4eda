"""Stochastic signal models.

White Gaussian processes of given two-sided intensity, the twin-peaked
Lorentzian forcing PSD, time-domain generation of the forcing process
(exactly, through the spectral-factor shaping filter, or experiment-like,
as a cosine-modulated Ornstein-Uhlenbeck process), and Welch PSD
estimation.

Conventions: all internal spectra are two-sided in angular frequency with
the integral d(omega)/2pi recovering variance; Welch output is one-sided in
V^2/Hz (factor 2 applied at that boundary only).  A continuous white noise
of intensity q sampled at rate F has per-sample variance q*F.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import linalg, signal

from .lti import spectral_factorize, to_state_space

__all__ = [
    "NoiseSpec",
    "SampledSeries",
    "lorentzian_psd",
    "shaping_filter",
    "white_noise",
    "forcing_series",
    "welch_psd",
    "exact_noise_discretization",
    "psd_sqrt",
    "write_series_csv",
    "write_psd_csv",
]


@dataclass(frozen=True)
class NoiseSpec:
    """Forcing and measurement noise parameters.

    Q : forcing white-noise intensity [V^2 s] (two-sided)
    R : measurement white-noise intensity [V^2 s] (two-sided)
    gamma : Lorentzian half width at half maximum [rad/s]
    omega_i : forcing resonance frequency [rad/s]
    """

    Q: float
    R: float
    gamma: float
    omega_i: float

    def __post_init__(self):
        if self.Q < 0:
            raise ValueError(f"Q must be >= 0, got {self.Q}")
        if self.R < 0:
            raise ValueError(f"R must be >= 0, got {self.R}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.omega_i < 0:
            raise ValueError(f"omega_i must be >= 0, got {self.omega_i}")

    @property
    def omega_n(self):
        """Natural frequency sqrt(gamma^2 + omega_i^2) of the shaping filter."""
        return float(np.hypot(self.gamma, self.omega_i))

    def total_forcing_power(self):
        """Variance of the forcing process: integral of the PSD, Q/(2*gamma)."""
        return self.Q / (2.0 * self.gamma)


@dataclass(frozen=True, eq=False)
class SampledSeries:
    """Uniformly sampled real time series with its generation seed."""

    samples: np.ndarray
    sample_rate: float
    seed: int | None = None

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("samples must be a non-empty 1-d array")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    @property
    def n(self):
        return self.samples.size

    def times(self):
        return np.arange(self.n) / self.sample_rate


def lorentzian_psd(spec, omega):
    """Two-sided forcing PSD: a Lorentzian pair centred at +-omega_i.

    S(omega) = (Q/2) [ 1/((omega-omega_i)^2 + gamma^2)
                     + 1/((omega+omega_i)^2 + gamma^2) ]
    Even in omega and strictly positive for Q > 0.
    """
    om = np.asarray(omega, dtype=float)
    g2 = spec.gamma * spec.gamma
    val = 0.5 * spec.Q * (
        1.0 / ((om - spec.omega_i) ** 2 + g2)
        + 1.0 / ((om + spec.omega_i) ** 2 + g2)
    )
    return float(val) if np.isscalar(omega) else val


def shaping_filter(spec):
    """Stable minimum-phase filter turning unit-intensity white noise into
    a process with PSD lorentzian_psd(spec, .)/Q.

    Driving it with white noise of intensity Q reproduces the forcing PSD
    exactly: |G(i*omega)|^2 * Q = S(omega).  Closed form
    (s + Omega)/(s^2 + 2*gamma*s + Omega^2) with Omega^2 = gamma^2 + omega_i^2,
    obtained here through the generic spectral factorization.
    """
    g, wn2 = spec.gamma, spec.omega_n**2
    num = [1.0, 0.0, wn2]
    den = [1.0, 0.0, 4.0 * g * g - 2.0 * wn2, 0.0, wn2 * wn2]
    return spectral_factorize(num, den)


def white_noise(intensity, n, sample_rate, seed):
    """I.i.d. zero-mean Gaussian samples with variance intensity*sample_rate."""
    if intensity < 0:
        raise ValueError(f"intensity must be >= 0, got {intensity}")
    if not n > 0:
        raise ValueError(f"n must be > 0, got {n}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(int(n)) * np.sqrt(intensity * sample_rate)
    return SampledSeries(x, sample_rate, seed=seed)


def psd_sqrt(P):
    """Symmetric PSD square root, tolerant of tiny negative eigenvalues."""
    vals, vecs = np.linalg.eigh((P + P.T) / 2.0)
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


def exact_noise_discretization(A, B, intensity, dt):
    """Transition matrix and discrete noise covariance for dx = Ax dt + B dW.

    Van Loan construction: both the state transition and the integrated
    process-noise covariance are exact for the sampling interval dt.
    """
    n = A.shape[0]
    W = B @ B.T * intensity
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = W
    M[n:, n:] = A.T
    E = linalg.expm(M * dt)
    Ad = E[n:, n:].T
    Qd = Ad @ E[:n, n:]
    return Ad, (Qd + Qd.T) / 2.0


def _check_nyquist(spec, sample_rate):
    peak_hz = (spec.omega_i + 3.0 * spec.gamma) / (2.0 * np.pi)
    if sample_rate <= 2.0 * peak_hz:
        raise ValueError(
            f"forcing peak (~{peak_hz:.6g} Hz incl. 3*gamma skirt) lies beyond "
            f"the Nyquist frequency {sample_rate / 2:.6g} Hz"
        )


def forcing_series(spec, n, sample_rate, seed, method="shaping-filter"):
    """Stationary sample path of the forcing process.

    method="shaping-filter" (default): white noise of intensity Q through
    the exact discretization of the spectral-factor filter, started from
    the stationary state distribution; matches the Lorentzian PSD exactly
    in distribution.

    method="ou-carrier": experiment-like generator, an Ornstein-Uhlenbeck
    process (decay rate gamma) amplitude-modulated by a cosine at omega_i
    with a seed-derived random phase.  Matches the PSD in the main lobe but
    is cyclostationary, mirroring how such drives are produced in hardware;
    excluded from theory-validation runs.
    """
    _check_nyquist(spec, sample_rate)
    if not n > 0:
        raise ValueError(f"n must be > 0, got {n}")
    n = int(n)
    rng = np.random.default_rng(seed)
    dt = 1.0 / sample_rate
    if spec.Q == 0.0:
        return SampledSeries(np.zeros(n), sample_rate, seed=seed)
    if method == "shaping-filter":
        ss = to_state_space(shaping_filter(spec))
        Ad, Qd = exact_noise_discretization(ss.A, ss.B, spec.Q, dt)
        L = psd_sqrt(Qd)
        P_stat = linalg.solve_continuous_lyapunov(ss.A, -ss.B @ ss.B.T * spec.Q)
        x = psd_sqrt(P_stat) @ rng.standard_normal(ss.n_states)
        w = rng.standard_normal((n, ss.n_states))
        C = ss.C[0]
        out = np.empty(n)
        for k in range(n):
            out[k] = C @ x
            x = Ad @ x + L @ w[k]
        return SampledSeries(out, sample_rate, seed=seed)
    if method == "ou-carrier":
        phase = rng.uniform(0.0, 2.0 * np.pi)
        a = np.exp(-spec.gamma * dt)
        var_stat = spec.Q / (2.0 * spec.gamma)
        u = np.empty(n)
        u[0] = np.sqrt(var_stat) * rng.standard_normal()
        kicks = np.sqrt(var_stat * (1.0 - a * a)) * rng.standard_normal(n - 1)
        for k in range(1, n):
            u[k] = a * u[k - 1] + kicks[k - 1]
        t = np.arange(n) * dt
        out = np.sqrt(2.0) * u * np.cos(spec.omega_i * t + phase)
        return SampledSeries(out, sample_rate, seed=seed)
    raise ValueError(f"unknown method {method!r}")


def welch_psd(series, segment_len, overlap_fraction=0.5, window="hann"):
    """One-sided Welch PSD estimate in V^2/Hz.

    Hann-windowed averaged periodogram; detrending is off so the estimate
    satisfies Parseval against the raw mean square.
    """
    segment_len = int(segment_len)
    if segment_len < 4 or segment_len > series.n:
        raise ValueError(
            f"segment_len must be in [4, n={series.n}], got {segment_len}"
        )
    if not 0.0 <= overlap_fraction <= 0.9:
        raise ValueError(
            f"overlap_fraction must be in [0, 0.9], got {overlap_fraction}"
        )
    freqs, psd = signal.welch(
        series.samples,
        fs=series.sample_rate,
        window=window,
        nperseg=segment_len,
        noverlap=int(round(overlap_fraction * segment_len)),
        detrend=False,
        scaling="density",
        return_onesided=True,
    )
    return freqs, psd


def write_series_csv(series, path):
    """Write a sampled series as (time_s, value) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "value"])
        for t, v in zip(series.times(), series.samples):
            w.writerow([f"{t:.12g}", f"{v:.12g}"])


def write_psd_csv(freqs, psd, path):
    """Write a one-sided PSD as (freq_hz, psd) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "psd"])
        for f, p in zip(freqs, psd):
            w.writerow([f"{f:.12g}", f"{p:.12g}"])
