"""Continuous-time LTI algebra.

Rational transfer functions with an exact pure delay, controllable-canonical
state-space realizations, frequency response, spectral factorization and
stability tests.  The delay is kept symbolic on the transfer function and
applied as exp(-i*omega*tau) in every frequency-domain path; it is only
rationalized (Pade) where a finite-dimensional state space is unavoidable.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EvaluationError,
    NotAPsdError,
    NumericalError,
    UnsupportedDelayError,
)

__all__ = [
    "RationalTransferFunction",
    "StateSpaceModel",
    "freq_response",
    "to_state_space",
    "pade_delay",
    "spectral_factorize",
    "is_stable",
]

# Roots closer than this (relative) are merged into one repeated root.
_ROOT_CLUSTER_RTOL = 1e-8


def _trim_leading_zeros(coeffs):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1 or c.size == 0:
        raise ValueError("polynomial coefficients must be a non-empty 1-d sequence")
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True, eq=False)
class RationalTransferFunction:
    """Proper SISO transfer function N(s)/D(s) * exp(-s*delay_seconds).

    Coefficients are real, in descending powers of s.  Instances are
    immutable and safe to share between workers.
    """

    numerator_coeffs: np.ndarray
    denominator_coeffs: np.ndarray
    delay_seconds: float = 0.0

    def __post_init__(self):
        num = _trim_leading_zeros(self.numerator_coeffs)
        den = _trim_leading_zeros(self.denominator_coeffs)
        if den[0] == 0.0:
            raise ValueError("denominator leading coefficient must be nonzero")
        if num.size > den.size:
            raise ValueError(
                "improper transfer function: numerator degree "
                f"{num.size - 1} > denominator degree {den.size - 1}"
            )
        if not (self.delay_seconds >= 0.0):
            raise ValueError(f"delay_seconds must be >= 0, got {self.delay_seconds}")
        object.__setattr__(self, "numerator_coeffs", num)
        object.__setattr__(self, "denominator_coeffs", den)
        object.__setattr__(self, "delay_seconds", float(self.delay_seconds))

    @property
    def order(self):
        return self.denominator_coeffs.size - 1

    def delay_free(self):
        """Copy of this system with the pure delay removed."""
        return RationalTransferFunction(
            self.numerator_coeffs, self.denominator_coeffs, 0.0
        )

    def poles(self):
        if self.order == 0:
            return np.zeros(0, dtype=complex)
        return np.roots(self.denominator_coeffs)

    def __mul__(self, other):
        if not isinstance(other, RationalTransferFunction):
            return NotImplemented
        return RationalTransferFunction(
            np.polymul(self.numerator_coeffs, other.numerator_coeffs),
            np.polymul(self.denominator_coeffs, other.denominator_coeffs),
            self.delay_seconds + other.delay_seconds,
        )

    def __call__(self, omega):
        return freq_response(self, omega)


def unity():
    """The identity system (gain 1, no dynamics, no delay)."""
    return RationalTransferFunction([1.0], [1.0])


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Real state-space realization dx/dt = Ax + Bu, y = Cx + Du."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise ValueError(f"C has {C.shape[1]} columns, expected {n}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(
                f"D shape {D.shape} inconsistent with C rows/B columns "
                f"({C.shape[0]}, {B.shape[1]})"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n_states(self):
        return self.A.shape[0]

    def frequency_response(self, omega):
        """C (i*omega*I - A)^-1 B + D, scalar complex for SISO systems."""
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        n = self.n_states
        out = np.empty(om.shape + self.D.shape, dtype=complex)
        eye = np.eye(n)
        for idx, w in np.ndenumerate(om):
            if n:
                out[idx] = self.C @ np.linalg.solve(1j * w * eye - self.A, self.B) + self.D
            else:
                out[idx] = self.D.astype(complex)
        if self.D.shape == (1, 1):
            out = out[..., 0, 0]
        return out[()] if np.isscalar(omega) else out


def freq_response(sys, omega):
    """Evaluate ``sys`` at s = i*omega, including the exact delay factor.

    Accepts a scalar or an array of angular frequencies [rad/s].  Raises
    EvaluationError if the denominator has a root on the imaginary axis at
    any requested frequency (within 1e-12 relative).
    """
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    poles = sys.poles()
    axis_poles = poles[np.abs(poles.real) <= 1e-9 * np.maximum(np.abs(poles), 1.0)]
    if axis_poles.size:
        for w in np.unique(np.abs(om)):
            d = np.abs(axis_poles - 1j * w)
            scale = max(w, float(np.abs(axis_poles).max()), 1.0)
            if np.any(d <= 1e-12 * scale):
                raise EvaluationError(
                    f"pole on the imaginary axis at omega = {w:.6g} rad/s"
                )
    s = 1j * om
    val = np.polyval(sys.numerator_coeffs, s) / np.polyval(sys.denominator_coeffs, s)
    if sys.delay_seconds:
        val = val * np.exp(-s * sys.delay_seconds)
    return complex(val[0]) if np.isscalar(omega) else val


def to_state_space(sys):
    """Controllable-canonical realization of a delay-free transfer function."""
    if sys.delay_seconds != 0.0:
        raise UnsupportedDelayError(
            "cannot realize a pure delay in state space; rationalize it "
            "with pade_delay() first"
        )
    den = sys.denominator_coeffs / sys.denominator_coeffs[0]
    n = den.size - 1
    num = np.zeros(n + 1)
    num[n + 1 - sys.numerator_coeffs.size:] = (
        sys.numerator_coeffs / sys.denominator_coeffs[0]
    )
    d = num[0]
    if n == 0:
        return StateSpaceModel(
            np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]]
        )
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = (num[1:] - d * den[1:]).reshape(1, n)
    return StateSpaceModel(A, B, C, [[d]])


def pade_delay(tau, order):
    """Diagonal Pade approximant of exp(-s*tau).

    All-pass by construction.  The phase tracks -omega*tau well for
    omega*tau up to about order/2 (the order-1 approximant is the weakest,
    with ~2% error at the edge of that range).
    """
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if not (isinstance(order, (int, np.integer)) and 1 <= order <= 10):
        raise ValueError(f"order must be an integer in 1..10, got {order!r}")
    if tau == 0:
        return unity()
    k = int(order)
    # coefficients of the [k/k] approximant to exp(-x), ascending in x
    c = [
        math.factorial(2 * k - j) * math.factorial(k)
        / (math.factorial(2 * k) * math.factorial(j) * math.factorial(k - j))
        for j in range(k + 1)
    ]
    num = np.array([c[j] * (-tau) ** j for j in range(k + 1)])[::-1]
    den = np.array([c[j] * tau ** j for j in range(k + 1)])[::-1]
    return RationalTransferFunction(num, den, 0.0)


def _cluster_roots(roots):
    """Merge roots within the relative cluster tolerance; returns (root, mult)."""
    rts = sorted(roots, key=lambda r: (round(abs(r), 12), r.real, r.imag))
    clusters = []
    for r in rts:
        for i, (c, m) in enumerate(clusters):
            if abs(r - c) <= _ROOT_CLUSTER_RTOL * max(abs(c), abs(r), 1e-300):
                clusters[i] = ((c * m + r) / (m + 1), m + 1)
                break
        else:
            clusters.append((r, 1))
    return clusters


def _half_spectrum(omega_poly):
    """Left-half-plane factor of an even polynomial P(omega) >= 0.

    Returns real coefficients g(s) (descending) with g(s)g(-s) = P(omega)
    under omega^2 -> -s^2.  Works in u = s^2 so numerically doubled roots
    stay paired, and averages root clusters so repeated roots (within
    1e-8 relative) are recovered at full accuracy.
    """
    p = _trim_leading_zeros(omega_poly)
    deg = p.size - 1
    scale = np.abs(p).max()
    if deg % 2 != 0:
        raise ValueError("PSD numerator/denominator must be even polynomials in omega")
    odd = p[1::2]  # powers deg-1, deg-3, ... are all odd since deg is even
    if odd.size and np.abs(odd).max() > 1e-12 * scale:
        raise ValueError("PSD numerator/denominator must be even polynomials in omega")
    if p[0] <= 0:
        raise NotAPsdError("PSD is negative at large |omega| (leading coefficient <= 0)")
    m = deg // 2
    if m == 0:
        return np.array([math.sqrt(p[0])])
    # coefficients in u = s^2:  omega^(2q) = (-1)^q u^q
    u_poly = np.array([p[deg - 2 * q] * (-1.0) ** q for q in range(m, -1, -1)])
    lhp = []
    for u, mult in _cluster_roots(np.roots(u_poly)):
        root = np.sqrt(complex(u))  # principal branch, Re >= 0
        if root.real > _ROOT_CLUSTER_RTOL * abs(root):
            lhp.extend([-root] * mult)
        else:
            # imaginary-axis pair +-i|root|; needs even multiplicity to split
            if mult % 2:
                raise NotAPsdError(
                    f"PSD has an odd-order zero on the real axis near "
                    f"omega = {abs(root):.6g} rad/s"
                )
            lhp.extend([1j * root.imag] * (mult // 2))
            lhp.extend([-1j * root.imag] * (mult // 2))
    coeffs = np.poly(np.array(lhp))
    if np.abs(coeffs.imag).max() > 1e-9 * max(np.abs(coeffs.real).max(), 1e-300):
        raise NumericalError("spectral factor reconstruction lost conjugate symmetry")
    return math.sqrt(p[0]) * coeffs.real


def spectral_factorize(psd_num, psd_den):
    """Minimum-phase stable G(s) with |G(i*omega)|^2 = psd_num/psd_den.

    Both arguments are real even polynomials in omega (descending powers).
    Common factors between numerator and denominator are cancelled so the
    returned shaping filter is minimal.  Raises NotAPsdError if the ratio
    is negative anywhere on the real axis, and NumericalError if the
    reconstructed factor fails the |G|^2 identity at 1e-10 relative.
    """
    num = _trim_leading_zeros(psd_num)
    den = _trim_leading_zeros(psd_den)
    if den[0] < 0:
        num, den = -num, -den
    w = np.concatenate(([0.0], np.logspace(-3, 9, 1999)))
    vals = np.polyval(num, w) / np.polyval(den, w)
    vmax = np.abs(vals).max()
    if vmax == 0.0:
        return RationalTransferFunction([0.0], [1.0])
    if vals.min() < -1e-10 * vmax:
        wbad = w[int(np.argmin(vals))]
        raise NotAPsdError(f"PSD is negative near omega = {wbad:.6g} rad/s")
    g_num = _half_spectrum(num)
    g_den = _half_spectrum(den)
    g_num, g_den = _cancel_common_roots(g_num, g_den)
    factor = RationalTransferFunction(g_num, g_den, 0.0)
    check = np.logspace(-2, 8, 1000)
    target = np.polyval(num, check) / np.polyval(den, check)
    got = np.abs(freq_response(factor, check)) ** 2
    mask = target > 1e-30
    if mask.any():
        rel = np.abs(got[mask] - target[mask]) / target[mask]
        if rel.max() > 1e-10:
            raise NumericalError(
                f"spectral factor identity violated: relative error "
                f"{rel.max():.3e} at omega = {check[mask][int(np.argmax(rel))]:.6g}"
            )
    return factor


def _cancel_common_roots(num, den):
    """Remove matching root pairs (within cluster tolerance) from num/den."""
    if num.size <= 1 or den.size <= 1:
        return num, den
    n_roots = list(np.roots(num))
    d_roots = list(np.roots(den))
    kept_d = []
    for r in d_roots:
        for i, q in enumerate(n_roots):
            if abs(r - q) <= _ROOT_CLUSTER_RTOL * max(abs(r), abs(q), 1e-300):
                del n_roots[i]
                break
        else:
            kept_d.append(r)
    if len(kept_d) == len(d_roots):
        return num, den
    new_num = num[0] * np.real(np.poly(np.array(n_roots))) if n_roots else num[:1]
    new_den = den[0] * np.real(np.poly(np.array(kept_d))) if kept_d else den[:1]
    return new_num, new_den


def is_stable(model, margin=-1e-9):
    """True iff every eigenvalue of A has real part below ``margin``."""
    if model.n_states == 0:
        return True
    return bool(np.linalg.eigvals(model.A).real.max() < margin)
