"""Single-ended optical cavity input-output model.

Maps cavity decay/loss rates, input field amplitude and detuning
fluctuations onto the output quadratures.  The phase quadrature carries the
detuning signal with gain 4*kappa_a*alpha_in/kappa^2; the amplitude and
phase quadratures both carry unit-intensity vacuum terms whose coefficients
satisfy a beamsplitter-like unitarity.  This module is analysis-only: the
estimation pipeline consumes the resulting gain and noise constants through
the voltage-level plant abstraction.

Validity: mean detuning zero, analysis frequencies well below the cavity
linewidth (the caller's responsibility; these formulas drop the omega/kappa
dependence).
"""

import math
from dataclasses import dataclass

from .errors import UnsupportedRegimeError

__all__ = [
    "CavityParams",
    "QuadratureResponse",
    "steady_state_output",
    "dc_quadrature_gain",
    "quadrature_response",
    "equivalent_measurement_noise",
]


@dataclass(frozen=True)
class CavityParams:
    """Cavity rates and drive.

    kappa_a : HWHM output-coupler decay rate [rad/s], > 0
    kappa_la : intra-cavity loss rate [rad/s], >= 0
    alpha_in : real input field amplitude [sqrt(photons/s)]
    delta_bar : mean detuning [rad/s]
    """

    kappa_a: float
    kappa_la: float = 0.0
    alpha_in: float = 1.0
    delta_bar: float = 0.0

    def __post_init__(self):
        if not self.kappa_a > 0:
            raise ValueError(f"kappa_a must be > 0, got {self.kappa_a}")
        if self.kappa_la < 0:
            raise ValueError(f"kappa_la must be >= 0, got {self.kappa_la}")

    @property
    def kappa(self):
        """Total decay rate kappa_a + kappa_la (always derived, never stored)."""
        return self.kappa_a + self.kappa_la


@dataclass(frozen=True)
class QuadratureResponse:
    """Coefficients of the output-quadrature fluctuation map.

    x_minus_signal_gain multiplies the detuning fluctuation on the phase
    quadrature; the vac/loss gains multiply the unit-intensity vacuum
    entering through the coupler and the loss port.  For each quadrature
    vac_gain^2 + loss_gain^2 = 1.
    """

    x_minus_signal_gain: float
    x_minus_vac_gain: float
    x_minus_loss_gain: float
    x_plus_vac_gain: float
    x_plus_loss_gain: float
    dc_x_plus_gain: float


def steady_state_output(params):
    """Steady-state reflected field (alpha_out, alpha_out*) for a real drive."""
    k, ka, d = params.kappa, params.kappa_a, params.delta_bar
    a_in = params.alpha_in
    denom = k * k + d * d
    a_out = 2.0 * ka * (k * a_in + 1j * d * a_in) / denom - a_in
    a_out_conj = 2.0 * ka * (k * a_in - 1j * d * a_in) / denom - a_in
    return a_out, a_out_conj


def _require_zero_mean_detuning(params, op):
    if params.delta_bar != 0.0:
        raise UnsupportedRegimeError(
            f"{op} is only valid at zero mean detuning "
            f"(delta_bar = {params.delta_bar})"
        )


def dc_quadrature_gain(params):
    """DC amplitude-quadrature reflection gain (2*kappa_a - kappa)/kappa."""
    _require_zero_mean_detuning(params, "dc_quadrature_gain")
    return (2.0 * params.kappa_a - params.kappa) / params.kappa


def quadrature_response(params):
    """Fluctuation input-output coefficients at zero mean detuning."""
    _require_zero_mean_detuning(params, "quadrature_response")
    k, ka, kl = params.kappa, params.kappa_a, params.kappa_la
    vac = (2.0 * ka - k) / k
    loss = 2.0 * math.sqrt(ka * kl) / k
    signal = 4.0 * ka * params.alpha_in / (k * k)
    return QuadratureResponse(
        x_minus_signal_gain=signal,
        x_minus_vac_gain=vac,
        x_minus_loss_gain=loss,
        x_plus_vac_gain=vac,
        x_plus_loss_gain=loss,
        dc_x_plus_gain=vac,
    )


def equivalent_measurement_noise(params, lo_efficiency=1.0):
    """White-noise intensity of the vacuum terms referred to the detuning input.

    The two vacuum terms on the phase quadrature carry unit total intensity
    (unitarity), so dividing by the detection efficiency and the squared
    signal gain collapses them into one equivalent measurement-noise
    intensity.  This is the physical origin of the white measurement noise
    the estimation pipeline takes as a primitive.
    """
    if not 0.0 < lo_efficiency <= 1.0:
        raise ValueError(f"lo_efficiency must be in (0, 1], got {lo_efficiency}")
    resp = quadrature_response(params)
    if resp.x_minus_signal_gain == 0.0:
        raise ZeroDivisionError(
            "signal gain is zero (alpha_in = 0?); no finite equivalent noise"
        )
    total_vac = resp.x_minus_vac_gain**2 + resp.x_minus_loss_gain**2
    return total_vac / (lo_efficiency * resp.x_minus_signal_gain**2)
