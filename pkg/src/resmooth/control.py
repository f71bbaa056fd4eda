"""LQG controller synthesis and closed-loop margin checks.

The controller is a steady-state Kalman estimator for the shaping-filter +
plant cascade combined with LQR state feedback that penalizes the
disturbance-tracking error (forcing signal minus control) and control
effort.  Synthesis uses the delay-free design model; the delayed plant is
validated afterwards with classical Nyquist margins, mirroring a loop
whose delay is known but not compensated.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy import signal as sp_signal

from .errors import ModelError
from .estimation import (
    _stabilizable,
    augment_shaping_plant,
    solve_care,
    solve_filter_care,
)
from .lti import RationalTransferFunction, StateSpaceModel, freq_response, is_stable, to_state_space
from .noise import NoiseSpec, shaping_filter

__all__ = [
    "LqgConfig",
    "ControllerRealization",
    "MarginReport",
    "synthesize_lqg",
    "closed_loop_stability_margin",
]


@dataclass(frozen=True, eq=False)
class LqgConfig:
    """Design parameters for the LQG loop.

    design_Q/design_gamma/design_omega_i describe the forcing model the
    controller assumes (which may differ from the truth), design_R the
    measurement noise.  mu0 weights the disturbance-tracking error and x0
    the control effort under the default "weights" semantics; under the
    alternative "prior" semantics they are recorded as initial-state prior
    parameters and the regulator runs with unit weights.
    """

    plant: StateSpaceModel
    design_Q: float
    design_gamma: float
    design_omega_i: float
    design_R: float
    mu0: float = 1.0
    x0: float = 1.0
    semantics: str = "weights"

    def __post_init__(self):
        for name in ("design_Q", "design_gamma", "design_R", "mu0", "x0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.design_omega_i < 0:
            raise ValueError(f"design_omega_i must be >= 0, got {self.design_omega_i}")
        if self.semantics not in ("weights", "prior"):
            raise ValueError(f"semantics must be 'weights' or 'prior', got {self.semantics!r}")


@dataclass(frozen=True, eq=False)
class ControllerRealization:
    """Synthesized measurement-to-control compensator."""

    h_c: RationalTransferFunction
    internal: StateSpaceModel


@dataclass(frozen=True)
class MarginReport:
    """Classical stability margins of the open loop attenuation*h_c*h."""

    gain_margin_db: float
    phase_margin_deg: float
    marginal: bool


def synthesize_lqg(cfg):
    """Kalman estimator + LQR state feedback for the augmented design model.

    Returns a strictly proper compensator mapping the measured output to
    the control signal.  Raises ModelError if the design model is not
    stabilizable/detectable, if the compensator itself is unstable, or if
    the closed loop with the design plant is unstable.
    """
    design_noise = NoiseSpec(
        Q=cfg.design_Q, R=cfg.design_R, gamma=cfg.design_gamma, omega_i=cfg.design_omega_i
    )
    shaping_ss = to_state_space(shaping_filter(design_noise))
    A, B_noise, C_meas, C_signal = augment_shaping_plant(shaping_ss, cfg.plant)
    ns = shaping_ss.n_states
    B_u = np.vstack([np.zeros((ns, 1)), -cfg.plant.B])
    if not _stabilizable(A, B_u):
        raise ModelError("(design model, control input) is not stabilizable")
    if not _stabilizable(A.T, C_meas.T):
        raise ModelError("(design model, measurement) is not detectable")

    W = B_noise @ B_noise.T * cfg.design_Q
    P, _ = solve_filter_care(A, C_meas, W, np.array([[cfg.design_R]]))
    L = P @ C_meas.T / cfg.design_R

    if cfg.semantics == "weights":
        mu, rho = cfg.mu0, cfg.x0
    else:
        mu, rho = 1.0, 1.0
    Qx = mu * C_signal.T @ C_signal
    S = -mu * C_signal.T
    Ru = np.array([[mu + rho]])
    X, _ = solve_care(A, B_u, Qx, Ru, S=S)
    K = np.linalg.solve(Ru, B_u.T @ X + S.T)

    A_c = A - B_u @ K - L @ C_meas
    internal = StateSpaceModel(A_c, L, -K, [[0.0]])
    if not is_stable(internal):
        raise ModelError("synthesized compensator is internally unstable")

    # closed loop of the physical plant with the compensator
    Ap, Bp, Cp, Dp = cfg.plant.A, cfg.plant.B, cfg.plant.C, cfg.plant.D[0, 0]
    A_cl = np.block(
        [[Ap, Bp @ K], [L @ Cp, A_c + Dp * (L @ K)]]
    )
    if not is_stable(StateSpaceModel(A_cl, np.zeros((A_cl.shape[0], 1)),
                                     np.zeros((1, A_cl.shape[0])), [[0.0]])):
        raise ModelError("closed loop with the design plant is unstable")

    num, den = sp_signal.ss2tf(A_c, L, -K, np.zeros((1, 1)))
    h_c = RationalTransferFunction(num[0], den, 0.0)
    return ControllerRealization(h_c=h_c, internal=internal)


def _crossings(x, target):
    """Indices i where (x[i]-target) and (x[i+1]-target) change sign."""
    d = x - target
    return np.flatnonzero(np.signbit(d[:-1]) != np.signbit(d[1:]))


def closed_loop_stability_margin(h_c, plant, attenuation=1.0, n_grid=6000):
    """Gain and phase margins of L(i*omega) = attenuation * h_c * h.

    Evaluates the loop on a log frequency grid with the plant delay exact,
    refines crossings by bisection, and reports the most restrictive
    margins.  No crossing of the relevant kind gives an infinite margin.
    The marginal flag is set when the locus passes within 1e-6 of -1.
    """
    if not 0.0 < attenuation <= 1.0:
        raise ValueError(f"attenuation must be in (0, 1], got {attenuation}")
    if not np.any(h_c.numerator_coeffs):
        return MarginReport(np.inf, np.inf, False)

    corners = np.abs(np.concatenate([
        h_c.poles(), plant.poles(),
        np.roots(h_c.numerator_coeffs) if h_c.numerator_coeffs.size > 1 else [],
        np.roots(plant.numerator_coeffs) if plant.numerator_coeffs.size > 1 else [],
    ]))
    corners = corners[corners > 0]
    w_lo = 0.01 * corners.min() if corners.size else 1e-2
    w_hi = 100.0 * corners.max() if corners.size else 1e6
    if plant.delay_seconds > 0:
        w_hi = max(w_hi, 50.0 / plant.delay_seconds)
    w = np.logspace(np.log10(w_lo), np.log10(w_hi), n_grid)

    def loop(omega):
        return attenuation * freq_response(h_c, omega) * freq_response(plant, omega)

    Lw = loop(w)
    mag = np.abs(Lw)
    marginal = bool(np.min(np.abs(Lw + 1.0)) < 1e-6)

    def neg_axis_offset(x):
        # signed angular distance of the locus from the negative real axis
        return (np.angle(-loop(x)) + np.pi) % (2.0 * np.pi) - np.pi

    # gain margin: locus crossing the negative real axis with relevant gain
    gm_db = np.inf
    off = (np.angle(-Lw) + np.pi) % (2.0 * np.pi) - np.pi
    for i in _crossings(off, 0.0):
        if abs(off[i]) + abs(off[i + 1]) > np.pi:
            continue  # wrap discontinuity on the positive real axis
        if mag[i] < 1e-3 and mag[i + 1] < 1e-3:
            continue  # crossing contributes > 60 dB, never the minimum
        if off[i] == 0.0:
            wc = w[i]
        elif off[i] * off[i + 1] < 0:
            wc = optimize.brentq(neg_axis_offset, w[i], w[i + 1])
        else:
            wc = w[i + 1]
        gm_db = min(gm_db, -20.0 * np.log10(abs(loop(wc))))
    # phase margin: |L| crossing unity
    pm_deg = np.inf
    for i in _crossings(mag, 1.0):
        wc = optimize.brentq(lambda x: abs(loop(x)) - 1.0, w[i], w[i + 1])
        ang = np.degrees(np.angle(loop(wc)))
        pm_deg = min(pm_deg, 180.0 + ang if ang <= 0 else ang - 180.0)
    return MarginReport(float(gm_db), float(pm_deg), marginal)
