"""Discrete-time closed-loop Monte-Carlo engine.

Plant + delay + controller + noise injection on a fixed sample grid,
reconstruction of the controller-independent record v_z, frequency-domain
smoothing, band-limited MSE scoring, and campaign/sweep orchestration.

Rational blocks are discretized with the exact zero-order-hold matrix
exponential; the pure delay is an integer-sample buffer with one-sample
linear interpolation for the fractional part.  The smoother is designed on
the delay-free plant (the loop's delay is known but left uncompensated), so
enabling the delay raises the measured smoothed MSE above the theory line.
"""

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

from .control import ControllerRealization, closed_loop_stability_margin
from .errors import DivergenceError, ModelError, ResmoothError
from .estimation import (
    MseReport,
    apply_smoother,
    augment_shaping_plant,
    design_smoother,
    improvement_factor,
)
from .lti import RationalTransferFunction, to_state_space
from .noise import (
    NoiseSpec,
    SampledSeries,
    exact_noise_discretization,
    lorentzian_psd,
    psd_sqrt,
    shaping_filter,
    white_noise,
)

__all__ = [
    "SimConfig",
    "SimRecord",
    "CampaignResult",
    "SweepPoint",
    "zoh_discretize",
    "run_closed_loop",
    "reconstruct_vz",
    "score_mse",
    "run_campaign",
    "sweep",
    "write_sweep_csv",
]

EDGE_DISCARD = 0.05  # fraction of samples dropped at each record edge


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Everything one closed-loop Monte-Carlo campaign needs."""

    plant: RationalTransferFunction
    controller: ControllerRealization | None
    noise: NoiseSpec
    sample_rate: float
    n_samples: int
    n_runs: int = 1
    master_seed: int = 0
    attenuation: float = 1.0
    band_limit_hz: float | None = None
    a_pzt: float | None = None
    delay_enabled: bool = True
    target: str = "voltage"

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        n = int(self.n_samples)
        if n < 2 or n & (n - 1):
            raise ValueError(f"n_samples must be a power of two >= 2, got {n}")
        if self.n_runs < 1:
            raise ValueError(f"n_runs must be >= 1, got {self.n_runs}")
        if not 0.0 < self.attenuation <= 1.0:
            raise ValueError(f"attenuation must be in (0, 1], got {self.attenuation}")
        if self.target not in ("voltage", "position"):
            raise ValueError(f"target must be 'voltage' or 'position', got {self.target!r}")
        if self.target == "position" and not self.a_pzt:
            raise ValueError("position target requires a nonzero a_pzt")

    def effective_plant(self):
        """Plant as simulated: the delay stripped when delay_enabled=False."""
        return self.plant if self.delay_enabled else self.plant.delay_free()


@dataclass(eq=False)
class SimRecord:
    """Signals of one closed-loop run; v_z/v_s filled in by the campaign."""

    v_f: SampledSeries
    v_eta: SampledSeries
    v_y: SampledSeries
    v_c: SampledSeries
    v_z: SampledSeries | None = None
    v_s: SampledSeries | None = None
    per_run_mse: float | None = None
    seed: int | None = None


def zoh_discretize(model, dt):
    """Exact zero-order-hold transition pair (Ad, Bd) of a state-space model."""
    n, m = model.n_states, model.B.shape[1]
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, m))
    M = np.zeros((n + m, n + m))
    M[:n, :n] = model.A
    M[:n, n:] = model.B
    E = linalg.expm(M * dt)
    return E[:n, :n], E[:n, n:]


def _delayed_output(raw, k, m, frac):
    a = raw[k - m] if k >= m else 0.0
    b = raw[k - m - 1] if k >= m + 1 else 0.0
    return (1.0 - frac) * a + frac * b


def _run_plant_with_delay(plant, u, sample_rate):
    """Discrete plant-with-delay response to the sampled input, zero state."""
    ss = to_state_space(plant.delay_free())
    Ad, Bd = zoh_discretize(ss, 1.0 / sample_rate)
    bd = Bd[:, 0]
    c = ss.C[0]
    d = ss.D[0, 0]
    delay = plant.delay_seconds * sample_rate
    m = int(math.floor(delay))
    frac = delay - m
    n = u.size
    raw = np.empty(n)
    out = np.empty(n)
    x = np.zeros(ss.n_states)
    for k in range(n):
        raw[k] = c @ x + d * u[k]
        out[k] = _delayed_output(raw, k, m, frac)
        x = Ad @ x + bd * u[k]
    return out


def _exact_forcing_response(cfg, plant, seed, n):
    """Jointly exact sampled paths of the forcing signal and the undelayed
    plant response to it.

    The shaping-filter + plant cascade is discretized as one stochastic
    system (Van Loan), started from its stationary distribution, so the
    sampled pair carries exactly the continuous-time statistics; pushing
    sampled forcing through a held plant would tilt the spectrum near the
    resonance instead.
    """
    shaping_ss = to_state_space(shaping_filter(cfg.noise))
    plant_ss = to_state_space(plant.delay_free())
    A, B_noise, C_meas, C_signal = augment_shaping_plant(shaping_ss, plant_ss)
    rng = np.random.default_rng(seed)
    nx = A.shape[0]
    if cfg.noise.Q == 0.0:
        return np.zeros(n), np.zeros(n)
    Ad, Qd = exact_noise_discretization(A, B_noise, cfg.noise.Q, 1.0 / cfg.sample_rate)
    kick = psd_sqrt(Qd)
    P_stat = linalg.solve_continuous_lyapunov(A, -B_noise @ B_noise.T * cfg.noise.Q)
    x = psd_sqrt(P_stat) @ rng.standard_normal(nx)
    w = rng.standard_normal((n, nx))
    c_sig = C_signal[0]
    c_phi = C_meas[0]
    v_f = np.empty(n)
    raw_f = np.empty(n)
    for k in range(n):
        v_f[k] = c_sig @ x
        raw_f[k] = c_phi @ x
        x = Ad @ x + kick @ w[k]
    return v_f, raw_f


def run_closed_loop(cfg, seed, forcing=None, measurement_noise=None, check_margins=True):
    """Simulate one closed-loop run; deterministic for a given seed.

    With internally generated noise the forcing and its plant response are
    sampled exactly (stationary joint discretization); the control path is
    exact zero-order hold, since the control signal really is piecewise
    constant in a sampled-data loop.  A user-supplied ``forcing`` series is
    treated as held between samples and runs through the ZOH plant.  Raises
    DivergenceError (with sample index and seed) if the loop state grows
    past 1e6 times the input scale.
    """
    plant = cfg.effective_plant()
    n = int(cfg.n_samples)
    s_joint, s_eta = (int(s) for s in np.random.SeedSequence(seed).generate_state(2))
    if forcing is None:
        v_f, raw_f = _exact_forcing_response(cfg, plant, s_joint, n)
        forcing = SampledSeries(v_f, cfg.sample_rate, seed=seed)
    else:
        raw_f = None
    if measurement_noise is None:
        measurement_noise = white_noise(cfg.noise.R, n, cfg.sample_rate, s_eta)
    if forcing.n != n or measurement_noise.n != n:
        raise ValueError("forcing/measurement series length does not match n_samples")

    if cfg.controller is not None and check_margins:
        _warn_if_marginal(cfg)

    dt = 1.0 / cfg.sample_rate
    plant_ss = to_state_space(plant.delay_free())
    Adp, Bdp = zoh_discretize(plant_ss, dt)
    bdp = Bdp[:, 0]
    cp = plant_ss.C[0]
    dp = plant_ss.D[0, 0]
    delay = plant.delay_seconds * cfg.sample_rate
    m = int(math.floor(delay))
    frac = delay - m

    has_ctrl = cfg.controller is not None
    if has_ctrl:
        ctrl = cfg.controller.internal
        if ctrl.D[0, 0] != 0.0:
            raise ModelError("controller must be strictly proper (no feedthrough)")
        Adc, Bdc = zoh_discretize(ctrl, dt)
        bdc = Bdc[:, 0]
        cc = ctrl.C[0]
        xc = np.zeros(ctrl.n_states)

    v_f = forcing.samples
    v_eta = measurement_noise.samples
    bound = 1e6 * max(np.abs(v_f).max(), np.abs(v_eta).max(), 1e-300)
    xp = np.zeros(plant_ss.n_states)
    raw = np.empty(n)
    v_y = np.empty(n)
    v_c = np.empty(n)
    att = cfg.attenuation
    for k in range(n):
        vc = att * float(cc @ xc) if has_ctrl else 0.0
        if raw_f is None:
            up = v_f[k] - vc  # held forcing minus held control
            raw[k] = cp @ xp + dp * up
        else:
            up = -vc  # forcing response already in raw_f, exactly sampled
            raw[k] = raw_f[k] + cp @ xp + dp * up
        vphi = _delayed_output(raw, k, m, frac)
        if not abs(vphi) < bound:
            raise DivergenceError(
                f"loop diverged at sample {k} (|v_phi| >= {bound:.3e})",
                time_index=k,
                seed=seed,
            )
        v_y[k] = vphi + v_eta[k]
        v_c[k] = vc
        xp = Adp @ xp + bdp * up
        if has_ctrl:
            xc = Adc @ xc + bdc * v_y[k]

    F = cfg.sample_rate
    return SimRecord(
        v_f=forcing,
        v_eta=measurement_noise,
        v_y=SampledSeries(v_y, F, seed=seed),
        v_c=SampledSeries(v_c, F, seed=seed),
        seed=seed,
    )


def reconstruct_vz(record, plant):
    """Controller-independent record v_z = v_y + (plant applied to v_c).

    ``plant`` must be the plant as simulated (same delay); the control
    contribution then cancels exactly and v_z equals (plant applied to
    v_f) plus the measurement noise.
    """
    if record.v_y.n != record.v_c.n:
        raise ValueError("v_y and v_c are not aligned")
    h_vc = _run_plant_with_delay(plant, record.v_c.samples, record.v_c.sample_rate)
    return SampledSeries(
        record.v_y.samples + h_vc, record.v_y.sample_rate, seed=record.seed
    )


def _band_filter(x, sample_rate, band_limit_hz):
    if band_limit_hz is None or band_limit_hz >= sample_rate / 2.0:
        return x
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / sample_rate)
    spectrum[freqs > band_limit_hz] = 0.0
    return np.fft.irfft(spectrum, n=x.size)


def score_mse(truth, estimate, band_limit_hz=None, edge_discard=EDGE_DISCARD):
    """Band-limited mean square error over the non-edge window.

    Both series are DFT-filtered to |f| <= band_limit_hz (None keeps the
    full band), differenced, and averaged over the samples that survive the
    edge discard.  ``edge_discard`` is a fraction of the record length,
    either one number for both ends or a (start, end) pair.
    """
    if truth.n != estimate.n or truth.sample_rate != estimate.sample_rate:
        raise ValueError("truth and estimate series are not aligned")
    if np.isscalar(edge_discard):
        start_frac = end_frac = float(edge_discard)
    else:
        start_frac, end_frac = (float(f) for f in edge_discard)
    t = _band_filter(truth.samples, truth.sample_rate, band_limit_hz)
    e = _band_filter(estimate.samples, estimate.sample_rate, band_limit_hz)
    i0 = int(round(start_frac * truth.n))
    i1 = truth.n - int(round(end_frac * truth.n))
    if i1 <= i0:
        raise ValueError("edge discard leaves no samples to score")
    d = t[i0:i1] - e[i0:i1]
    return float(np.mean(d * d))


def _transient_fraction(cfg):
    """Fraction of the record consumed by the slowest transient (5 time
    constants of the lazier of plant and forcing), floored at EDGE_DISCARD."""
    rates = [cfg.noise.gamma]
    poles = cfg.plant.poles()
    if poles.size:
        rates.append(float(-poles.real.max()))
    transient_s = 5.0 / max(min(rates), 1e-300)
    frac = transient_s * cfg.sample_rate / cfg.n_samples
    if frac > 0.45:
        raise ModelError(
            f"record too short: transient ({transient_s:.3g} s) consumes "
            f"{frac:.0%} of the record"
        )
    return max(EDGE_DISCARD, frac)


def _simulate_one(cfg, seed, check_margins=False):
    start_frac = _transient_fraction(cfg)  # validate record length up front
    record = run_closed_loop(cfg, seed, check_margins=check_margins)
    record.v_z = reconstruct_vz(record, cfg.effective_plant())
    smoother = design_smoother(
        cfg.plant.delay_free(),
        lambda w: lorentzian_psd(cfg.noise, w),
        cfg.noise.R,
    )
    record.v_s = apply_smoother(smoother, record.v_z)
    mse = score_mse(
        record.v_f,
        record.v_s,
        cfg.band_limit_hz,
        (start_frac, EDGE_DISCARD),
    )
    if cfg.target == "position":
        mse *= cfg.a_pzt**2
    record.per_run_mse = mse
    return record


def _worker(args):
    cfg, seed, keep = args
    record = _simulate_one(cfg, seed)
    return record if keep else record.per_run_mse


@dataclass(eq=False)
class CampaignResult:
    """Monte-Carlo statistics of one parameter point plus attached theory."""

    theory: MseReport
    seeds: list
    mse_runs: np.ndarray
    eps_sim_mean: float
    eps_sim_std: float
    sigma_runs: np.ndarray
    sigma_sim_mean: float
    sigma_sim_std: float
    records: list | None = None


def campaign_seeds(master_seed, n_runs):
    """Deterministic per-run seeds derived from the campaign master seed."""
    return [int(s) for s in np.random.SeedSequence(master_seed).generate_state(n_runs)]


def point_seed(master_seed, point_index):
    """Deterministic per-point master seed for sweeps."""
    return int(np.random.SeedSequence((master_seed, point_index)).generate_state(1)[0])


def run_campaign(cfg, keep_records=False, workers=1):
    """Run n_runs independent closed-loop simulations and score them.

    Returns Monte-Carlo mean/std of the smoothed MSE, the per-run smoothing
    improvement factors against the theoretical filtered MSE, and the
    theoretical MseReport for the same parameters.  Deterministic for a
    given (cfg, master_seed) regardless of the worker count.
    """
    seeds = campaign_seeds(cfg.master_seed, cfg.n_runs)
    theory = improvement_factor(
        cfg.plant, cfg.noise, cfg.band_limit_hz, cfg.target, cfg.a_pzt
    )
    # surface marginal-stability warnings once, not per run
    if cfg.controller is not None:
        _warn_if_marginal(cfg)
    if workers > 1 and cfg.n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_worker, [(cfg, s, keep_records) for s in seeds]))
        records = outs if keep_records else None
        mses = np.array([r.per_run_mse for r in outs]) if keep_records else np.array(outs)
    else:
        records = [_simulate_one(cfg, s) for s in seeds]
        mses = np.array([r.per_run_mse for r in records])
        if not keep_records:
            records = None
    eps_mean = float(mses.mean())
    eps_std = float(mses.std(ddof=1)) if cfg.n_runs > 1 else math.nan
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_runs = np.where(mses > 0, theory.epsilon_filtered / mses, math.nan)
    sigma_mean = float(np.mean(sigma_runs))
    sigma_std = float(np.std(sigma_runs, ddof=1)) if cfg.n_runs > 1 else math.nan
    return CampaignResult(
        theory=theory,
        seeds=seeds,
        mse_runs=mses,
        eps_sim_mean=eps_mean,
        eps_sim_std=eps_std,
        sigma_runs=sigma_runs,
        sigma_sim_mean=sigma_mean,
        sigma_sim_std=sigma_std,
        records=records,
    )


def _warn_if_marginal(cfg):
    """Margin pre-check; warns rather than raises so the unstable edge can
    still be explored (the runtime divergence guard catches blowups)."""
    report = closed_loop_stability_margin(
        cfg.controller.h_c, cfg.effective_plant(), cfg.attenuation
    )
    if report.marginal or report.gain_margin_db <= 0 or report.phase_margin_deg <= 0:
        warnings.warn(
            f"closed loop near or past the stability edge at attenuation "
            f"{cfg.attenuation} (GM {report.gain_margin_db:.2f} dB, "
            f"PM {report.phase_margin_deg:.2f} deg)",
            RuntimeWarning,
            stacklevel=3,
        )


@dataclass(eq=False)
class SweepPoint:
    """One sweep point: parameter value plus its campaign result or error."""

    axis: str
    value: float
    result: CampaignResult | None
    error: str | None = None


def sweep(axis, values, cfg, workers=1):
    """Campaigns across one forcing-noise axis ("gamma" or "Q").

    The controller in ``cfg`` is reused unchanged at every point (synthesize
    it once at the central design values).  Per-point master seeds derive
    from cfg.master_seed and the point index; failed points are recorded
    and the sweep continues.
    """
    if axis not in ("gamma", "Q"):
        raise ValueError(f"axis must be 'gamma' or 'Q', got {axis!r}")
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    points = []
    for i, value in enumerate(values):
        noise = replace(cfg.noise, **{axis: float(value)})
        cfg_i = replace(cfg, noise=noise, master_seed=point_seed(cfg.master_seed, i))
        try:
            result = run_campaign(cfg_i, workers=workers)
            points.append(SweepPoint(axis, float(value), result))
        except ResmoothError as exc:
            points.append(SweepPoint(axis, float(value), None, error=str(exc)))
    return points


_SWEEP_COLUMNS = [
    "axis_value",
    "sigma_theory",
    "sigma_sim_mean",
    "sigma_sim_std",
    "eps_smoothed_theory",
    "eps_filtered",
    "eps_sim_mean",
    "eps_sim_std",
]


def write_sweep_csv(points, path):
    """Sweep results as CSV, 12 significant digits, nan for failed points."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_SWEEP_COLUMNS)
        for p in points:
            if p.result is None:
                row = [p.value] + [math.nan] * (len(_SWEEP_COLUMNS) - 1)
            else:
                r = p.result
                row = [
                    p.value,
                    r.theory.sigma,
                    r.sigma_sim_mean,
                    r.sigma_sim_std,
                    r.theory.epsilon_smoothed,
                    r.theory.epsilon_filtered,
                    r.eps_sim_mean,
                    r.eps_sim_std,
                ]
            w.writerow([f"{v:.12g}" for v in row])
