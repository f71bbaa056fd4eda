"""Config-file schema, validation, bundled reference preset, run manifests.

The config format is an INI file with four sections, all values in SI
units:

    [plant]       numerator, denominator (whitespace-separated descending
                  s-polynomial coefficients), delay_seconds
    [noise]       Q, R, gamma, omega_i
    [sim]         sample_rate, n_samples, n_runs, master_seed, attenuation,
                  band_limit_hz ("inf" allowed), a_pzt, delay_enabled,
                  target (voltage|position)
    [controller]  enabled, design_Q, design_gamma, design_omega_i,
                  design_R, mu0, x0, semantics (weights|prior)

``load_config`` validates every field and raises ConfigError naming the
offending [section] field.  The packaged ``reference`` preset carries the
bench's standard parameter set.
"""

import configparser
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import metadata, resources

import numpy as np

from .control import LqgConfig, synthesize_lqg
from .errors import ConfigError
from .lti import RationalTransferFunction, to_state_space
from .noise import NoiseSpec
from .simloop import SimConfig

__all__ = [
    "RunSpec",
    "load_config",
    "resolve_config_path",
    "build_sim_config",
    "config_digest",
    "write_manifest",
]


@dataclass(frozen=True, eq=False)
class RunSpec:
    """Parsed and validated configuration file."""

    plant: RationalTransferFunction
    noise: NoiseSpec
    sample_rate: float
    n_samples: int
    n_runs: int
    master_seed: int
    attenuation: float
    band_limit_hz: float | None
    a_pzt: float | None
    delay_enabled: bool
    target: str
    controller_enabled: bool
    design_Q: float
    design_gamma: float
    design_omega_i: float
    design_R: float
    mu0: float
    x0: float
    semantics: str


def resolve_config_path(name_or_path):
    """Map the bundled preset name ("reference") to its packaged file."""
    if str(name_or_path) == "reference":
        return resources.files("resmooth").joinpath("data/reference.ini")
    return name_or_path


class _SectionReader:
    def __init__(self, parser, section, path):
        self.section = section
        self.path = path
        if not parser.has_section(section):
            raise ConfigError(f"{path}: missing section [{section}]")
        self.raw = dict(parser.items(section))

    def _take(self, field):
        if field not in self.raw:
            raise ConfigError(f"[{self.section}] {field}: missing")
        return self.raw.pop(field)

    def floats(self, field):
        text = self._take(field)
        try:
            values = [float(tok) for tok in text.split()]
        except ValueError:
            raise ConfigError(
                f"[{self.section}] {field}: expected numbers, got {text!r}"
            ) from None
        if not values:
            raise ConfigError(f"[{self.section}] {field}: empty")
        return values

    def number(self, field, minimum=None, strict=False, allow_inf=False):
        text = self._take(field).strip().lower()
        if text == "inf":
            if allow_inf:
                return math.inf
            raise ConfigError(f"[{self.section}] {field}: inf not allowed")
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(
                f"[{self.section}] {field}: expected a number, got {text!r}"
            ) from None
        if not math.isfinite(value):
            raise ConfigError(f"[{self.section}] {field}: must be finite")
        if minimum is not None:
            if strict and not value > minimum:
                raise ConfigError(
                    f"[{self.section}] {field}: must be > {minimum}, got {value}"
                )
            if not strict and value < minimum:
                raise ConfigError(
                    f"[{self.section}] {field}: must be >= {minimum}, got {value}"
                )
        return value

    def integer(self, field, minimum=None):
        value = self.number(field, minimum=minimum)
        if value != int(value):
            raise ConfigError(f"[{self.section}] {field}: must be an integer")
        return int(value)

    def boolean(self, field):
        text = self._take(field).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{self.section}] {field}: expected a boolean, got {text!r}")

    def choice(self, field, options):
        text = self._take(field).strip()
        if text not in options:
            raise ConfigError(
                f"[{self.section}] {field}: must be one of {options}, got {text!r}"
            )
        return text

    def finish(self):
        if self.raw:
            unknown = ", ".join(sorted(self.raw))
            raise ConfigError(f"[{self.section}]: unknown fields: {unknown}")


def load_config(path):
    """Parse and validate a config file into a RunSpec."""
    path = resolve_config_path(path)
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (Q vs q)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    plant_sec = _SectionReader(parser, "plant", path)
    num = plant_sec.floats("numerator")
    den = plant_sec.floats("denominator")
    delay = plant_sec.number("delay_seconds", minimum=0.0)
    plant_sec.finish()
    try:
        plant = RationalTransferFunction(num, den, delay)
    except ValueError as exc:
        raise ConfigError(f"[plant]: {exc}") from exc

    noise_sec = _SectionReader(parser, "noise", path)
    noise = NoiseSpec(
        Q=noise_sec.number("Q", minimum=0.0),
        R=noise_sec.number("R", minimum=0.0),
        gamma=noise_sec.number("gamma", minimum=0.0, strict=True),
        omega_i=noise_sec.number("omega_i", minimum=0.0),
    )
    noise_sec.finish()

    sim = _SectionReader(parser, "sim", path)
    sample_rate = sim.number("sample_rate", minimum=0.0, strict=True)
    n_samples = sim.integer("n_samples", minimum=2)
    if n_samples & (n_samples - 1):
        raise ConfigError(f"[sim] n_samples: must be a power of two, got {n_samples}")
    n_runs = sim.integer("n_runs", minimum=1)
    master_seed = sim.integer("master_seed", minimum=0)
    attenuation = sim.number("attenuation", minimum=0.0, strict=True)
    if attenuation > 1.0:
        raise ConfigError(f"[sim] attenuation: must be <= 1, got {attenuation}")
    band = sim.number("band_limit_hz", minimum=0.0, strict=True, allow_inf=True)
    band_limit_hz = None if math.isinf(band) else band
    a_pzt = sim.number("a_pzt", minimum=0.0, strict=True)
    delay_enabled = sim.boolean("delay_enabled")
    target = sim.choice("target", ("voltage", "position"))
    sim.finish()

    ctrl = _SectionReader(parser, "controller", path)
    controller_enabled = ctrl.boolean("enabled")
    spec = RunSpec(
        plant=plant,
        noise=noise,
        sample_rate=sample_rate,
        n_samples=n_samples,
        n_runs=n_runs,
        master_seed=master_seed,
        attenuation=attenuation,
        band_limit_hz=band_limit_hz,
        a_pzt=a_pzt,
        delay_enabled=delay_enabled,
        target=target,
        controller_enabled=controller_enabled,
        design_Q=ctrl.number("design_Q", minimum=0.0, strict=True),
        design_gamma=ctrl.number("design_gamma", minimum=0.0, strict=True),
        design_omega_i=ctrl.number("design_omega_i", minimum=0.0),
        design_R=ctrl.number("design_R", minimum=0.0, strict=True),
        mu0=ctrl.number("mu0", minimum=0.0, strict=True),
        x0=ctrl.number("x0", minimum=0.0, strict=True),
        semantics=ctrl.choice("semantics", ("weights", "prior")),
    )
    ctrl.finish()
    return spec


def build_sim_config(spec, seed_override=None, runs_override=None,
                     band_override="keep", force_no_delay=False):
    """Turn a RunSpec into a SimConfig, synthesizing the controller once."""
    controller = None
    if spec.controller_enabled:
        controller = synthesize_lqg(
            LqgConfig(
                plant=to_state_space(spec.plant.delay_free()),
                design_Q=spec.design_Q,
                design_gamma=spec.design_gamma,
                design_omega_i=spec.design_omega_i,
                design_R=spec.design_R,
                mu0=spec.mu0,
                x0=spec.x0,
                semantics=spec.semantics,
            )
        )
    return SimConfig(
        plant=spec.plant,
        controller=controller,
        noise=spec.noise,
        sample_rate=spec.sample_rate,
        n_samples=spec.n_samples,
        n_runs=spec.n_runs if runs_override is None else int(runs_override),
        master_seed=spec.master_seed if seed_override is None else int(seed_override),
        attenuation=spec.attenuation,
        band_limit_hz=spec.band_limit_hz if band_override == "keep" else band_override,
        a_pzt=spec.a_pzt,
        delay_enabled=spec.delay_enabled and not force_no_delay,
        target=spec.target,
    )


def config_digest(spec):
    """Stable hash of the parsed configuration (not the file bytes)."""
    payload = {
        "plant_num": [repr(float(c)) for c in spec.plant.numerator_coeffs],
        "plant_den": [repr(float(c)) for c in spec.plant.denominator_coeffs],
        "plant_delay": repr(spec.plant.delay_seconds),
        "noise": [repr(v) for v in (spec.noise.Q, spec.noise.R, spec.noise.gamma,
                                    spec.noise.omega_i)],
        "sim": [repr(spec.sample_rate), spec.n_samples, spec.n_runs,
                spec.master_seed, repr(spec.attenuation),
                repr(spec.band_limit_hz), repr(spec.a_pzt),
                spec.delay_enabled, spec.target],
        "controller": [spec.controller_enabled, repr(spec.design_Q),
                       repr(spec.design_gamma), repr(spec.design_omega_i),
                       repr(spec.design_R), repr(spec.mu0), repr(spec.x0),
                       spec.semantics],
    }
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(path, spec, seeds, extra=None):
    """Reproducibility manifest: config hash, seeds, library versions.

    Deliberately carries no timestamps so reruns stay byte-identical.
    """
    try:
        own_version = metadata.version("resmooth")
    except metadata.PackageNotFoundError:
        own_version = "unknown"
    payload = {
        "config_sha256": config_digest(spec),
        "master_seed": spec.master_seed,
        "seeds": seeds,
        "versions": {
            "resmooth": own_version,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
        },
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
