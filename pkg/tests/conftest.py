import numpy as np
import pytest

from resmooth.control import LqgConfig, synthesize_lqg
from resmooth.lti import RationalTransferFunction, to_state_space
from resmooth.noise import NoiseSpec

# reference bench parameters (the bundled preset in code form)
OMEGA_M = 2.0 * np.pi * 7930.0
C1, C2, BETA = 131.0, 196.0, 2494.0
TAU = 18.5e-6
Q_REF, R_REF, GAMMA_REF = 7.4e-2, 7.7e-11, 1333.0
A_PZT = 6.3e-7
F_REF, N_REF = 250e3, 2**15
DESIGN_Q, DESIGN_GAMMA = 0.57, 1193.0
MU0, X0 = 1.0, 2.4
GAMMA_SWEEP_LO, GAMMA_SWEEP_HI = 500.0, 3082.0
Q_SWEEP_LO, Q_SWEEP_HI = 9.3e-3, 2.35


def make_plant(delay=TAU):
    return RationalTransferFunction(
        [C1, C2 * OMEGA_M], [1.0, BETA, OMEGA_M**2], delay
    )


def make_noise(Q=Q_REF, gamma=GAMMA_REF, R=R_REF, omega_i=OMEGA_M):
    return NoiseSpec(Q=Q, R=R, gamma=gamma, omega_i=omega_i)


@pytest.fixture(scope="session")
def ref_plant():
    return make_plant()


@pytest.fixture(scope="session")
def ref_noise():
    return make_noise()


@pytest.fixture(scope="session")
def ref_controller(ref_plant):
    return synthesize_lqg(
        LqgConfig(
            plant=to_state_space(ref_plant.delay_free()),
            design_Q=DESIGN_Q,
            design_gamma=DESIGN_GAMMA,
            design_omega_i=OMEGA_M,
            design_R=R_REF,
            mu0=MU0,
            x0=X0,
        )
    )
