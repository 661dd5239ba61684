import numpy as np
import pytest
from dataclasses import replace

from mpir import ChannelParams, SystemConfig, make_mhp

DT = 0.02
TAU_P = 0.05


@pytest.fixture(scope="session")
def mhp4():
    return make_mhp(4, TAU_P, DT)


@pytest.fixture(scope="session")
def mhp5():
    return make_mhp(5, TAU_P, DT)


@pytest.fixture(scope="session")
def reference_config():
    """The 20-user double-pulse system the experiments in this suite use:
    K=20, N_f=2, N_c=40, N_h=3, T_c=1 ns, interferers at 5x power."""
    return SystemConfig(
        n_users=20,
        frames_per_symbol=2,
        chips_per_frame=40,
        hop_positions=3,
        pulse_types=2,
        chip_time=1.0,
        noise_sigma=0.0,
        interferer_power=5.0,
    )


@pytest.fixture(scope="session")
def reference_config_single(reference_config):
    return replace(reference_config, pulse_types=1)


@pytest.fixture(scope="session")
def reference_channel():
    """L=20 taps, decay 0.5, log-variance 1, mean arrival 1.5 ns."""
    return ChannelParams(
        n_paths=20, decay_rate=0.5, lognorm_var=1.0, mean_arrival=1.5, power_scale=1.0
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
