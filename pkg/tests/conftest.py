import numpy as np
import pytest

from d2d_offload.channel import LogDistanceChannel
from d2d_offload.domain import (
    ExplicitPopularity,
    RadioParams,
    ScenarioParams,
    UniformSpeed,
    ZipfPopularity,
)


def make_scenario(n_contents=1000, lambda_Z=1 / 6, tau_c=20.0, tau_s=600.0,
                  lambda_t=1 / 3, v_a=6.0, v_b=16.0, lane_gap=10.0,
                  popularity=None):
    return ScenarioParams(
        lambda_t=lambda_t,
        speed=UniformSpeed(v_a, v_b),
        lambda_Z=lambda_Z,
        popularity=popularity or ZipfPopularity(1.1, n_contents),
        tau_c=tau_c,
        tau_s=tau_s,
        roi_length=1800.0,
        lane_gap=lane_gap,
    )


def make_radio(d_max=100.0, link_margin_db=15.0):
    return RadioParams(
        e_bar=5.0,
        w_c=200e3 / 12,
        n0_dbm_hz=-174.0,
        noise_figure_db=10.0,
        link_margin_db=link_margin_db,
        d_max=d_max,
        d_max_i2d=300.0,
    )


def tiny_popularity():
    """Two-content library with negligible request rate; cheap warm starts."""
    return ExplicitPopularity(np.array([0.5, 0.5]))


@pytest.fixture(scope="session")
def desk_scenario():
    return make_scenario(n_contents=1000)


@pytest.fixture(scope="session")
def paper_scenario():
    return make_scenario(n_contents=10_000)


@pytest.fixture(scope="session")
def radio():
    return make_radio()


@pytest.fixture(scope="session")
def channel():
    return LogDistanceChannel()
