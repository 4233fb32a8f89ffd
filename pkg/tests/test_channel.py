import numpy as np
import pytest

from d2d_offload.channel import (
    ChannelModel,
    LogDistanceChannel,
    bisect_g_db_inverse,
    gain_linear,
    gain_linear_derivative,
    gain_linear_inverse,
    make_channel,
)
from d2d_offload.errors import ConfigError, DomainError


class UnitGain(ChannelModel):
    """Flat 0 dB law; only for exercising the dB-to-linear plumbing."""

    def g_db(self, d):
        return np.zeros_like(np.asarray(d, dtype=float)) if np.ndim(d) else 0.0

    def g_db_derivative(self, d):
        return np.zeros_like(np.asarray(d, dtype=float)) if np.ndim(d) else 0.0


def test_gain_identity_case():
    assert gain_linear(UnitGain(), 123.0) == pytest.approx(1.0)


def test_default_model_reference_point():
    ch = LogDistanceChannel()
    assert ch.g_db(100.0) == pytest.approx(-79.63, abs=1e-9)
    assert gain_linear(ch, 100.0) == pytest.approx(1.089e-8, rel=1e-3)


def test_gain_monotone():
    ch = LogDistanceChannel()
    assert gain_linear(ch, 10.0) > gain_linear(ch, 100.0)
    grid = np.geomspace(0.5, 1e4, 300)
    g = ch.g_db(grid)
    assert np.all(np.diff(g) < 0)


def test_domain_errors():
    ch = LogDistanceChannel()
    with pytest.raises(DomainError):
        gain_linear(ch, 0.0)
    with pytest.raises(DomainError):
        gain_linear(ch, -3.0)
    with pytest.raises(DomainError):
        ch.g_db(0.0)


def test_inverse_round_trip():
    ch = LogDistanceChannel()
    for d in np.geomspace(1.0, 1e4, 41):
        assert ch.g_db_inverse(ch.g_db(d)) == pytest.approx(d, rel=1e-9)


def test_derivative_matches_finite_differences():
    ch = LogDistanceChannel()
    for d in np.geomspace(1.0, 1e4, 21):
        h = 1e-6 * d
        fd = (ch.g_db(d + h) - ch.g_db(d - h)) / (2 * h)
        assert ch.g_db_derivative(d) == pytest.approx(fd, rel=1e-6)


def test_linear_gain_helpers():
    ch = LogDistanceChannel()
    d = 42.0
    assert gain_linear_inverse(ch, gain_linear(ch, d)) == pytest.approx(d, rel=1e-9)
    h = 1e-7 * d
    fd = (gain_linear(ch, d + h) - gain_linear(ch, d - h)) / (2 * h)
    assert gain_linear_derivative(ch, d) == pytest.approx(fd, rel=1e-6)
    assert gain_linear_derivative(ch, d) < 0


def test_bisection_matches_closed_form_inverse():
    ch = LogDistanceChannel()
    for d in (1.5, 20.0, 300.0, 5000.0):
        y = ch.g_db(d)
        assert bisect_g_db_inverse(ch, y) == pytest.approx(d, abs=1e-8)


def test_registry():
    ch = make_channel("log_distance", pl0_db=30.0, n=2.0, freq_ghz=5.9)
    assert isinstance(ch, LogDistanceChannel)
    assert ch.n == 2.0
    with pytest.raises(ConfigError):
        make_channel("two_ray")


def test_exponent_must_be_positive():
    with pytest.raises(DomainError):
        LogDistanceChannel(n=0.0)
