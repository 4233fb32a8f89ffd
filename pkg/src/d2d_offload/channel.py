"""Deterministic distance-to-gain laws used for neighbor ranking and power control.

A channel model maps distance d (m) to a nominal channel gain, expressed in dB
as ``g_db(d)``.  Every model must be strictly decreasing in d and invertible;
analytic power integrals additionally need the derivative of ``g_db``.
Models are immutable and shareable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

LN10 = np.log(10.0)

__all__ = [
    "ChannelModel",
    "LogDistanceChannel",
    "gain_linear",
    "gain_linear_inverse",
    "gain_linear_derivative",
    "bisect_g_db_inverse",
    "make_channel",
    "CHANNEL_KINDS",
]


class ChannelModel:
    """Interface of a deterministic, strictly decreasing gain law."""

    def g_db(self, d):
        """Channel gain in dB at distance d (m)."""
        raise NotImplementedError

    def g_db_inverse(self, y):
        """Distance d (m) such that g_db(d) == y.

        The default resolves the inverse by bisection; models with a closed
        form should override it.
        """
        return bisect_g_db_inverse(self, y)

    def g_db_derivative(self, d):
        """d/dd of g_db, in dB/m (negative everywhere)."""
        raise NotImplementedError


@dataclass(frozen=True)
class LogDistanceChannel(ChannelModel):
    """Log-distance law g_db(d) = -(pl0_db + 10 n log10(d / 1 m)).

    The default parameters approximate an urban-microcell line-of-sight fit
    around 2.3 GHz.  ``freq_ghz`` is informational only.
    """

    pl0_db: float = 34.23   # dB, path loss at 1 m
    n: float = 2.27         # path-loss exponent
    freq_ghz: float = 2.3

    def __post_init__(self):
        if not self.n > 0:
            raise DomainError("path-loss exponent must be positive")

    def g_db(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise DomainError("distance must be positive")
        out = -(self.pl0_db + 10.0 * self.n * np.log10(d))
        return out if out.ndim else float(out)

    def g_db_inverse(self, y):
        y = np.asarray(y, dtype=float)
        out = 10.0 ** (-(y + self.pl0_db) / (10.0 * self.n))
        return out if out.ndim else float(out)

    def g_db_derivative(self, d):
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise DomainError("distance must be positive")
        out = -10.0 * self.n / (d * LN10)
        return out if out.ndim else float(out)


def gain_linear(ch: ChannelModel, d) -> float | np.ndarray:
    """Dimensionless channel gain 10**(g_db(d)/10); strictly decreasing in d."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise DomainError("distance must be positive")
    out = 10.0 ** (np.asarray(ch.g_db(d), dtype=float) / 10.0)
    return out if out.ndim else float(out)


def gain_linear_inverse(ch: ChannelModel, g) -> float | np.ndarray:
    """Distance at which the linear gain equals g."""
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0):
        raise DomainError("linear gain must be positive")
    out = np.asarray(ch.g_db_inverse(10.0 * np.log10(g)), dtype=float)
    return out if out.ndim else float(out)


def gain_linear_derivative(ch: ChannelModel, d) -> float | np.ndarray:
    """d/dd of the linear gain (negative): g(d) * ln(10)/10 * g_db'(d)."""
    g = gain_linear(ch, d)
    out = np.asarray(g * (LN10 / 10.0) * np.asarray(ch.g_db_derivative(d), dtype=float))
    return out if out.ndim else float(out)


def bisect_g_db_inverse(ch: ChannelModel, y, d_lo: float = 1e-6, d_hi: float = 1e7,
                        tol: float = 1e-10) -> float | np.ndarray:
    """Invert g_db by bisection on [d_lo, d_hi] to an absolute tolerance in meters.

    Relies only on strict monotonicity of g_db.
    """
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty_like(y_arr)
    for i, target in enumerate(y_arr):
        lo, hi = d_lo, d_hi
        if not (ch.g_db(hi) <= target <= ch.g_db(lo)):
            raise DomainError(f"target gain {target} dB outside bracket [{d_lo}, {d_hi}] m")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if ch.g_db(mid) >= target:
                lo = mid
            else:
                hi = mid
        out[i] = 0.5 * (lo + hi)
    return out if np.ndim(y) else float(out[0])


CHANNEL_KINDS = {
    "log_distance": LogDistanceChannel,
}


def make_channel(kind: str, **params) -> ChannelModel:
    """Build a registered channel model from config-style keyword parameters."""
    try:
        cls = CHANNEL_KINDS[kind]
    except KeyError:
        raise ConfigError(
            f"unknown channel kind {kind!r}; known kinds: {sorted(CHANNEL_KINDS)}"
        ) from None
    return cls(**params)
