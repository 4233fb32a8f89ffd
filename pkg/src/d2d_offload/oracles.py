"""Independent Monte Carlo estimators used to validate the analytic module.

Nothing here calls the analytic code: every estimator builds on the raw
system assumptions (arrival process, speed law, request process, gain law)
with naive event-scan algorithms, trading speed for independence and
clarity.  Estimates come back with a standard error so tests can assert
agreement at a stated confidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelModel
from .domain import RadioParams, SpeedDistribution, sigma_c_squared
from .errors import DomainError

__all__ = [
    "OracleEstimate",
    "mc_spatial_density",
    "mc_encounter_rate",
    "mc_transform_mean",
    "mc_cache_occupancy",
    "truncated_nn_sampler",
    "uniform_distance_sampler",
]


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    std_error: float
    sample_count: int
    seed: int
    stationary: bool = True   # False when the horizon was too short to trust

    def __post_init__(self):
        if self.std_error < 0 or self.sample_count <= 0:
            raise DomainError("std_error must be >= 0 and sample_count positive")


def _batch_mean_se(values: np.ndarray, n_batches: int = 20) -> tuple[float, float]:
    """Mean and a batch-means standard error robust to serial correlation."""
    n = values.size
    n_batches = min(n_batches, n)
    batches = np.array_split(values, n_batches)
    means = np.array([b.mean() for b in batches])
    se = means.std(ddof=1) / np.sqrt(len(means)) if len(means) > 1 else 0.0
    return float(values.mean()), float(se)


def _simulate_road(lambda_t: float, speed: SpeedDistribution, road_length: float,
                   horizon_s: float, rng: np.random.Generator):
    """Arrival times, entry positions, signed speeds, and presence intervals of
    every vehicle entering a road of the given length during [0, horizon]."""
    n = rng.poisson(lambda_t * horizon_s)
    t_in = np.sort(rng.uniform(0.0, horizon_s, size=n))
    left = rng.random(n) < 0.5
    mags = speed.sample_magnitude(rng, n)
    v = np.where(left, mags, -mags)
    x_in = np.where(left, 0.0, road_length)
    t_out = t_in + road_length / mags
    return t_in, t_out, x_in, v


def mc_spatial_density(lambda_t: float, speed: SpeedDistribution, horizon_s: float,
                       seed: int, road_length: float = 2000.0) -> OracleEstimate:
    """Vehicles per meter in steady state, from a long arrival simulation.

    Counts the vehicles present on the road at regular snapshot instants after
    a warm-up of one slowest-vehicle transit; the standard error uses batch
    means to absorb the serial correlation between snapshots.
    """
    if lambda_t == 0:
        return OracleEstimate(0.0, 0.0, 1, seed)
    rng = np.random.default_rng(seed)
    t_in, t_out, _, _ = _simulate_road(lambda_t, speed, road_length, horizon_s, rng)
    warmup = road_length / speed.min_abs_speed()
    stationary = horizon_s > 2.0 * warmup
    times = np.arange(warmup, horizon_s, 20.0)
    if times.size == 0:
        times = np.array([horizon_s])
        stationary = False
    counts = np.array([np.count_nonzero((t_in <= t) & (t < t_out)) for t in times],
                      dtype=float)
    mean, se = _batch_mean_se(counts, n_batches=10)
    return OracleEstimate(mean / road_length, se / road_length, counts.size, seed,
                          stationary=stationary)


def mc_encounter_rate(v_star: float, lambda_t: float, speed: SpeedDistribution,
                      horizon_s: float, seed: int, d_max: float = 100.0,
                      road_length: float = 1500.0) -> OracleEstimate:
    """Rate at which vehicles cross the boundary point carried at distance d_max
    ahead of a probe moving at v_star.

    Ghost probes traverse the simulated road one after another; for each
    vehicle/probe pair the crossing instant of the displaced point solves a
    linear equation exactly, so no time discretization enters.  Probes sharing
    road traffic are correlated, hence the batch-means error.
    """
    rng = np.random.default_rng(seed)
    t_in, t_out, x_in, v = _simulate_road(lambda_t, speed, road_length, horizon_s, rng)
    warmup = road_length / speed.min_abs_speed()
    stationary = horizon_s > 2.0 * warmup

    # Each probe rides the road once; crossings with the displaced point are
    # only observable while that point itself is on the road, so the probe's
    # observation window trims d_max off the raw transit.
    if v_star > 0:
        x0, t_obs = 0.0, (road_length - d_max) / v_star
    elif v_star < 0:
        x0, t_obs = road_length - d_max, (road_length - d_max) / (-v_star)
    else:
        x0, t_obs = road_length / 2.0 - d_max, 200.0   # static probe mid-road
    if t_obs <= 0:
        raise DomainError("road too short for the requested displacement")
    probe_starts = np.arange(warmup, horizon_s - t_obs, t_obs / 2.0)
    if probe_starts.size == 0:
        raise DomainError("horizon too short for a single probe transit")

    crossings = np.zeros(probe_starts.size)
    for i, t0 in enumerate(probe_starts):
        # displaced point trajectory: q(t) = x0 + v_star (t - t0) + d_max
        # vehicle j trajectory:       x_j(t) = x_in_j + v_j (t - t_in_j)
        denom = v - v_star
        ok = denom != 0
        t_cross = np.where(
            ok,
            (x0 - v_star * t0 + d_max - x_in + v * t_in) / np.where(ok, denom, 1.0),
            -np.inf,
        )
        alive = ok & (t_cross >= t_in) & (t_cross < t_out)
        inside = (t_cross >= t0) & (t_cross < t0 + t_obs)
        crossings[i] = np.count_nonzero(alive & inside)
    rates = crossings / t_obs
    mean, se = _batch_mean_se(rates, n_batches=10)
    return OracleEstimate(mean, se, int(crossings.sum()) or 1, seed, stationary=stationary)


def _power_law(d: np.ndarray, radio: RadioParams, ch: ChannelModel) -> np.ndarray:
    """Transmit power by the raw link budget (margin * noise * (2^rate - 1) / gain)."""
    p0 = sigma_c_squared(radio) * (2.0 ** radio.e_bar - 1.0)
    g = 10.0 ** (np.asarray(ch.g_db(d), dtype=float) / 10.0)
    return radio.link_margin_linear * p0 / g


def truncated_nn_sampler(rho_z: float, d_max: float):
    """Sampler of nearest-holder distances conditioned below d_max."""
    if rho_z <= 0 or d_max <= 0:
        raise DomainError("rho_z and d_max must be positive")
    cap = -np.expm1(-2.0 * rho_z * d_max)

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        return -np.log1p(-u * cap) / (2.0 * rho_z)

    return sample


def uniform_distance_sampler(d_hi: float):
    """Sampler of distances uniform on [0, d_hi] (infrastructure-delivery law)."""
    if d_hi <= 0:
        raise DomainError("d_hi must be positive")

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(0.0, d_hi, n)

    return sample


def mc_transform_mean(dist_sampler, radio: RadioParams, ch: ChannelModel,
                      n_samples: int, seed: int) -> OracleEstimate:
    """Sample mean of the power law applied to sampled distances."""
    rng = np.random.default_rng(seed)
    d = np.asarray(dist_sampler(rng, n_samples), dtype=float)
    y = _power_law(np.maximum(d, 1e-12), radio, ch)
    return OracleEstimate(float(y.mean()), float(y.std(ddof=1) / np.sqrt(n_samples)),
                          n_samples, seed)


def mc_cache_occupancy(lambda_z: float, tau_s: float, tau_c: float, horizon_s: float,
                       seed: int, delivery_delay: str = "content_timeout") -> OracleEstimate:
    """Fraction of time one device caches one content, from its request process.

    Requests form a Poisson stream.  A request finding the content absent
    triggers a delivery after the chosen delay ('instant' or
    'content_timeout'); a request finding it present resets the retention
    deadline.  Either variant must fall inside the occupancy bounds used by
    the model.
    """
    if delivery_delay not in ("instant", "content_timeout"):
        raise DomainError("delivery_delay must be 'instant' or 'content_timeout'")
    if lambda_z < 0:
        raise DomainError("lambda_z must be non-negative")
    rng = np.random.default_rng(seed)
    if lambda_z == 0:
        return OracleEstimate(0.0, 0.0, 1, seed)
    delay = 0.0 if delivery_delay == "instant" else tau_c
    n = rng.poisson(lambda_z * horizon_s)
    requests = np.sort(rng.uniform(0.0, horizon_s, size=n))

    n_batches = 20
    batch_edges = np.linspace(0.0, horizon_s, n_batches + 1)
    batch_cover = np.zeros(n_batches)
    deadline = -np.inf
    for r in requests:
        start = r if r < deadline else r + delay   # reset when present, deliver when absent
        new_deadline = start + tau_s
        lo = max(start, deadline)                  # only the newly covered stretch
        hi = min(new_deadline, horizon_s)
        if hi > lo:
            for k in range(n_batches):
                seg_lo = max(lo, batch_edges[k])
                seg_hi = min(hi, batch_edges[k + 1])
                if seg_hi > seg_lo:
                    batch_cover[k] += seg_hi - seg_lo
        deadline = max(deadline, new_deadline)

    batch_frac = batch_cover / np.diff(batch_edges)
    frac = batch_cover.sum() / horizon_s
    se = batch_frac.std(ddof=1) / np.sqrt(n_batches)
    return OracleEstimate(float(frac), float(se), max(n, 1), seed)
