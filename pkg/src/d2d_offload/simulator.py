"""Protocol-faithful discrete-event simulation of the content dissemination system.

Vehicles enter a street chunk from both ends, traverse it at constant signed
speed on one of two lanes, request contents, cache received contents for a
sharing timeout, and serve nearby requesters.  A request is served

  * immediately, by the nearest cache holder within the D2D range at request
    time (exact-distance check, closed ball, 2-D distance including the lane
    offset);
  * delayed, at the first control-interval tick at which some holder is
    within range (power booked at the range boundary, the true separation is
    recorded as the transmission distance);
  * by the infrastructure, exactly at the content timeout, from the nearest
    eNodeB (1-D distance), if no holder was found in time;
  * not at all, when the requester already caches the content ("repeated"):
    the sharing timeout of that entry is reset and no transmission happens.

Metrics count non-repeated deliveries whose receiver sits inside the
measurement region (the two central cells by default).  A replication is
strictly sequential and fully determined by its seed; independent
replications share no mutable state.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .analytic import spatial_density, subcarrier_tx_power
from .channel import ChannelModel
from .domain import RadioParams, ScenarioParams, SpeedDistribution, TabulatedSpeed, UniformSpeed
from .errors import DomainError

__all__ = [
    "SimConfig",
    "Vehicle",
    "PendingRequest",
    "DeliveryRecord",
    "SimMetrics",
    "SimWorld",
    "AggregateStats",
    "Replication",
    "warm_start",
    "nearest_holder",
    "run_replication",
    "run_replications",
    "aggregate",
    "measurement_region",
    "enb_positions",
]

MODE_IMM = "imm"
MODE_DELAYED = "delayed"
MODE_I2D = "i2d"
MODE_REPEATED = "repeated"

# event priorities for simultaneous timestamps; exits come last so that
# content timeouts landing exactly on an exit are still served
_EV_ARRIVAL = 0
_EV_TIMEOUT = 1
_EV_TICK = 2
_EV_EXPIRY = 3
_EV_REQUEST = 4
_EV_EXIT = 5

_MIN_TX_DISTANCE = 1e-9  # m, clamp for the power law at coincident positions


@dataclass
class SimConfig:
    """Run-level simulation settings."""

    duration_s: float
    ci_length_s: float = 1.0
    replications: int = 10
    master_seed: int = 1
    measurement_region: tuple[float, float] | None = None  # None: two central cells
    prbs_per_delivery: int = 400
    prb_budget_per_ci: int = 50_000
    dmax_grid: tuple[float, ...] = ()

    def __post_init__(self):
        if not self.duration_s > 0:
            raise DomainError("duration_s must be positive")
        if not self.ci_length_s > 0:
            raise DomainError("ci_length_s must be positive")
        if self.replications < 1:
            raise DomainError("replications must be >= 1")


@dataclass
class Vehicle:
    id: int
    x0: float          # position at time t0, m
    t0: float
    speed: float       # signed, m/s
    lane: float        # lateral offset, m
    exit_time: float
    cache: dict[int, float] = field(default_factory=dict)  # content -> sharing deadline

    def position(self, t: float) -> float:
        return self.x0 + self.speed * (t - self.t0)


@dataclass
class PendingRequest:
    request_id: int
    requester: int
    content: int
    issue_time: float
    content_deadline: float
    state: str = "waiting"   # waiting | served_imm | served_delayed | served_i2d


@dataclass
class DeliveryRecord:
    request_id: int
    content: int
    requester: int
    mode: str
    issue_time: float
    serve_time: float
    tx_distance: float      # m; true separation (NaN for repeated)
    tx_power_mw: float      # per subcarrier; booked at the range for delayed; NaN for repeated
    in_measurement_region: bool


@dataclass
class SimMetrics:
    """Per-replication outcome; mode counts and the efficiency/power metrics are
    restricted to deliveries received inside the measurement region."""

    replication: int
    seed: int
    n_requests: int = 0
    n_repeated: int = 0
    n_imm: int = 0
    n_del: int = 0
    n_i2d: int = 0
    max_deliveries_per_ci: int = 0
    prb_budget_violations: int = 0

    @property
    def n_non_repeated(self) -> int:
        return self.n_imm + self.n_del + self.n_i2d

    @property
    def offloading_efficiency(self) -> float:
        n = self.n_non_repeated
        return (self.n_imm + self.n_del) / n if n else math.nan

    mean_tx_power_mw: float = math.nan


@dataclass
class SimWorld:
    """Mutable simulation state: active vehicles and the current clock."""

    vehicles: dict[int, Vehicle]
    time: float = 0.0
    next_vehicle_id: int = 0


def enb_positions(scenario: ScenarioParams, radio: RadioParams) -> np.ndarray:
    """eNodeB sites spaced two cell radii apart, covering the street."""
    step = 2.0 * radio.d_max_i2d
    n = int(round(scenario.roi_length / step))
    return np.arange(n + 1) * step


def measurement_region(scenario: ScenarioParams, radio: RadioParams,
                       config: SimConfig) -> tuple[float, float]:
    """Explicit region from the config, else the two central cells."""
    if config.measurement_region is not None:
        lo, hi = config.measurement_region
        if not 0 <= lo < hi <= scenario.roi_length:
            raise DomainError(f"measurement region [{lo}, {hi}] outside the street")
        return float(lo), float(hi)
    center = scenario.roi_length / 2.0
    half = 2.0 * radio.d_max_i2d
    return max(0.0, center - half), min(scenario.roi_length, center + half)


# ---------------------------------------------------------------------------
# Warm start
# ---------------------------------------------------------------------------

def _cache_seed_probabilities(scenario: ScenarioParams) -> tuple[np.ndarray, np.ndarray]:
    lam = scenario.popularity.pmf_vector * scenario.lambda_Z
    q = -np.expm1(-lam * (scenario.tau_s - scenario.tau_c))
    return lam, q


def _sample_sharing_deadlines(now: float, lam: np.ndarray, tau_c: float, tau_s: float,
                              rng: np.random.Generator) -> np.ndarray:
    """Residual sharing deadlines for freshly seeded cache entries.

    The age of the seeding request is the age of the most recent request given
    one occurred in the window [tau_c, tau_s] before now, i.e. an exponential
    truncated to that window; the entry expires a full sharing timeout after
    that request.
    """
    u = rng.random(lam.size)
    lam = np.maximum(lam, 1e-300)
    ec = np.exp(-lam * tau_c)
    es = np.exp(-lam * tau_s)
    age = -np.log(ec - u * (ec - es)) / lam
    return now - age + tau_s


def _seed_vehicle_cache(vehicle: Vehicle, now: float, scenario: ScenarioParams,
                        lam: np.ndarray, q: np.ndarray, rng: np.random.Generator) -> None:
    mask = rng.random(q.size) < q
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return
    deadlines = _sample_sharing_deadlines(now, lam[idx], scenario.tau_c, scenario.tau_s, rng)
    vehicle.cache = {int(z + 1): float(t) for z, t in zip(idx, deadlines)}


def _lane_of(speed: float, lane_gap: float) -> float:
    return (lane_gap / 2.0) if speed > 0 else (-lane_gap / 2.0)


def _exit_time_of(x: float, speed: float, t: float, roi_length: float) -> float:
    return t + ((roi_length - x) / speed if speed > 0 else x / (-speed))


def _sample_resident_speeds(speed: SpeedDistribution, rng: np.random.Generator,
                            n: int) -> np.ndarray:
    """Signed speeds of vehicles present on the road at a random instant.

    Residents are dwell-time biased: a vehicle at speed v spends 1/|v| per
    meter, so the resident speed density is proportional to pdf(v)/|v|.
    Sampling the arrival pdf directly would overweight fast vehicles and make
    the warm-started population decay below the stationary density.
    """
    if isinstance(speed, UniformSpeed):
        sign = rng.integers(0, 2, size=n) * 2 - 1
        mag = speed.v_a * (speed.v_b / speed.v_a) ** rng.random(n)
        return sign * mag
    if isinstance(speed, TabulatedSpeed):
        biased = TabulatedSpeed(speed.speeds, speed.densities / np.abs(speed.speeds))
        return biased.sample(rng, n)
    raise DomainError(f"resident-speed sampling not implemented for {type(speed).__name__}")


def warm_start(scenario: ScenarioParams, seed) -> SimWorld:
    """Stationary initial state: Poisson vehicle count at the model density,
    uniform positions, resident (dwell-time biased) speeds, and caches seeded
    per content with the conservative cache-occupancy probability."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rho = spatial_density(scenario.lambda_t, scenario.speed)
    n = int(rng.poisson(rho * scenario.roi_length))
    lam, q = _cache_seed_probabilities(scenario)
    world = SimWorld(vehicles={})
    positions = rng.uniform(0.0, scenario.roi_length, size=n)
    speeds = _sample_resident_speeds(scenario.speed, rng, n)
    for i in range(n):
        v = Vehicle(
            id=i, x0=float(positions[i]), t0=0.0, speed=float(speeds[i]),
            lane=_lane_of(float(speeds[i]), scenario.lane_gap),
            exit_time=_exit_time_of(float(positions[i]), float(speeds[i]), 0.0,
                                    scenario.roi_length),
        )
        _seed_vehicle_cache(v, 0.0, scenario, lam, q, rng)
        world.vehicles[i] = v
    world.next_vehicle_id = n
    return world


# ---------------------------------------------------------------------------
# Neighbor search
# ---------------------------------------------------------------------------

def _snapshot(world: SimWorld):
    ids = np.fromiter(world.vehicles.keys(), dtype=np.int64, count=len(world.vehicles))
    t = world.time
    xs = np.array([world.vehicles[int(i)].position(t) for i in ids])
    lanes = np.array([world.vehicles[int(i)].lane for i in ids])
    return ids, xs, lanes


def _nearest_from_snapshot(world: SimWorld, ids, xs, lanes, requester: int,
                           z: int, d_max: float):
    k = world.vehicles[requester]
    xk = k.position(world.time)
    d2 = (xs - xk) ** 2 + (lanes - k.lane) ** 2
    within = (d2 <= d_max * d_max) & (ids != requester)
    best = None
    for j in np.nonzero(within)[0]:
        vid = int(ids[j])
        if z in world.vehicles[vid].cache:
            key = (float(d2[j]), vid)
            if best is None or key < best:
                best = key
    if best is None:
        return None, math.nan
    return best[1], math.sqrt(best[0])


def nearest_holder(world: SimWorld, requester: int, z: int, d_max: float):
    """Nearest device caching z within the closed ball of radius d_max around the
    requester (2-D distance including the lane offset); ties break on the lower
    id.  Returns the device id or None."""
    ids, xs, lanes = _snapshot(world)
    holder, _ = _nearest_from_snapshot(world, ids, xs, lanes, requester, z, d_max)
    return holder


# ---------------------------------------------------------------------------
# Replication engine
# ---------------------------------------------------------------------------

class Replication:
    """One simulation run.  Use :func:`run_replication` unless a test needs to
    drive the event handlers directly."""

    def __init__(self, scenario: ScenarioParams, radio: RadioParams, ch: ChannelModel,
                 config: SimConfig, replication: int = 0, seed=None):
        self.scenario = scenario
        self.radio = radio
        self.ch = ch
        self.config = config
        if seed is None:
            seed = config.master_seed
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        streams = ss.spawn(5)
        self.rng_arrivals = np.random.default_rng(streams[0])
        self.rng_speeds = np.random.default_rng(streams[1])
        self.rng_requests = np.random.default_rng(streams[2])
        self.rng_content = np.random.default_rng(streams[3])
        self.rng_warmstart = np.random.default_rng(streams[4])

        self.metrics = SimMetrics(replication=replication, seed=config.master_seed)
        self.records: list[DeliveryRecord] = []
        self.world = SimWorld(vehicles={})
        self.pending: dict[int, PendingRequest] = {}
        self.waiting: list[int] = []    # request ids in issue order
        self.region = measurement_region(scenario, radio, config)
        self.enbs = enb_positions(scenario, radio)
        self._lam_seed, self._q_seed = _cache_seed_probabilities(scenario)
        self._heap: list = []
        self._seq = 0
        self._next_request_id = 0
        self._ci_deliveries: dict[int, int] = {}
        self._power_sum = 0.0
        self._power_count = 0

    # -- plumbing ----------------------------------------------------------

    def _push(self, time: float, prio: int, kind: str, data=None):
        heapq.heappush(self._heap, (time, prio, self._seq, kind, data))
        self._seq += 1

    def _in_region(self, x: float) -> bool:
        return self.region[0] <= x <= self.region[1]

    def _tx_power(self, d: float) -> float:
        return float(subcarrier_tx_power(max(d, _MIN_TX_DISTANCE), self.radio, self.ch))

    def _count_ci_delivery(self, t: float):
        ci = int(t // self.config.ci_length_s)
        n = self._ci_deliveries.get(ci, 0) + 1
        self._ci_deliveries[ci] = n
        if n > self.metrics.max_deliveries_per_ci:
            self.metrics.max_deliveries_per_ci = n
        if n * self.config.prbs_per_delivery > self.config.prb_budget_per_ci:
            self.metrics.prb_budget_violations += 1

    def _record(self, req: PendingRequest | None, mode: str, t: float,
                distance: float, power: float, requester: int, content: int,
                issue_time: float):
        x = self.world.vehicles[requester].position(t)
        in_region = self._in_region(x)
        self.records.append(DeliveryRecord(
            request_id=req.request_id if req else -1,
            content=content, requester=requester, mode=mode,
            issue_time=issue_time, serve_time=t,
            tx_distance=distance, tx_power_mw=power,
            in_measurement_region=in_region,
        ))
        if mode == MODE_REPEATED:
            return
        self._count_ci_delivery(t)
        if in_region:
            if mode == MODE_IMM:
                self.metrics.n_imm += 1
            elif mode == MODE_DELAYED:
                self.metrics.n_del += 1
            else:
                self.metrics.n_i2d += 1
            self._power_sum += power
            self._power_count += 1

    def _add_to_cache(self, vehicle: Vehicle, z: int, t: float):
        deadline = t + self.scenario.tau_s
        vehicle.cache[z] = deadline
        self._push(deadline, _EV_EXPIRY, "expiry", (vehicle.id, z, deadline))

    def _schedule_next_request(self, vehicle: Vehicle, now: float):
        if self.scenario.lambda_Z <= 0:
            return
        t = now + self.rng_requests.exponential(1.0 / self.scenario.lambda_Z)
        # a request must be resolvable before the requester leaves the street,
        # and no new requests are issued after the nominal horizon
        if t > self.config.duration_s or t + self.scenario.tau_c > vehicle.exit_time:
            return
        self._push(t, _EV_REQUEST, "request", vehicle.id)

    def _schedule_next_arrival(self, now: float):
        if self.scenario.lambda_t <= 0:
            return
        t = now + self.rng_arrivals.exponential(1.0 / self.scenario.lambda_t)
        if t <= self.config.duration_s:
            self._push(t, _EV_ARRIVAL, "arrival", None)

    # -- event handlers ----------------------------------------------------

    def handle_arrival(self, t: float):
        side_left = self.rng_arrivals.random() < 0.5
        mag = float(self.scenario.speed.sample_magnitude(self.rng_speeds, 1)[0])
        speed = mag if side_left else -mag
        x = 0.0 if side_left else self.scenario.roi_length
        v = Vehicle(
            id=self.world.next_vehicle_id, x0=x, t0=t, speed=speed,
            lane=_lane_of(speed, self.scenario.lane_gap),
            exit_time=_exit_time_of(x, speed, t, self.scenario.roi_length),
        )
        self.world.next_vehicle_id += 1
        # entrants arrive with stationary caches: they were driving and
        # requesting before reaching the street chunk
        _seed_vehicle_cache(v, t, self.scenario, self._lam_seed, self._q_seed,
                            self.rng_warmstart)
        for z, deadline in v.cache.items():
            self._push(deadline, _EV_EXPIRY, "expiry", (v.id, z, deadline))
        self.world.vehicles[v.id] = v
        self._push(v.exit_time, _EV_EXIT, "exit", v.id)
        self._schedule_next_request(v, t)
        self._schedule_next_arrival(t)

    def handle_request(self, t: float, vehicle_id: int):
        v = self.world.vehicles[vehicle_id]
        z = int(self.scenario.popularity.sample(self.rng_content, 1)[0])
        self.metrics.n_requests += 1
        if z in v.cache:
            # repeated: reset the sharing timeout, no transmission
            deadline = t + self.scenario.tau_s
            v.cache[z] = deadline
            self._push(deadline, _EV_EXPIRY, "expiry", (vehicle_id, z, deadline))
            self.metrics.n_repeated += 1
            self._record(None, MODE_REPEATED, t, math.nan, math.nan,
                         vehicle_id, z, t)
        else:
            req = PendingRequest(
                request_id=self._next_request_id, requester=vehicle_id, content=z,
                issue_time=t, content_deadline=t + self.scenario.tau_c,
            )
            self._next_request_id += 1
            ids, xs, lanes = _snapshot(self.world)
            holder, dist = _nearest_from_snapshot(self.world, ids, xs, lanes,
                                                  vehicle_id, z, self.radio.d_max)
            if holder is not None:
                req.state = "served_imm"
                self._record(req, MODE_IMM, t, dist, self._tx_power(dist),
                             vehicle_id, z, t)
                self._add_to_cache(v, z, t)
            else:
                self.pending[req.request_id] = req
                self.waiting.append(req.request_id)
                self._push(req.content_deadline, _EV_TIMEOUT, "timeout", req.request_id)
        self._schedule_next_request(v, t)

    def handle_tick(self, t: float):
        if self.waiting:
            ids, xs, lanes = _snapshot(self.world)
            still = []
            for rid in self.waiting:
                req = self.pending.get(rid)
                if req is None or req.state != "waiting":
                    continue
                holder, dist = _nearest_from_snapshot(
                    self.world, ids, xs, lanes, req.requester, req.content,
                    self.radio.d_max)
                if holder is None:
                    still.append(rid)
                    continue
                req.state = "served_delayed"
                del self.pending[rid]
                # power is booked at the range boundary; the true separation
                # at the serving tick is what gets recorded as the distance
                power = self._tx_power(self.radio.d_max)
                self._record(req, MODE_DELAYED, t, dist, power,
                             req.requester, req.content, req.issue_time)
                self._add_to_cache(self.world.vehicles[req.requester], req.content, t)
            self.waiting = still
        t_next = t + self.config.ci_length_s
        if t_next <= self.config.duration_s or self.waiting:
            self._push(t_next, _EV_TICK, "tick", None)

    def handle_timeout(self, t: float, request_id: int):
        req = self.pending.pop(request_id, None)
        if req is None or req.state != "waiting":
            return
        req.state = "served_i2d"
        v = self.world.vehicles[req.requester]
        x = v.position(t)
        dist = float(np.min(np.abs(self.enbs - x)))
        self._record(req, MODE_I2D, t, dist, self._tx_power(dist),
                     req.requester, req.content, req.issue_time)
        self._add_to_cache(v, req.content, t)

    def handle_expiry(self, t: float, vehicle_id: int, z: int, scheduled: float):
        v = self.world.vehicles.get(vehicle_id)
        if v is None:
            return
        deadline = v.cache.get(z)
        if deadline is not None and deadline <= scheduled:
            del v.cache[z]

    def handle_exit(self, t: float, vehicle_id: int):
        # request scheduling guarantees no waiting request survives its
        # requester's exit
        v = self.world.vehicles.pop(vehicle_id, None)
        assert v is not None

    # -- main loop ---------------------------------------------------------

    def run(self):
        world = warm_start(self.scenario, self.rng_warmstart)
        self.world = world
        for v in world.vehicles.values():
            self._push(v.exit_time, _EV_EXIT, "exit", v.id)
            for z, deadline in v.cache.items():
                self._push(deadline, _EV_EXPIRY, "expiry", (v.id, z, deadline))
            self._schedule_next_request(v, 0.0)
        self._schedule_next_arrival(0.0)
        self._push(self.config.ci_length_s, _EV_TICK, "tick", None)

        while self._heap:
            t, _prio, _seq, kind, data = heapq.heappop(self._heap)
            if t > self.config.duration_s and not self.waiting:
                break
            self.world.time = t
            if kind == "arrival":
                self.handle_arrival(t)
            elif kind == "request":
                self.handle_request(t, data)
            elif kind == "tick":
                self.handle_tick(t)
            elif kind == "timeout":
                self.handle_timeout(t, data)
            elif kind == "expiry":
                self.handle_expiry(t, *data)
            elif kind == "exit":
                self.handle_exit(t, data)

        if self._power_count:
            self.metrics.mean_tx_power_mw = self._power_sum / self._power_count
        return self.metrics, self.records


def run_replication(scenario: ScenarioParams, radio: RadioParams, ch: ChannelModel,
                    config: SimConfig, replication: int = 0, seed=None):
    """Run one replication; returns (SimMetrics, delivery records)."""
    return Replication(scenario, radio, ch, config, replication, seed).run()


def run_replications(scenario: ScenarioParams, radio: RadioParams, ch: ChannelModel,
                     config: SimConfig) -> list[tuple[SimMetrics, list[DeliveryRecord]]]:
    """Run all replications with seeds split deterministically from the master seed."""
    children = np.random.SeedSequence(config.master_seed).spawn(config.replications)
    return [
        run_replication(scenario, radio, ch, config, replication=i, seed=children[i])
        for i in range(config.replications)
    ]


@dataclass(frozen=True)
class AggregateStats:
    """Across-replication mean and 95% confidence half-width per metric."""

    n: int
    efficiency_mean: float
    efficiency_ci95: float
    power_mean_mw: float
    power_ci95_mw: float


def aggregate(metrics: list[SimMetrics]) -> AggregateStats:
    """Student-t 95% confidence summary over replications."""
    if len(metrics) < 2:
        raise DomainError("need at least 2 replications to aggregate")
    eff = np.array([m.offloading_efficiency for m in metrics])
    pow_ = np.array([m.mean_tx_power_mw for m in metrics])
    n = len(metrics)
    tq = stats.t.ppf(0.975, n - 1)
    return AggregateStats(
        n=n,
        efficiency_mean=float(eff.mean()),
        efficiency_ci95=float(tq * eff.std(ddof=1) / math.sqrt(n)),
        power_mean_mw=float(pow_.mean()),
        power_ci95_mw=float(tq * pow_.std(ddof=1) / math.sqrt(n)),
    )
