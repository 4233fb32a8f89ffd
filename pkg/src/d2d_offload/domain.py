"""Scenario, traffic, popularity, and radio parameters shared by the model and the simulator.

All types are immutable after construction and safe to share across workers.
Units follow SI throughout: meters, seconds, m/s, Hz, and milliwatts for power
(noise densities are configured in dBm/Hz as is customary).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError

__all__ = [
    "SpeedDistribution",
    "UniformSpeed",
    "TabulatedSpeed",
    "PopularityModel",
    "ZipfPopularity",
    "ExplicitPopularity",
    "ScenarioParams",
    "RadioParams",
    "sigma_c_squared",
]


class SpeedDistribution:
    """Two-sided signed-speed distribution of the vehicles.

    The sign of a speed encodes the driving direction.  Subclasses expose the
    two-sided density ``pdf`` and the one-sided (direction-less) density
    ``one_sided_pdf``, plus the support as a list of disjoint intervals so that
    integrals over speed can be split cleanly.
    """

    def pdf(self, v):
        raise NotImplementedError

    def one_sided_pdf(self, v):
        raise NotImplementedError

    def support_intervals(self) -> list[tuple[float, float]]:
        """Disjoint closed intervals outside which ``pdf`` is zero."""
        raise NotImplementedError

    def min_abs_speed(self) -> float:
        return min(
            0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
            for lo, hi in self.support_intervals()
        )

    def max_abs_speed(self) -> float:
        return max(max(abs(lo), abs(hi)) for lo, hi in self.support_intervals())

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw signed speeds."""
        raise NotImplementedError

    def sample_magnitude(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw speed magnitudes (one-sided distribution)."""
        return np.abs(self.sample(rng, size))


@dataclass(frozen=True)
class UniformSpeed(SpeedDistribution):
    """Speed magnitude uniform on [v_a, v_b], direction equiprobable."""

    v_a: float  # m/s, lower magnitude bound, > 0
    v_b: float  # m/s, upper magnitude bound, > v_a

    def __post_init__(self):
        if not self.v_a > 0:
            raise DomainError(f"v_a must be positive, got {self.v_a}")
        if not self.v_b > self.v_a:
            raise DomainError(f"v_b must exceed v_a, got v_a={self.v_a}, v_b={self.v_b}")

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        inside = (np.abs(v) >= self.v_a) & (np.abs(v) <= self.v_b)
        out = np.where(inside, 1.0 / (2.0 * (self.v_b - self.v_a)), 0.0)
        return out if out.ndim else float(out)

    def one_sided_pdf(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v >= self.v_a) & (v <= self.v_b)
        out = np.where(inside, 1.0 / (self.v_b - self.v_a), 0.0)
        return out if out.ndim else float(out)

    def support_intervals(self):
        return [(-self.v_b, -self.v_a), (self.v_a, self.v_b)]

    def sample(self, rng, size):
        sign = rng.integers(0, 2, size=size) * 2 - 1
        return sign * rng.uniform(self.v_a, self.v_b, size=size)

    def sample_magnitude(self, rng, size):
        return rng.uniform(self.v_a, self.v_b, size=size)


@dataclass(frozen=True)
class TabulatedSpeed(SpeedDistribution):
    """Signed-speed density given by samples on a grid, linearly interpolated.

    The density is renormalized to integrate to one.  Use
    :meth:`from_one_sided` to build the symmetric two-sided density from a
    magnitude-only table.
    """

    speeds: np.ndarray     # strictly increasing signed-speed grid, m/s
    densities: np.ndarray  # non-negative density samples on the grid

    def __post_init__(self):
        v = np.asarray(self.speeds, dtype=float)
        p = np.asarray(self.densities, dtype=float)
        if v.ndim != 1 or v.size < 2 or p.shape != v.shape:
            raise DomainError("speeds and densities must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(v) <= 0):
            raise DomainError("speeds grid must be strictly increasing")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("densities must be finite and non-negative")
        total = np.trapezoid(p, v)
        if total <= 0:
            raise DomainError("densities integrate to zero")
        v = v.copy()
        p = p / total
        v.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "speeds", v)
        object.__setattr__(self, "densities", p)

    @classmethod
    def from_one_sided(cls, magnitudes, densities) -> "TabulatedSpeed":
        """Symmetrize a magnitude-only density: half the mass on each sign.

        Zero anchors are inserted just inside the slow edge so the linear
        interpolation does not bridge the gap between the two branches.
        """
        m = np.asarray(magnitudes, dtype=float)
        p = np.asarray(densities, dtype=float)
        if np.any(m <= 0):
            raise DomainError("one-sided speed grid must be strictly positive")
        inset = m[0] * (1.0 - 1e-9)
        grid = np.concatenate([-m[::-1], [-inset, inset], m])
        dens = np.concatenate([p[::-1], [0.0, 0.0], p]) / 2.0
        return cls(grid, dens)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        out = np.interp(v, self.speeds, self.densities, left=0.0, right=0.0)
        return out if out.ndim else float(out)

    def one_sided_pdf(self, v):
        v = np.asarray(v, dtype=float)
        out = self.pdf(v) + self.pdf(-v)
        return out if np.ndim(out) else float(out)

    def support_intervals(self):
        # Maximal runs of grid cells on which the interpolated density is not
        # identically zero (a cell counts if either of its endpoints is positive).
        pos = self.densities > 0
        cells = pos[:-1] | pos[1:]
        intervals = []
        k = 0
        while k < cells.size:
            if cells[k]:
                j = k
                while j + 1 < cells.size and cells[j + 1]:
                    j += 1
                intervals.append((float(self.speeds[k]), float(self.speeds[j + 1])))
                k = j + 1
            else:
                k += 1
        return intervals

    @cached_property
    def _cdf(self) -> np.ndarray:
        dv = np.diff(self.speeds)
        mass = dv * (self.densities[:-1] + self.densities[1:]) / 2.0
        c = np.concatenate([[0.0], np.cumsum(mass)])
        return c / c[-1]

    def sample(self, rng, size):
        u = rng.random(size)
        # invert the piecewise-linear CDF cell by cell
        idx = np.searchsorted(self._cdf, u, side="right") - 1
        idx = np.clip(idx, 0, self.speeds.size - 2)
        lo = self._cdf[idx]
        hi = self._cdf[idx + 1]
        frac = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
        return self.speeds[idx] + frac * (self.speeds[idx + 1] - self.speeds[idx])


class PopularityModel:
    """Popularity distribution over a finite content library {1..n_contents}."""

    @property
    def n_contents(self) -> int:
        raise NotImplementedError

    @property
    def pmf_vector(self) -> np.ndarray:
        """Probability of each content, index 0 holds content 1."""
        raise NotImplementedError

    def pmf(self, z: int) -> float:
        if not 1 <= z <= self.n_contents:
            raise DomainError(f"content id {z} outside library 1..{self.n_contents}")
        return float(self.pmf_vector[z - 1])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw content ids (1-based)."""
        u = rng.random(size)
        return np.searchsorted(self._cdf, u, side="right") + 1

    @cached_property
    def _cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf_vector)


@dataclass(frozen=True)
class ZipfPopularity(PopularityModel):
    """Truncated Zipf popularity: pmf(z) proportional to z**(-alpha).

    The normalization constant is the plain partial sum over the library, not
    a zeta-function approximation, so small libraries are represented exactly.
    """

    alpha: float
    library_size: int

    def __post_init__(self):
        if self.library_size < 1:
            raise DomainError("library_size must be >= 1")
        if not np.isfinite(self.alpha):
            raise DomainError("alpha must be finite")

    @property
    def n_contents(self) -> int:
        return self.library_size

    @cached_property
    def pmf_vector(self) -> np.ndarray:
        z = np.arange(1, self.library_size + 1, dtype=float)
        w = z ** (-self.alpha)
        w /= w.sum()
        w.flags.writeable = False
        return w


@dataclass(frozen=True)
class ExplicitPopularity(PopularityModel):
    """Popularity given directly as a pmf vector over contents 1..len(pmf)."""

    pmf_values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pmf_values, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise DomainError("pmf must be a non-empty 1-D vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("pmf entries must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"pmf must sum to 1 within 1e-12, got {p.sum()!r}")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "pmf_values", p)

    @property
    def n_contents(self) -> int:
        return self.pmf_values.size

    @property
    def pmf_vector(self) -> np.ndarray:
        return self.pmf_values


@dataclass(frozen=True)
class ScenarioParams:
    """Road, traffic, and content-request parameters."""

    lambda_t: float            # vehicles/s entering, both road ends combined
    speed: SpeedDistribution
    lambda_Z: float            # content requests/s issued by each device
    popularity: PopularityModel
    tau_c: float               # s, content timeout (max delivery delay)
    tau_s: float               # s, sharing timeout (cache retention)
    roi_length: float          # m, simulated street chunk
    lane_gap: float = 0.0      # m, distance between the two lane centers

    def __post_init__(self):
        if not self.lambda_t > 0:
            raise DomainError("lambda_t must be positive")
        if not self.lambda_Z >= 0:
            raise DomainError("lambda_Z must be non-negative")
        if not 0 <= self.tau_c < self.tau_s:
            raise DomainError(f"need 0 <= tau_c < tau_s, got tau_c={self.tau_c}, tau_s={self.tau_s}")
        if not self.roi_length > 0:
            raise DomainError("roi_length must be positive")
        if self.lane_gap < 0:
            raise DomainError("lane_gap must be non-negative")


@dataclass(frozen=True)
class RadioParams:
    """Link-budget parameters of the multi-carrier radio."""

    e_bar: float               # bps/Hz, target normalized rate per subcarrier
    w_c: float                 # Hz, subcarrier spacing
    n0_dbm_hz: float           # dBm/Hz, thermal noise density
    noise_figure_db: float     # dB, receiver noise figure
    link_margin_db: float      # dB, margin multiplying the transmit power
    d_max: float               # m, maximum D2D range
    d_max_i2d: float           # m, cell radius for infrastructure delivery

    def __post_init__(self):
        if not self.e_bar > 0:
            raise DomainError("e_bar must be positive")
        if not self.w_c > 0:
            raise DomainError("w_c must be positive")
        if not self.d_max > 0:
            raise DomainError("d_max must be positive")
        if not self.d_max_i2d > 0:
            raise DomainError("d_max_i2d must be positive")

    @property
    def link_margin_linear(self) -> float:
        return 10.0 ** (self.link_margin_db / 10.0)


def sigma_c_squared(radio: RadioParams) -> float:
    """Noise power per subcarrier in linear mW: w_c * F_rc * N_0."""
    return radio.w_c * 10.0 ** ((radio.n0_dbm_hz + radio.noise_figure_db) / 10.0)
