"""Config-file ingestion.

Runs are described by a flat INI file with four sections: [scenario],
[radio], [channel], and [sim].  Values are plain numbers in the units of the
corresponding dataclass fields; see configs/ in the repository root for
annotated examples.  Presets provide the same structure as dictionaries, and
a config file may override any subset of preset keys.
"""

from __future__ import annotations

import configparser
from pathlib import Path

import numpy as np

from .channel import ChannelModel, make_channel
from .domain import (
    ExplicitPopularity,
    RadioParams,
    ScenarioParams,
    TabulatedSpeed,
    UniformSpeed,
    ZipfPopularity,
)
from .errors import ConfigError, DomainError
from .simulator import SimConfig

__all__ = ["load_config_file", "merge_config", "build_inputs", "parse_dmax_grid",
           "config_to_ini"]

_SECTIONS = ("scenario", "radio", "channel", "sim")


def load_config_file(path: str | Path) -> dict[str, dict[str, str]]:
    """Read an INI config into a {section: {key: raw string}} mapping."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        cfg[section] = dict(parser.items(section))
    return cfg


def merge_config(base: dict[str, dict[str, str]],
                 override: dict[str, dict[str, str]]) -> dict[str, dict[str, str]]:
    out = {sec: dict(vals) for sec, vals in base.items()}
    for sec, vals in override.items():
        out.setdefault(sec, {}).update(vals)
    return out


def config_to_ini(cfg: dict[str, dict[str, str]]) -> str:
    lines = []
    for sec in _SECTIONS:
        if sec not in cfg:
            continue
        lines.append(f"[{sec}]")
        for key, val in cfg[sec].items():
            lines.append(f"{key} = {val}")
        lines.append("")
    return "\n".join(lines)


class _Section:
    """Typed accessors with section/key-qualified error messages."""

    def __init__(self, name: str, values: dict[str, str]):
        self.name = name
        self.values = values
        self.seen: set[str] = set()

    def _raw(self, key: str, default=None):
        self.seen.add(key)
        if key in self.values:
            return self.values[key]
        if default is not None:
            return default
        raise ConfigError(f"[{self.name}] missing required key '{key}'")

    def get_float(self, key: str, default=None) -> float:
        raw = self._raw(key, default)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.name}] {key} = {raw!r} is not a number") from None

    def get_int(self, key: str, default=None) -> int:
        raw = self._raw(key, default)
        try:
            return int(str(raw))
        except (TypeError, ValueError):
            raise ConfigError(f"[{self.name}] {key} = {raw!r} is not an integer") from None

    def get_str(self, key: str, default=None) -> str:
        return str(self._raw(key, default)).strip()

    def get_floats(self, key: str, default=None) -> list[float]:
        raw = self._raw(key, default)
        try:
            return [float(tok) for tok in str(raw).replace(";", ",").split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} = {raw!r} is not a number list") from None

    def check_unknown(self):
        unknown = set(self.values) - self.seen
        if unknown:
            raise ConfigError(f"[{self.name}] unknown keys: {sorted(unknown)}")


def parse_dmax_grid(spec: str) -> list[float]:
    """Grid given either as 'start:stop:step' (inclusive stop) or a comma list."""
    spec = spec.strip()
    if not spec:
        return []
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid {spec!r} must look like start:stop:step")
        try:
            a, b, step = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"grid {spec!r} has non-numeric fields") from None
        if step <= 0 or b < a:
            raise ConfigError(f"grid {spec!r} needs stop >= start and step > 0")
        n = int(np.floor((b - a) / step + 1e-9)) + 1
        return [a + i * step for i in range(n)]
    try:
        return [float(tok) for tok in spec.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"grid {spec!r} has non-numeric entries") from None


def build_inputs(cfg: dict[str, dict[str, str]]):
    """Validate a config mapping and build the four run inputs.

    Returns (ScenarioParams, RadioParams, ChannelModel, SimConfig).
    """
    for sec in _SECTIONS:
        if sec not in cfg:
            raise ConfigError(f"missing section [{sec}]")

    s = _Section("scenario", cfg["scenario"])
    kind = s.get_str("speed_kind", "uniform")
    if kind == "uniform":
        speed = _wrap_domain(lambda: UniformSpeed(s.get_float("v_a"), s.get_float("v_b")),
                             "scenario")
    elif kind == "tabulated":
        speed = _wrap_domain(
            lambda: TabulatedSpeed(np.array(s.get_floats("speeds")),
                                   np.array(s.get_floats("densities"))),
            "scenario")
    else:
        raise ConfigError(f"[scenario] speed_kind = {kind!r} (use uniform or tabulated)")

    pop_kind = s.get_str("popularity_kind", "zipf")
    if pop_kind == "zipf":
        popularity = _wrap_domain(
            lambda: ZipfPopularity(s.get_float("zipf_alpha"), s.get_int("n_contents")),
            "scenario")
    elif pop_kind == "explicit":
        popularity = _wrap_domain(
            lambda: ExplicitPopularity(np.array(s.get_floats("pmf"))), "scenario")
    else:
        raise ConfigError(f"[scenario] popularity_kind = {pop_kind!r} (use zipf or explicit)")

    scenario = _wrap_domain(lambda: ScenarioParams(
        lambda_t=s.get_float("lambda_t"),
        speed=speed,
        lambda_Z=s.get_float("lambda_Z"),
        popularity=popularity,
        tau_c=s.get_float("tau_c"),
        tau_s=s.get_float("tau_s"),
        roi_length=s.get_float("roi_length"),
        lane_gap=s.get_float("lane_gap", "0"),
    ), "scenario")
    s.check_unknown()

    r = _Section("radio", cfg["radio"])
    radio = _wrap_domain(lambda: RadioParams(
        e_bar=r.get_float("e_bar"),
        w_c=r.get_float("w_c"),
        n0_dbm_hz=r.get_float("n0_dbm_hz"),
        noise_figure_db=r.get_float("noise_figure_db"),
        link_margin_db=r.get_float("link_margin_db", "0"),
        d_max=r.get_float("d_max"),
        d_max_i2d=r.get_float("d_max_i2d"),
    ), "radio")
    r.check_unknown()

    c = _Section("channel", cfg["channel"])
    ch_kind = c.get_str("kind", "log_distance")
    if ch_kind == "log_distance":
        channel = _wrap_domain(lambda: make_channel(
            "log_distance",
            pl0_db=c.get_float("pl0_db", "34.23"),
            n=c.get_float("n", "2.27"),
            freq_ghz=c.get_float("freq_ghz", "2.3"),
        ), "channel")
    else:
        channel = make_channel(ch_kind)   # raises ConfigError for unknown kinds
    c.check_unknown()

    m = _Section("sim", cfg["sim"])
    region = m.get_floats("measurement_region", "") if "measurement_region" in m.values else None
    if region is not None and len(region) != 2:
        raise ConfigError("[sim] measurement_region must be 'lo, hi'")
    grid = parse_dmax_grid(m.get_str("dmax_grid", "")) if "dmax_grid" in m.values else []
    sim_config = _wrap_domain(lambda: SimConfig(
        duration_s=m.get_float("duration_s"),
        ci_length_s=m.get_float("ci_length_s", "1.0"),
        replications=m.get_int("replications", "10"),
        master_seed=m.get_int("master_seed", "1"),
        measurement_region=tuple(region) if region else None,
        prbs_per_delivery=m.get_int("prbs_per_delivery", "400"),
        prb_budget_per_ci=m.get_int("prb_budget_per_ci", "50000"),
        dmax_grid=tuple(grid),
    ), "sim")
    m.check_unknown()

    return scenario, radio, channel, sim_config


def _wrap_domain(builder, section: str):
    try:
        return builder()
    except DomainError as exc:
        raise ConfigError(f"[{section}] {exc}") from exc
