"""Batch command-line front-end.

Subcommands:

  analytic   model curves over a D2D-range grid -> analytic.csv
  simulate   replicated protocol simulation     -> sim_replications.csv,
                                                   sim_aggregate.csv
  compare    sim-vs-model agreement gate        -> compare.csv, exit 2 on miss
  optimize   energy-optimal D2D range           -> optimize.json
  oracle     Monte Carlo re-derivation of pinned constants (maintenance)

Every invocation writes a JSON run manifest to the output directory before
any result file, so each CSV is traceable to the exact config snapshot, seed,
and tool version that produced it.  Exit codes: 0 success, 1 validation
error, 2 acceptance-gate failure, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analytic, oracles, simulator
from .config import build_inputs, config_to_ini, load_config_file, merge_config, parse_dmax_grid
from .errors import ConfigError, DomainError, NumericError
from .presets import PRESETS

ANALYTIC_COLUMNS = ["d_max_m", "p_offload", "p_off_imm", "p_off_del", "p_non_off",
                    "power_total_mw", "power_imm_mw", "power_del_mw", "power_non_off_mw"]
REPLICATION_COLUMNS = ["d_max_m", "replication", "master_seed", "n_requests", "n_repeated",
                       "n_imm", "n_del", "n_i2d", "efficiency", "mean_power_mw",
                       "max_deliveries_per_ci"]
AGGREGATE_COLUMNS = ["d_max_m", "n_replications", "efficiency_mean", "efficiency_ci95",
                     "power_mean_mw", "power_ci95_mw"]
COMPARE_COLUMNS = ["d_max_m", "metric", "analytic", "sim_mean", "ci95",
                   "abs_dev", "rel_dev", "covered"]


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".10g")
    return str(x)


def _write_csv(path: Path, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _resolve_config(args) -> dict[str, dict[str, str]]:
    cfg: dict[str, dict[str, str]] = {}
    if args.preset:
        cfg = PRESETS[args.preset]()
    if args.config:
        cfg = merge_config(cfg, load_config_file(args.config))
    if not cfg:
        raise ConfigError("provide --preset and/or --config")
    if getattr(args, "seed", None) is not None:
        cfg.setdefault("sim", {})["master_seed"] = str(args.seed)
    if getattr(args, "dmax_grid", None):
        cfg.setdefault("sim", {})["dmax_grid"] = args.dmax_grid
    return cfg


def _write_manifest(out_dir: Path, command: str, cfg: dict, outputs: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    snapshot = config_to_ini(cfg)
    manifest = {
        "tool": "d2d-offload",
        "version": __version__,
        "command": command,
        "run_id": hashlib.sha256((command + snapshot).encode()).hexdigest()[:12],
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": cfg,
        "outputs": outputs,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _grid_from(cfg_sim: simulator.SimConfig, args) -> list[float]:
    if getattr(args, "dmax_grid", None):
        return parse_dmax_grid(args.dmax_grid)
    return list(cfg_sim.dmax_grid)


# ---------------------------------------------------------------------------
# analytic
# ---------------------------------------------------------------------------

def cmd_analytic(args) -> int:
    cfg = _resolve_config(args)
    scenario, radio, ch, sim_cfg = build_inputs(cfg)
    grid = _grid_from(sim_cfg, args)
    out_dir = Path(args.out)
    _write_manifest(out_dir, "analytic", cfg, ["analytic.csv"])

    classes = analytic.summarize_library(scenario)
    rows = []
    for d in grid:
        power = analytic.aggregate_power(d, scenario, radio, ch, classes=classes)
        w = power.weights
        rows.append([d, w.p_offload, w.p_off_imm, w.p_off_del, w.p_non_off,
                     power.total, power.mean_imm, power.power_del, power.mean_non_off])
    _write_csv(out_dir / "analytic.csv", ANALYTIC_COLUMNS, rows)
    print(f"analytic: wrote {len(rows)} grid points to {out_dir / 'analytic.csv'}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _run_one(task):
    scenario, radio, ch, sim_cfg, d_max, rep_index, child = task
    import dataclasses
    radio_d = dataclasses.replace(radio, d_max=d_max)
    metrics, _records = simulator.run_replication(
        scenario, radio_d, ch, sim_cfg, replication=rep_index, seed=child)
    return metrics


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    scenario, radio, ch, sim_cfg = build_inputs(cfg)
    grid = _grid_from(sim_cfg, args)
    if not grid:
        raise ConfigError("no d_max grid: set [sim] dmax_grid or pass --dmax-grid")
    out_dir = Path(args.out)
    _write_manifest(out_dir, "simulate", cfg,
                    ["sim_replications.csv", "sim_aggregate.csv"])

    children = np.random.SeedSequence(sim_cfg.master_seed).spawn(sim_cfg.replications)
    tasks = [(scenario, radio, ch, sim_cfg, d, i, children[i])
             for d in grid for i in range(sim_cfg.replications)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=1))
    else:
        results = [_run_one(t) for t in tasks]

    rep_rows = []
    agg_rows = []
    per_point = sim_cfg.replications
    for gi, d in enumerate(grid):
        metrics = results[gi * per_point:(gi + 1) * per_point]
        for m in metrics:
            rep_rows.append([d, m.replication, m.seed, m.n_requests, m.n_repeated,
                             m.n_imm, m.n_del, m.n_i2d, m.offloading_efficiency,
                             m.mean_tx_power_mw, m.max_deliveries_per_ci])
        if per_point >= 2:
            agg = simulator.aggregate(metrics)
            agg_rows.append([d, agg.n, agg.efficiency_mean, agg.efficiency_ci95,
                             agg.power_mean_mw, agg.power_ci95_mw])
        else:
            m = metrics[0]
            agg_rows.append([d, 1, m.offloading_efficiency, "na",
                             m.mean_tx_power_mw, "na"])
    _write_csv(out_dir / "sim_replications.csv", REPLICATION_COLUMNS, rep_rows)
    _write_csv(out_dir / "sim_aggregate.csv", AGGREGATE_COLUMNS, agg_rows)
    print(f"simulate: {len(grid)} grid points x {per_point} replications -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _read_csv(path: str | Path) -> list[dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_compare(args) -> int:
    analytic_rows = _read_csv(args.analytic)
    sim_rows = _read_csv(args.sim)
    a_grid = [round(float(r["d_max_m"]), 6) for r in analytic_rows]
    s_grid = [round(float(r["d_max_m"]), 6) for r in sim_rows]
    if a_grid != s_grid:
        raise DomainError(f"d_max grids differ: analytic {a_grid} vs sim {s_grid}")

    rows = []
    worst = {"efficiency": 0.0, "power": 0.0}
    all_covered = True
    for ar, sr in zip(analytic_rows, sim_rows):
        d = float(ar["d_max_m"])
        for metric, a_col, m_col, ci_col in (
                ("efficiency", "p_offload", "efficiency_mean", "efficiency_ci95"),
                ("power", "power_total_mw", "power_mean_mw", "power_ci95_mw")):
            a_val = float(ar[a_col])
            s_val = float(sr[m_col])
            ci_raw = sr[ci_col]
            ci = float(ci_raw) if ci_raw not in ("na", "", "nan") else float("nan")
            abs_dev = abs(s_val - a_val)
            rel_dev = abs_dev / abs(a_val) if a_val else float("inf")
            covered = bool(abs_dev <= ci) if np.isfinite(ci) else False
            all_covered &= covered
            worst[metric] = max(worst[metric], rel_dev)
            rows.append([d, metric, a_val, s_val, ci, abs_dev, rel_dev, covered])

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_csv(out_dir / "compare.csv", COMPARE_COLUMNS, rows)
    for r in rows:
        print(f"d_max={r[0]:g} {r[1]:10s} analytic={r[2]:.6g} sim={r[3]:.6g} "
              f"ci95={r[4]:.3g} rel_dev={r[6]*100:.2f}% covered={r[7]}")
    print(f"max relative deviation: efficiency {worst['efficiency']*100:.2f}%, "
          f"power {worst['power']*100:.2f}%")
    if not all_covered:
        print("GATE: at least one point outside the 95% confidence interval")
        return 2
    print("GATE: all points covered")
    return 0


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

def cmd_optimize(args) -> int:
    cfg = _resolve_config(args)
    scenario, radio, ch, sim_cfg = build_inputs(cfg)
    if args.interval:
        lo, hi = (float(tok) for tok in args.interval.split(":"))
    else:
        grid = list(sim_cfg.dmax_grid) or [20.0, 300.0]
        lo, hi = min(grid), max(grid)
    out_dir = Path(args.out)
    _write_manifest(out_dir, "optimize", cfg, ["optimize.json"])

    classes = analytic.summarize_library(scenario)
    opt = analytic.optimal_dmax(scenario, radio, ch, search_interval=(lo, hi))
    eff_opt = analytic.prob_offload_given_nr(opt.d_max_opt, scenario, classes=classes)
    eff_hi = analytic.prob_offload_given_nr(hi, scenario, classes=classes)
    report = {
        "search_interval_m": [lo, hi],
        "d_max_opt_m": opt.d_max_opt,
        "power_at_opt_mw": opt.power_mw,
        "at_boundary": opt.at_boundary,
        "n_evaluations": opt.n_evals,
        "efficiency_at_opt": eff_opt,
        "efficiency_at_interval_end": eff_hi,
        "efficiency_sacrificed": eff_hi - eff_opt,
    }
    with open(out_dir / "optimize.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(json.dumps(report, indent=2))
    return 0


# ---------------------------------------------------------------------------
# oracle (maintenance)
# ---------------------------------------------------------------------------

def cmd_oracle(args) -> int:
    cfg = _resolve_config(args)
    scenario, radio, ch, sim_cfg = build_inputs(cfg)
    out_dir = Path(args.out)
    _write_manifest(out_dir, "oracle", cfg, ["oracle.csv"])
    seed = sim_cfg.master_seed

    rows = []

    def add(name, est, reference):
        rows.append([name, est.value, est.std_error, est.sample_count, est.seed, reference])

    est = oracles.mc_spatial_density(scenario.lambda_t, scenario.speed, 20000.0, seed)
    add("spatial_density", est, analytic.spatial_density(scenario.lambda_t, scenario.speed))
    for v_star in sorted({scenario.speed.min_abs_speed(), scenario.speed.max_abs_speed()}):
        est = oracles.mc_encounter_rate(v_star, scenario.lambda_t, scenario.speed,
                                        20000.0, seed)
        add(f"encounter_rate_v{v_star:g}", est,
            analytic.encounter_rate(v_star, scenario.lambda_t, scenario.speed))
    z_probe = min(1000, scenario.popularity.n_contents)
    lam_z = analytic.content_request_rate(z_probe, scenario.popularity, scenario.lambda_Z)
    rho = analytic.spatial_density(scenario.lambda_t, scenario.speed)
    rho_z = analytic.content_density(rho, lam_z, scenario.tau_s, scenario.tau_c)
    if rho_z > 0:
        est = oracles.mc_transform_mean(
            oracles.truncated_nn_sampler(rho_z, radio.d_max), radio, ch, 10 ** 6, seed)
        add(f"mean_power_imm_z{z_probe}", est,
            analytic.mean_power_imm(radio.d_max, rho_z, radio, ch))
    est = oracles.mc_transform_mean(
        oracles.uniform_distance_sampler(radio.d_max_i2d), radio, ch, 10 ** 6, seed)
    add("mean_power_non_off", est, analytic.mean_power_non_off(radio.d_max_i2d, radio, ch))
    est = oracles.mc_cache_occupancy(lam_z, scenario.tau_s, scenario.tau_c, 2e7, seed)
    lo, hi = analytic.cache_probability_bounds(lam_z, scenario.tau_s, scenario.tau_c)
    add(f"cache_occupancy_z{z_probe}", est, f"[{lo:.6g}, {hi:.6g}]")

    _write_csv(out_dir / "oracle.csv",
               ["name", "value", "std_error", "sample_count", "seed", "reference"], rows)
    for r in rows:
        print(f"{r[0]:28s} {r[1]:.6g} +/- {r[2]:.2g}   reference {r[5]}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="d2d-offload",
        description="D2D content-delivery offloading: analytic model and protocol simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_grid=True):
        p.add_argument("--config", help="INI config file (overrides preset keys)")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in preset")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="override [sim] master_seed")
        if with_grid:
            p.add_argument("--dmax-grid", help="grid as start:stop:step or comma list")

    p = sub.add_parser("analytic", help="evaluate the model over the d_max grid")
    common(p)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("simulate", help="run replicated protocol simulations")
    common(p)
    p.add_argument("--workers", type=int, default=1,
                   help="process pool size for replication fan-out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="check simulation against the model")
    p.add_argument("--analytic", required=True, help="analytic.csv from the analytic command")
    p.add_argument("--sim", required=True, help="sim_aggregate.csv from the simulate command")
    p.add_argument("--out", help="optional directory for compare.csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("optimize", help="find the energy-optimal d_max")
    common(p, with_grid=False)
    p.add_argument("--interval", help="search interval as lo:hi (default: grid span)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("oracle")   # maintenance; intentionally undocumented
    common(p, with_grid=False)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except DomainError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
