"""Built-in experiment presets.

``paper``: the full reference scenario (10^4 contents, 15-minute runs, 29
grid points).  ``desk``: the same physics with a 10^3-content library,
200-second runs, and a 7-point grid, sized so the complete validation runs in
minutes.
"""

from __future__ import annotations

_COMMON_SCENARIO = {
    "lambda_t": "0.3333333333333333",   # vehicles/s, both ends combined
    "speed_kind": "uniform",
    "v_a": "6.0",                       # m/s
    "v_b": "16.0",
    "lambda_Z": "0.16666666666666666",  # 10 requests per minute per device
    "popularity_kind": "zipf",
    "zipf_alpha": "1.1",
    "tau_c": "20.0",                    # s
    "tau_s": "600.0",
    "roi_length": "1800.0",             # m
    "lane_gap": "10.0",
}

_COMMON_RADIO = {
    "e_bar": "5.0",                     # bps/Hz
    "w_c": "16666.666666666668",        # Hz: 200 kHz blocks, 12 subcarriers
    "n0_dbm_hz": "-174.0",
    "noise_figure_db": "10.0",
    "link_margin_db": "15.0",
    "d_max": "100.0",                   # m, default; sweeps override
    "d_max_i2d": "300.0",               # m, cell radius (sites every 600 m)
}

_COMMON_CHANNEL = {
    "kind": "log_distance",
    "pl0_db": "34.23",
    "n": "2.27",
    "freq_ghz": "2.3",
}


def paper_config() -> dict[str, dict[str, str]]:
    return {
        "scenario": dict(_COMMON_SCENARIO, n_contents="10000"),
        "radio": dict(_COMMON_RADIO),
        "channel": dict(_COMMON_CHANNEL),
        "sim": {
            "duration_s": "900.0",
            "ci_length_s": "1.0",
            "replications": "10",
            "master_seed": "20260810",
            "measurement_region": "300.0, 1500.0",
            "prbs_per_delivery": "400",     # 500 KB content, 1 kbit per PRB
            "prb_budget_per_ci": "50000",
            "dmax_grid": "20:300:10",
        },
    }


def desk_config() -> dict[str, dict[str, str]]:
    cfg = paper_config()
    cfg["scenario"]["n_contents"] = "1000"
    cfg["sim"]["duration_s"] = "200.0"
    cfg["sim"]["dmax_grid"] = "20,50,100,150,200,250,300"
    return cfg


PRESETS = {
    "paper": paper_config,
    "desk": desk_config,
}
