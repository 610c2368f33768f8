#!/usr/bin/env python3
"""Regenerate the bundled scenario files.

Anchors every detected rate to the deployment values, then solves the
two free physics knobs per scenario against the analytic rate model:
the mode overlap (from the target average teleportation fidelity) and
the HOM-acquisition WCS boost (from the target dip visibility).  The
brightness-visibility slope is fixed by the (overlap, pair-rate) points
of the local and metro scenarios.

Run from the repository root:  python scripts/calibrate_scenarios.py
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from teleportsim.scenarios import config_from_dict
from teleportsim.rates import RateModel

OUT = Path(__file__).resolve().parents[1] / "src" / "teleportsim" / "data"

DETECTORS = [
    {"efficiency": 0.82, "jitter_sigma_ps": 20.0, "dead_time_ps": 0, "dark_rate_cps": 300.0},
    {"efficiency": 0.90, "jitter_sigma_ps": 20.0, "dead_time_ps": 0, "dark_rate_cps": 300.0},
    {"efficiency": 0.92, "jitter_sigma_ps": 20.0, "dead_time_ps": 0, "dark_rate_cps": 300.0},
]

MU_LOCAL = 0.012
WCS_LOCAL = (2.6e6, 5.6e6)
WCS_30 = (10e6 * 2.6 / 8.2, 10e6 * 5.6 / 8.2)
MU_30 = MU_LOCAL * 10.0 / 8.2


def raw_scenario(scen, wcs_ch, mu_w, idler, signal, r23, zeta_fields,
                 boost, bg=0.0, km=0.005, atten=0.34, excess=0.0,
                 drift=0.0, seconds=60.0, hom_seconds=150.0, comp=True,
                 expected=None, suppression=0.0):
    cfg = {
        "scenario": scen,
        "seed": 20260810,
        "wcs": {
            "detected_rate_ch": list(wcs_ch),
            "mean_photon_per_window": mu_w,
            "polarization": "D",
        },
        "pair_source": {
            "pair_coincidence_rate": r23,
            "pair_fidelity": 0.95,
            "idler_rate_ch": list(idler),
            "signal_rate": signal,
            "idler_bs_transmission": 1.0,
            **zeta_fields,
        },
        "fiber": {
            "length_km": km,
            "atten_db_per_km": atten,
            "excess_loss_db": excess,
            "drift_rate": drift,
        },
        "crosstalk": {
            "background_rate_ch3": bg,
            "bandpass_suppression_db": suppression,
        },
        "detectors": DETECTORS,
        "window": {"width_ps": 64, "channels": [1, 2, 3]},
        "acquisition": {"seconds_per_setting": seconds, "input_states": ["H", "D", "R"]},
        "interference": {"overlap_sigma_ps": 800.0, "hom_wcs_boost": boost},
        "hom": {"delay_span_ps": 3200.0, "delay_points": 17,
                "seconds_per_point": hom_seconds, "far_fraction": 0.25},
        "compensation": {"enabled": comp, "interval_s": 20.0, "probe_shots": 200000},
    }
    if expected:
        cfg["expected"] = expected
    return cfg


def model_for(raw, boost=1.0):
    return RateModel(config_from_dict(raw), wcs_boost=boost)


def solve_zeta(build, f_target):
    lo, hi = 0.4, 1.0
    for _ in range(45):
        z = 0.5 * (lo + hi)
        if model_for(build(z, 1.0)).expected_average_fidelity() < f_target:
            lo = z
        else:
            hi = z
    return min(1.0, 0.5 * (lo + hi))


def solve_boost(build, zeta, v_target):
    """Pick the HOM boost on the falling branch of the V(boost) curve.

    Visibility first rises with boost (the interfering rate outruns the
    idler-accidental floor) then falls (multi-photon fill-ins take over);
    the calibration lands the target past the peak.
    """

    def vis(b):
        return model_for(build(zeta, b), boost=b).hom_visibility_analytic()

    grid = np.linspace(0.5, 12.0, 24)
    vals = [vis(b) for b in grid]
    k = int(np.argmax(vals))
    if vals[k] < v_target:
        raise RuntimeError(
            f"target V {v_target} unreachable (max {vals[k]:.4f} at boost {grid[k]:.2f})"
        )
    blo, bhi = grid[k], 14.0
    for _ in range(45):
        b = 0.5 * (blo + bhi)
        if vis(b) > v_target:
            blo = b
        else:
            bhi = b
    return 0.5 * (blo + bhi)


def main():
    build_local = lambda z, b: raw_scenario(
        "local", WCS_LOCAL, MU_LOCAL, (1.0e5, 2.4e5), 2.0e5, 1600.0,
        {"mode_overlap_intercept": z}, b,
    )
    z_loc = solve_zeta(build_local, 0.923)
    b_loc = solve_boost(build_local, z_loc, 0.728)

    build_30 = lambda z, b: raw_scenario(
        "metro30km", WCS_30, MU_30, (3.5e5, 7.8e5), 3.4e4, 300.0,
        {"mode_overlap_intercept": z}, b, km=30.0, excess=7.8,
    )
    z30_ceiling = solve_zeta(build_30, 0.904)
    # keep the brightness-purity trend monotone: the brighter metro
    # operating point may not beat the local overlap
    z_30 = min(z30_ceiling, z_loc - 0.007)
    b_30 = solve_boost(build_30, z_30, 0.686)

    a_p_loc = model_for(build_local(z_loc, 1.0)).a_p
    a_p_30 = model_for(build_30(z_30, 1.0)).a_p
    slope = (z_loc - z_30) / (a_p_30 - a_p_loc)
    intercept = z_loc + slope * a_p_loc

    zeta_fields = {
        "mode_overlap_intercept": intercept,
        "brightness_visibility_slope": slope,
    }

    local = raw_scenario(
        "local", WCS_LOCAL, MU_LOCAL, (1.0e5, 2.4e5), 2.0e5, 1600.0,
        zeta_fields, b_loc, seconds=60.0, hom_seconds=150.0,
        expected={
            "average_fidelity": 0.923, "fidelity_sigma": 0.022,
            "hom_visibility": 0.728, "hom_visibility_sigma": 0.053,
        },
    )
    metro = raw_scenario(
        "metro30km", WCS_30, MU_30, (3.5e5, 7.8e5), 3.4e4, 300.0,
        zeta_fields, b_30, km=30.0, excess=7.8, drift=0.025,
        seconds=300.0, hom_seconds=600.0,
        expected={
            "average_fidelity": 0.901, "fidelity_sigma": 0.033,
            "hom_visibility": 0.686, "hom_visibility_sigma": 0.056,
        },
    )
    traffic = raw_scenario(
        "metro30km_traffic", WCS_30, MU_30, (3.5e5, 7.8e5), 3.4e4, 300.0,
        zeta_fields, b_30, bg=51000.0, km=30.0, excess=7.8, drift=0.025,
        seconds=300.0, hom_seconds=600.0,
        expected={"average_fidelity": 0.859, "fidelity_sigma": 0.043},
    )

    # synthetic check scenarios: generous statistics, no environmental noise
    clean_det = [dict(d, dark_rate_cps=0.0) for d in DETECTORS]
    ideal = raw_scenario(
        "ideal", (5e5, 5e5), 1e-3, (5e4, 5e4), 1e5, 2000.0,
        {"mode_overlap_intercept": 1.0}, 1.0, seconds=30.0, hom_seconds=30.0,
        comp=False,
    )
    ideal["pair_source"]["pair_fidelity"] = 1.0
    ideal["interference"]["zeta_override"] = 1.0
    ideal["detectors"] = clean_det
    classical = json.loads(json.dumps(ideal))
    classical["scenario"] = "classical_bound"
    classical["interference"]["zeta_override"] = 0.0
    classical["acquisition"]["seconds_per_setting"] = 60.0
    classical["wcs"]["mean_photon_per_window"] = 4e-3
    classical["pair_source"]["pair_coincidence_rate"] = 8000.0
    classical["pair_source"]["idler_rate_ch"] = [2e5, 2e5]
    classical["pair_source"]["signal_rate"] = 4e5

    OUT.mkdir(parents=True, exist_ok=True)
    for cfg in (local, metro, traffic, ideal, classical):
        config_from_dict(cfg)  # validate before writing
        path = OUT / f"{cfg['scenario']}.json"
        path.write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")
        print(f"wrote {path}")

    for name, raw in (("local", local), ("metro30km", metro),
                      ("metro30km_traffic", traffic)):
        m = model_for(raw)
        mh = model_for(raw, boost=raw["interference"]["hom_wcs_boost"])
        print(
            f"{name}: zeta={m.zeta0:.5f} F={m.expected_average_fidelity():.4f} "
            f"V={mh.hom_visibility_analytic():.4f}"
        )
    print(f"slope={slope:.5e} intercept={intercept:.6f}")


if __name__ == "__main__":
    main()
