"""Command-line interface.

Subcommands::

    teleportsim run <config> [--seed N] [--fast] [--out-dir D] [--tag-dump]
                             [--dense] [--check] [--trials N]
    teleportsim hom <config> [--seed N] [--fast] [--analytic] [--out-dir D]
                             [--check]
    teleportsim export <report.json ...> [--out FILE]
    teleportsim validate <config>
    teleportsim oracle <case> [--seed N]

Exit codes: 0 success, 1 configuration error, 2 runtime error,
3 acceptance-band failure in ``--check`` mode.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK = 3


def _load_config(path_or_name, seed_override=None):
    from .scenarios import load_scenario

    cfg = load_scenario(path_or_name)
    if seed_override is not None:
        cfg = replace(cfg, seed=int(seed_override))
    return cfg


def _run_dir(base, cfg) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    d = Path(base) / f"{cfg.scenario}_seed{cfg.seed}_{stamp}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _band_check(value, center, sigma, n_sigma, label, fast, problems):
    if center is None or sigma is None:
        return
    width = n_sigma * sigma * (np.sqrt(10.0) if fast else 1.0)
    if abs(value - center) > width:
        problems.append(
            f"{label}: {value:.4f} outside {center:.4f} +- {width:.4f}"
        )


def cmd_run(args) -> int:
    from . import simulate
    from .reports import build_report, write_report
    from .timetags import write_tag_file

    cfg = _load_config(args.config, args.seed)
    rng = np.random.default_rng(cfg.seed)
    t_start = time.time()

    sink = None
    dump_streams = {1: [], 2: [], 3: []}
    dense = args.dense or args.tag_dump
    if args.tag_dump:
        est = (
            sum(cfg.wcs.detected_rate_ch)
            + sum(cfg.pair_source.idler_rate_ch)
            + cfg.pair_source.signal_rate
        ) * cfg.acquisition.seconds_per_setting * 18 * (0.1 if args.fast else 1.0)
        if est > 2e8:
            print(
                f"error: tag dump would hold ~{est:.2e} tags; rerun with "
                "--fast or shorter acquisitions",
                file=sys.stderr,
            )
            return EXIT_CONFIG

        def sink(c1, c2, c3):
            dump_streams[1].append(c1)
            dump_streams[2].append(c2)
            dump_streams[3].append(c3)

    counts, diag = simulate.run_teleport_counts(
        cfg, rng=rng, fast=args.fast, dense=dense, tag_sink=sink
    )
    mc_rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, 0x3C]).generate_state(4)
    )
    evaluation = simulate.run_scenario_counts_to_report(
        cfg, counts, diag, mc_rng, trials=args.trials
    )
    hom = None
    if args.with_hom:
        hom = simulate.run_hom(cfg, fast=args.fast)

    diag_out = dict(diag)
    diag_out.pop("singles", None)
    report = build_report(
        cfg,
        evaluation,
        diag_out,
        hom=hom,
        fast=args.fast,
        wall_clock={
            "started_utc": datetime.fromtimestamp(t_start, timezone.utc).isoformat(),
            "elapsed_s": round(time.time() - t_start, 3),
        },
    )

    out_dir = _run_dir(args.out_dir, cfg)
    report_path = out_dir / "report.json"
    write_report(report_path, report)
    if args.tag_dump:
        streams = {
            ch: (np.sort(np.concatenate(v)) if v else np.empty(0, np.int64))
            for ch, v in dump_streams.items()
        }
        write_tag_file(
            out_dir / "tags.ttag",
            streams,
            metadata={"scenario": cfg.scenario, "seed": cfg.seed},
        )

    res = report["results"]
    print(f"scenario {cfg.scenario} seed {cfg.seed}")
    for label, r in res["per_input"].items():
        print(
            f"  {label} -> {r['target']}: F = {r['fidelity']:.4f} "
            f"+- {r['fidelity_sigma']:.4f}"
        )
    print(
        f"  average F = {res['average_fidelity']:.4f} "
        f"+- {res['average_sigma']:.4f} "
        f"(classical bound {res['classical_bound']:.4f})"
    )
    print(f"  report: {report_path}")

    if args.check:
        problems: list[str] = []
        _band_check(
            res["average_fidelity"],
            cfg.expected.average_fidelity,
            cfg.expected.fidelity_sigma,
            2.0,
            "average fidelity",
            args.fast,
            problems,
        )
        if hom is not None:
            _band_check(
                hom["visibility"],
                cfg.expected.hom_visibility,
                cfg.expected.hom_visibility_sigma,
                1.0,
                "HOM visibility",
                args.fast,
                problems,
            )
        if not res["beats_classical_bound"]:
            problems.append("average fidelity does not beat the 2/3 bound")
        if problems:
            for p in problems:
                print(f"check FAILED: {p}", file=sys.stderr)
            return EXIT_CHECK
        print("  check passed")
    return EXIT_OK


def cmd_hom(args) -> int:
    from . import simulate

    cfg = _load_config(args.config, args.seed)
    result = simulate.run_hom(cfg, analytic=args.analytic, fast=args.fast)
    print(f"scenario {cfg.scenario} seed {cfg.seed}")
    print(
        f"  HOM visibility = {result['visibility']:.4f} "
        f"+- {result['visibility_sigma']:.4f} "
        f"(dip {result['dip_counts']:.1f}, far {result['far_counts']:.1f})"
    )
    if args.out_dir:
        out_dir = _run_dir(args.out_dir, cfg)
        import json

        (out_dir / "hom.json").write_text(
            json.dumps(result, sort_keys=True, indent=1) + "\n"
        )
        print(f"  curve: {out_dir / 'hom.json'}")
    if args.check:
        problems: list[str] = []
        _band_check(
            result["visibility"],
            cfg.expected.hom_visibility,
            cfg.expected.hom_visibility_sigma,
            1.0,
            "HOM visibility",
            args.fast,
            problems,
        )
        if problems:
            for p in problems:
                print(f"check FAILED: {p}", file=sys.stderr)
            return EXIT_CHECK
        print("  check passed")
    return EXIT_OK


def cmd_export(args) -> int:
    from .reports import export_figure_data, read_report

    reports = [read_report(p) for p in args.reports]
    text = export_figure_data(reports, out=args.out)
    if args.out:
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .scenarios import validate_config

    cfg = validate_config(args.config)
    print(f"ok: scenario {cfg.scenario!r} valid (seed {cfg.seed})")
    return EXIT_OK


def cmd_oracle(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.case == "teleport":
        from .polarization import PolarizationState
        from .sources import WernerState
        from .bsm import teleport_conditional_state
        from .oracles import teleport_conditional_state_bruteforce

        worst = 0.0
        for _ in range(1000):
            a = rng.normal(size=2) + 1j * rng.normal(size=2)
            a /= np.linalg.norm(a)
            st = PolarizationState(a[0], a[1])
            p, z = rng.uniform(0, 1), rng.uniform(0, 1)
            fast_rho, fast_ph = teleport_conditional_state(st, WernerState(p), z)
            ref_rho, ref_ph = teleport_conditional_state_bruteforce(
                st, WernerState(p), z
            )
            worst = max(
                worst,
                float(np.abs(fast_rho.matrix - ref_rho.matrix).max()),
                abs(fast_ph - ref_ph),
            )
        ok = worst < 1e-10
        print(f"teleport closed form vs 8x8 brute force: max |diff| = {worst:.3e}")
        print("PASS" if ok else "FAIL")
        return EXIT_OK if ok else EXIT_RUNTIME
    if args.case == "coincidences":
        from .timetags import CoincidenceWindow, count_coincidences
        from .oracles import match_groups_bruteforce, random_tag_instance

        for k in range(200):
            n = int(rng.integers(5, 2000))
            nch = int(rng.integers(2, 4))
            streams = random_tag_instance(rng, n, nch, t_max=20_000)
            win = CoincidenceWindow(
                int(rng.integers(2, 300)), tuple(range(1, nch + 1))
            )
            a = count_coincidences(streams, win).group_times
            b = match_groups_bruteforce(streams, win)
            if a.shape != b.shape or not np.array_equal(a, b):
                print(f"FAIL: mismatch on instance {k}")
                return EXIT_RUNTIME
        print("coincidence engine vs brute force: 200 instances identical")
        print("PASS")
        return EXIT_OK
    if args.case == "fidelity-law":
        from .bsm import average_fidelity, teleport_conditional_state
        from .polarization import NAMED_STATES, fidelity
        from .sources import WernerState
        from .tomography import STATE_MAPPING

        worst = 0.0
        for zeta in np.linspace(0.0, 1.0, 20):
            fs = []
            for inp, tgt in STATE_MAPPING.items():
                rho, _ = teleport_conditional_state(
                    NAMED_STATES[inp], WernerState(1.0), float(zeta)
                )
                fs.append(fidelity(rho, NAMED_STATES[tgt]))
            law = (2.0 + zeta) / 3.0
            worst = max(worst, abs(float(np.mean(fs)) - law))
        print(
            "mean fidelity over {H,D,R} vs closed form (2+zeta)/3: "
            f"max |diff| = {worst:.3e}"
        )
        print("PASS" if worst < 1e-12 else "FAIL")
        return EXIT_OK if worst < 1e-12 else EXIT_RUNTIME
    print(f"unknown oracle case {args.case!r}", file=sys.stderr)
    return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="teleportsim",
        description="Polarization-qubit teleportation link simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a full teleportation scenario")
    run.add_argument("config", help="bundled scenario name or config path")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--fast", action="store_true",
                     help="scale acquisitions down tenfold")
    run.add_argument("--out-dir", default="runs")
    run.add_argument("--tag-dump", action="store_true",
                     help="write the binary tag file (forces dense mode)")
    run.add_argument("--dense", action="store_true",
                     help="materialize every singles tag")
    run.add_argument("--check", action="store_true",
                     help="verify against the scenario's expected bands")
    run.add_argument("--with-hom", action="store_true",
                     help="append a HOM scan to the report")
    run.add_argument("--trials", type=int, default=None,
                     help="Monte Carlo trials for the fidelity sigma")

    hom = sub.add_parser("hom", help="run the heralded HOM delay scan")
    hom.add_argument("config")
    hom.add_argument("--seed", type=int, default=None)
    hom.add_argument("--fast", action="store_true")
    hom.add_argument("--analytic", action="store_true",
                     help="expected rates instead of sampled counts")
    hom.add_argument("--out-dir", default=None)
    hom.add_argument("--check", action="store_true")

    exp = sub.add_parser("export", help="figure-ready CSV from reports")
    exp.add_argument("reports", nargs="+")
    exp.add_argument("--out", default=None)

    val = sub.add_parser("validate", help="schema-check a scenario file")
    val.add_argument("config")

    orc = sub.add_parser("oracle", help="run a brute-force cross-check")
    orc.add_argument("case", choices=["teleport", "coincidences", "fidelity-law"])
    orc.add_argument("--seed", type=int, default=2026)
    return p


def main(argv=None) -> int:
    from .sources import ConfigError

    args = build_parser().parse_args(argv)
    handlers = {
        "run": cmd_run,
        "hom": cmd_hom,
        "export": cmd_export,
        "validate": cmd_validate,
        "oracle": cmd_oracle,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures map to exit code 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
