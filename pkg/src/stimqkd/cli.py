"""Command-line entry point: ``stimqkd <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .config import load_config
from .errors import ConfigError, StimQKDError

log = logging.getLogger("stimqkd")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 1, 2, 3


def _simulate(args) -> int:
    from .harness import sweep, write_outputs

    config = load_config(args.config)
    result = sweep(config, threads=args.threads, progress=log.info)
    csv_path, manifest_path = write_outputs(result, config, args.out)
    print(f"wrote {csv_path} and {manifest_path} ({result.wall_time:.1f} s)")
    if not any(p.ok for p in result.points):
        return EXIT_NUMERIC
    return EXIT_PARTIAL if result.failed else EXIT_OK


def _validate_screens(args) -> int:
    from .field import Grid
    from .turbulence import sample_screen, structure_function_estimate

    aperture = args.aperture
    grid = Grid.from_extent(args.n, args.extent)
    rng = np.random.default_rng(args.seed)
    r0 = aperture / args.d_over_r0
    screens = [sample_screen(s, r0, aperture, grid, args.terms) for s in rng.spawn(args.count)]
    separations = np.linspace(0.1, 0.5, 9) * aperture
    sys.stdout.write(structure_function_estimate(screens, separations).to_csv())
    return EXIT_OK


def _optimize_waist(args) -> int:
    from .stimpdc import StimConfig, idler_diameter_curve, optimize_probe_waist

    w_b = optimize_probe_waist(args.zt, args.gamma, args.wavelength, args.lmax)
    print(f"w_B = {w_b:.6g} m")
    curve = idler_diameter_curve(StimConfig.from_probe(w_b, args.gamma, args.wavelength), args.lmax,
                                 np.linspace(0.0, args.zt, args.points))
    sys.stdout.write(curve.to_csv())
    return EXIT_OK


def _mub(args) -> int:
    from .field import Grid
    from .mub import build_mub_pair, format_matrix, synthesize_states, verify_mub, verify_states

    mubs = build_mub_pair(args.dim)
    if args.action == "export":
        for i, basis in enumerate(mubs.bases, start=1):
            print(f"# MUB{i} generator={basis.generator_label} oam={list(mubs.oam_range)}")
            print(format_matrix(basis))
        return EXIT_OK
    report = verify_mub(mubs)
    print(report)
    ok = report.passed
    if args.grid:
        states = synthesize_states(mubs, args.waist, Grid.from_extent(args.grid, args.extent))
        sampled = verify_states(states)
        print(f"sampled: {sampled}")
        ok = ok and sampled.passed
    return EXIT_OK if ok else EXIT_NUMERIC


def _keyrate(args) -> int:
    from .metrics import q_max, secure_key_rate

    print(f"r = {secure_key_rate(args.dim, args.qer):.10g}")
    print(f"q_max = {q_max(args.dim):.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stimqkd", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte Carlo sweep from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="results")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_simulate)

    p = sub.add_parser("validate-screens", help="structure function of sampled screens as CSV")
    p.add_argument("--d-over-r0", type=float, required=True)
    p.add_argument("--terms", type=int, default=172)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--aperture", type=float, default=0.06)
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--extent", type=float, default=0.24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_validate_screens)

    p = sub.add_parser("optimize-waist", help="probe waist matching probe and idler diameters")
    p.add_argument("--zt", type=float, required=True)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--lambda", dest="wavelength", type=float, default=810e-9)
    p.add_argument("--lmax", type=int, default=2)
    p.add_argument("--points", type=int, default=11)
    p.set_defaults(func=_optimize_waist)

    p = sub.add_parser("mub", help="build, certify or export a MUB pair")
    p.add_argument("action", choices=["check", "export"])
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--grid", type=int, default=0, help="also certify sampled states on an n x n grid")
    p.add_argument("--waist", type=float, default=0.015)
    p.add_argument("--extent", type=float, default=0.24)
    p.set_defaults(func=_mub)

    p = sub.add_parser("keyrate", help="secure key rate and maximum tolerable error")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--qer", type=float, required=True)
    p.set_defaults(func=_keyrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StimQKDError, ValueError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
