"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 infeasible mission (partial outputs
written), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from importlib.resources import files
from pathlib import Path

import numpy as np

from .dop import heatmap
from .errors import AnchorDeployError, InfeasibleRegionError, ScenarioError
from .harness import run_mission, run_trivial_baseline
from .harness.studies import montecarlo_bias_study, taguchi_sweep
from .scenario import ExplorationScenario

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

BUILTIN_SCENARIO = "reference_sim.json"

log = logging.getLogger("anchor_deploy")


def builtin_scenario_path() -> Path:
    return Path(str(files("anchor_deploy") / "scenarios" / BUILTIN_SCENARIO))


def _load(args) -> ExplorationScenario:
    sc = ExplorationScenario.load(args.scenario)
    if getattr(args, "seed", None) is not None:
        sc = sc.with_seed(args.seed)
    return sc


def cmd_simulate(args) -> int:
    sc = _load(args)
    res = run_trivial_baseline(sc) if args.trivial else run_mission(sc)
    out = Path(args.out)
    res.write(out)
    if args.no_wall_clock:
        (out / "metrics.json").write_text(json.dumps(res.metrics.to_dict(wall_clock=False), indent=2, sort_keys=True) + "\n")
    mt = res.metrics
    print(f"anchors deployed: {mt.m}  travelled: {mt.d_t:.2f} m  max pdop: {mt.max_pdop:.4f}  violations: {mt.violations}")
    if mt.aborted:
        print(f"mission aborted: {mt.abort_reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_heatmap(args) -> int:
    if not args.resolution > 0:
        raise ValueError("resolution must be positive")
    sc = _load(args)
    if args.initial:
        anchors = sc.initial_positions
    else:
        res = run_mission(sc)
        if res.metrics.aborted:
            print(f"mission aborted: {res.metrics.abort_reason}", file=sys.stderr)
        anchors = res.anchors.est_positions()
    if args.bbox is None:
        pts = np.vstack([sc.load_path().viapoints, anchors])
        lo, hi = np.floor(pts.min(axis=0)) - args.margin, np.ceil(pts.max(axis=0)) + args.margin
        bbox = ((lo[0], lo[1]), (hi[0], hi[1]))
    else:
        x0, y0, x1, y1 = args.bbox
        if not (x1 > x0 and y1 > y0):
            raise ValueError("bbox must be x0 y0 x1 y1 with x1 > x0 and y1 > y0")
        bbox = ((x0, y0), (x1, y1))
    hm = heatmap(anchors, bbox, args.resolution, sc.ganp.rho_max)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    sidecar = hm.write(out)
    print(f"wrote {out} and {sidecar} ({hm.values.shape[0]} x {hm.values.shape[1]})")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    sc = _load(args)
    res = montecarlo_bias_study(sc, trials=args.trials, full_scale=args.full_scale)
    res.write(args.out)
    s = res.summary
    print(f"trials: {s['trials']}")
    for mode in ("noise", "offset"):
        print(f"{mode:>6}: bias {s[mode]['bias_norm']:.4f} m  std x {s[mode]['std_x']:.4f} m")
    return EXIT_OK


def cmd_taguchi(args) -> int:
    sc = _load(args)
    res = taguchi_sweep(sc, replicates=args.replicates)
    res.write(args.out, wall_clock=not args.no_wall_clock)
    for row in res.rows:
        print(f"w={row.w:g} r={row.r:g} n={row.n}: m={row.mean('m_total'):.2f} d_t={row.mean('d_t'):.1f}")
    return EXIT_OK


def cmd_example(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = builtin_scenario_path()
    doc = json.loads(src.read_text())
    shutil.copy(src, out / src.name)
    shutil.copy(src.parent / doc["path_csv"], out / doc["path_csv"])
    print(out / src.name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anchor-deploy", description="UWB anchor deployment simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("scenario", type=Path, help="scenario JSON file")
        sp.add_argument("--seed", type=int, help="override the scenario seed")

    sp = sub.add_parser("simulate", help="run one mission")
    common(sp)
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--trivial", action="store_true", help="use the four-anchor block rule instead of GANP")
    sp.add_argument("--no-wall-clock", action="store_true", help="omit timing fields")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("heatmap", help="PDoP grid of the final (or initial) anchor set")
    common(sp)
    sp.add_argument("--out", required=True, help="output CSV; a JSON sidecar is written next to it")
    sp.add_argument("--resolution", type=float, default=1.0)
    sp.add_argument("--bbox", type=float, nargs=4, metavar=("X0", "Y0", "X1", "Y1"))
    sp.add_argument("--margin", type=float, default=10.0, help="padding of the automatic bbox")
    sp.add_argument("--initial", action="store_true", help="use the initial anchors only")
    sp.set_defaults(func=cmd_heatmap)

    sp = sub.add_parser("montecarlo", help="deployment-offset bias study")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trials", type=int, help="override the scenario trial count (>= 10000)")
    sp.add_argument("--full-scale", action="store_true", help="run 10^6 trials")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("taguchi", help="L9 sweep over w, r, n")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--replicates", type=int, help="seeds per row (default: scenario replicates)")
    sp.add_argument("--no-wall-clock", action="store_true", help="omit timing columns and rows")
    sp.set_defaults(func=cmd_taguchi)

    sp = sub.add_parser("example-scenario", help="copy the bundled scenario and its path file")
    sp.add_argument("out", help="destination directory")
    sp.set_defaults(func=cmd_example)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except np.linalg.LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ScenarioError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleRegionError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except AnchorDeployError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
