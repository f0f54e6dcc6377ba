"""Command line front end.

Exit codes: 0 ok, 2 usage, 3 parse/validation, 4 numerical, 5 I/O.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis
from .dataset import load_dataset, save_dataset
from .errors import VocovarError
from .graph import GaugeConfig, SolverConfig, build_graph, gauss_newton_solve
from .simulate import ScenarioSpec, simulate_scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("vocovar")


def _add_common(p):
    p.add_argument("dataset", help="dataset file (vocovar-dataset v1)")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    g = p.add_argument_group("gauge")
    g.add_argument("--gauge-rot-sigma", type=float, default=1e-4, help="prior sigma on rotation, rad")
    g.add_argument("--gauge-trans-sigma", type=float, default=1e-4, help="prior sigma on translation, m")
    g.add_argument("--gauge-frames", type=int, nargs="*", default=[0, 1], help="keyframes that get a prior")
    s = p.add_argument_group("solver")
    s.add_argument("--tol", type=float, default=1e-8, help="stop when |dx|_inf falls below this")
    s.add_argument("--max-iters", type=int, default=50)
    s.add_argument("--no-damping", action="store_true", help="plain Gauss-Newton steps")
    s.add_argument("--flow-sigma", type=float, default=1.0, help="default flow noise, pixels")


def _parser():
    ap = argparse.ArgumentParser(prog="vocovar", description="Covariance recovery for dense-BA visual odometry.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a dataset")
    p.add_argument("dataset")

    p = sub.add_parser("solve", help="optimize poses and depths; writes a pose CSV")
    _add_common(p)
    p.add_argument("--dataset-out", help="also write the dataset with optimized poses and depths")

    p = sub.add_parser("marginals", help="per-keyframe marginal covariance CSV")
    _add_common(p)
    p.add_argument("--at-input", action="store_true", help="linearize at the dataset values without solving")

    p = sub.add_parser("trend", help="newest-keyframe D-opt over growing windows")
    _add_common(p)
    p.add_argument("--plot", help="SVG plot path (default: <output>.svg when -o is given)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("covis", help="co-visibility adjacency CSV")
    p.add_argument("dataset")
    p.add_argument("-o", "--output")

    p = sub.add_parser("simulate", help="generate a synthetic dataset from a JSON scenario spec")
    p.add_argument("spec", help="JSON scenario file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int, help="override the spec's seed")
    return ap


def _configs(args):
    gauge = GaugeConfig(args.gauge_rot_sigma, args.gauge_trans_sigma, tuple(args.gauge_frames))
    cfg = SolverConfig(tol=args.tol, max_iters=args.max_iters, damping=not args.no_damping)
    return gauge, cfg


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _poses_csv(poses: dict) -> str:
    buf = io.StringIO()
    buf.write("keyframe,qw,qx,qy,qz,tx,ty,tz\n")
    for k in sorted(poses):
        buf.write(f"{k}," + ",".join(repr(float(v)) for v in poses[k].to_vector7()) + "\n")
    return buf.getvalue()


def _solve(args, ds):
    gauge, cfg = _configs(args)
    g, x0 = build_graph(ds, gauge, args.flow_sigma)
    x, report = gauss_newton_solve(g, x0, cfg)
    log.info("solve: %d iterations, cost %.6g -> %.6g, converged=%s",
             report.iterations, report.initial_cost, report.final_cost, report.converged)
    return g, x


def _with_solution(ds, x):
    offsets = ds.sample_offsets()
    kfs = []
    for kf in ds.keyframes:
        smp = tuple(
            replace(s, inv_depth=x.inv_depths.get(offsets[kf.id] + q, s.inv_depth))
            for q, s in enumerate(kf.samples)
        )
        kfs.append(replace(kf, pose=x.poses.get(kf.id, kf.pose), samples=smp))
    return replace(ds, keyframes=tuple(kfs))


def run(args) -> int:
    if args.command == "simulate":
        spec = ScenarioSpec.load(args.spec)
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        ds, _ = simulate_scenario(spec)
        save_dataset(ds, args.output)
        return EXIT_OK

    ds = load_dataset(args.dataset)
    if args.command == "validate":
        print(f"ok: {ds.num_keyframes} keyframes, "
              f"{sum(len(k.samples) for k in ds.keyframes)} samples, {len(ds.measurements)} measurements")
    elif args.command == "covis":
        g, _ = build_graph(ds, GaugeConfig(frames=()))
        _emit(analysis.covisibility(g, ds.num_keyframes).to_csv(), args.output)
    elif args.command == "solve":
        _, x = _solve(args, ds)
        _emit(_poses_csv(x.poses), args.output)
        if args.dataset_out:
            save_dataset(_with_solution(ds, x), args.dataset_out)
    elif args.command == "marginals":
        if args.at_input:
            gauge, _ = _configs(args)
            g, x = build_graph(ds, gauge, args.flow_sigma)
        else:
            g, x = _solve(args, ds)
        _emit(analysis.marginals_csv(analysis.pose_marginals(g, x)), args.output)
    elif args.command == "trend":
        gauge, cfg = _configs(args)
        ts = analysis.trend_series(ds, cfg, gauge, args.flow_sigma, workers=args.workers)
        _emit(ts.to_csv(), args.output)
        plot = args.plot or (str(Path(args.output).with_suffix(".svg")) if args.output else None)
        if plot:
            g, _ = build_graph(ds, GaugeConfig(frames=()))
            covis = analysis.covisibility(g, ds.num_keyframes)
            Path(plot).write_text(analysis.trend_svg(ts, covis, Path(args.dataset).name), encoding="utf-8")
    return EXIT_OK


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return run(args)
    except VocovarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
