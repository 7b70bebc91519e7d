"""``planeloc`` command line: extract-planes, localize, simulate, evaluate.

Exit codes: 0 success, 1 input or validation failure, 2 solver failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import RunConfig, load_config
from .errors import PlanelocError, SingularSystem

log = logging.getLogger("planeloc")


class _Parser(argparse.ArgumentParser):
    """Usage errors are input failures (exit 1); exit 2 is reserved for the solver."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p, out_help):
    p.add_argument("--config", metavar="PATH", help="key = value run configuration")
    p.add_argument("--seed", type=int, help="run seed (all sub-seeds derive from it)")
    p.add_argument("--workers", type=int, help="worker count for parallel stages")
    p.add_argument("--out", metavar="DIR", required=True, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="planeloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-planes", help="build a plane map from a point cloud")
    p.add_argument("cloud", help="point cloud text file (x y z per line)")
    _common(p, "output directory for planes.txt")

    p = sub.add_parser("localize", help="localize a stereo observation sequence against a plane map")
    p.add_argument("observations", help="observation CSV")
    p.add_argument("--planes", required=True, help="plane map file (may be empty)")
    p.add_argument("--init", metavar="PATH", help="KITTI pose file; first line is the first frame's pose")
    p.add_argument("--lambda", dest="lambda_weight", type=float, help="reprojection weight in [0, 1]")
    p.add_argument("--window", type=int, help="sliding window capacity in frames")
    _common(p, "output directory for trajectory.txt and run.log")

    p = sub.add_parser("simulate", help="write a synthetic scene")
    p.add_argument("preset", help="orthogonal3, corridor or turn")
    _common(p, "output directory for the scene files")

    p = sub.add_parser("evaluate", help="absolute trajectory error of an estimate")
    p.add_argument("estimate", help="estimated KITTI trajectory")
    p.add_argument("groundtruth", help="ground-truth KITTI trajectory")
    p.add_argument("--mode", choices=("planar", "spatial"), help="error components (default planar)")
    _common(p, "output directory for the report")
    return parser


def effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k, None) for k in ("seed", "workers", "lambda_weight", "window", "mode")}
    return cfg.with_overrides(**overrides)


def run(args) -> int:
    cfg = effective_config(args)
    if args.command == "extract-planes":
        pm = pipeline.extract_planes(args.cloud, cfg, args.out)
        print(f"{len(pm.planes)} planes")
        for p in pm.planes:
            n = p.normal
            print(f"plane {p.id}: normal ({n[0]:.4f}, {n[1]:.4f}, {n[2]:.4f}) offset {p.offset:.4f} "
                  f"support {p.support_count} rms {p.rms:.4f}")
    elif args.command == "localize":
        result = pipeline.localize(args.observations, args.planes, cfg, args.out, args.init)
        for line in result.log_lines:
            log.debug(line)
        print(f"{len(result.accepted)} of {len(result.trajectory)} frames localized")
    elif args.command == "simulate":
        scene = pipeline.simulate(args.preset, cfg, args.out)
        print(f"{len(scene.poses)} frames, {len(scene.landmarks)} landmarks, "
              f"{len(scene.observations)} observations, {len(scene.cloud)} map points")
    elif args.command == "evaluate":
        rep = pipeline.evaluate(args.estimate, args.groundtruth, cfg, args.out)
        print("mean rmse std max min")
        print(" ".join(f"{v:.6f}" for v in rep.row()))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return run(args)
    except SingularSystem as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return 2
    except (PlanelocError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
