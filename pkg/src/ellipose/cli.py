"""Command line: synth, register2d-bench, pose, eval.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ElliposeError
from .io import atomic_writer
from .metrics import REGISTRATION_METRICS, MetricKind

log = logging.getLogger("ellipose")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _metric(name: str) -> str:
    try:
        return MetricKind.parse(name).value
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg(value: str) -> float:
    x = float(value)
    if x < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {value}")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ellipose", description="Camera pose from ellipse detections and an ellipsoid map.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic scene and frames")
    s.add_argument("config", help="SynthConfig JSON file")
    s.add_argument("--out", required=True, help="output directory (scene.json, frames.json)")
    s.add_argument("--seed", type=int, help="override the config seed")
    s.add_argument("--frames", type=int, help="override the number of frames")

    r = sub.add_parser("register2d-bench", help="2D ellipse registration benchmark")
    r.add_argument("--trials", type=int, default=1000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--noise", choices=("off", "on", "both"), default="both")
    r.add_argument("--metrics", type=_metric, nargs="+", default=[m.value for m in REGISTRATION_METRICS])
    r.add_argument("--pivot", choices=("center", "origin"), default="center")
    r.add_argument("--out", default="register2d", help="output directory")
    r.add_argument("--workers", type=int, default=None)

    q = sub.add_parser("pose", help="estimate camera poses for every frame")
    q.add_argument("--scene", required=True)
    q.add_argument("--frames", required=True)
    q.add_argument("--out", required=True, help="estimates JSON")
    q.add_argument("--metric", type=_metric, default="levelset")
    q.add_argument("--no-refine", action="store_true")
    q.add_argument("--uncertainty", action="store_true", help="weight each object by 1/sigma")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--init-noise-pos", type=_nonneg, default=0.0, help="meters; starts from a perturbed true pose")
    q.add_argument("--init-noise-rot", type=_nonneg, default=0.0, help="degrees; starts from a perturbed true pose")
    q.add_argument("--init", choices=("ransac", "ransac-gt-assoc", "truth"), default=None)
    q.add_argument("--workers", type=int, default=None)

    e = sub.add_parser("eval", help="compare estimates with ground truth")
    e.add_argument("--frames", required=True, help="frames JSON with ground-truth poses")
    e.add_argument("--estimates", required=True, nargs="+", help="one or more estimates JSON files")
    e.add_argument("--out", default="eval", help="output directory")
    e.add_argument("--max-threshold", type=float, default=0.5, help="largest position threshold (m)")
    return p


def cmd_synth(args) -> int:
    from .scene import load_config, synth_generate, write_dataset
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.frames is not None:
        overrides["n_frames"] = args.frames
    if overrides:
        cfg = type(cfg).from_dict({**cfg.to_dict(), **overrides})
    scene, frames = synth_generate(cfg)
    scene_path, frames_path = write_dataset(args.out, scene, frames)
    print(f"wrote {len(scene)} objects to {scene_path} and {len(frames)} frames to {frames_path}")
    return EXIT_OK


def cmd_register(args) -> int:
    from .registration2d import NoiseSpec, run_benchmark
    from .svg import bar_chart
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    out = Path(args.out)
    settings = {"off": [False], "on": [True], "both": [False, True]}[args.noise]
    reports = {}
    for noisy in settings:
        rep = run_benchmark(args.trials, args.metrics, NoiseSpec(enabled=noisy), args.seed,
                            workers=args.workers, pivot=args.pivot)
        tag = "noise" if noisy else "nonoise"
        rep.write_trials_csv(out / f"trials_{tag}.csv")
        rep.write_summary_csv(out / f"summary_{tag}.csv")
        reports[tag] = rep
        bar_chart(out / f"position_{tag}.svg", rep.metrics(), [rep.mean_position_error(m) for m in rep.metrics()],
                  title=f"Mean position error ({tag})", ylabel="pixels")
        bar_chart(out / f"rotation_{tag}.svg", rep.metrics(), [rep.mean_rotation_error(m) for m in rep.metrics()],
                  title=f"Mean rotation error ({tag})", ylabel="degrees")
    with atomic_writer(out / "table.csv") as fh:
        w = csv.writer(fh)
        header = ["metric"]
        for tag in reports:
            header += [f"pos_err_px_{tag}", f"rot_err_deg_{tag}"]
        w.writerow(header)
        for m in args.metrics:
            row = [m]
            for rep in reports.values():
                row += [f"{rep.mean_position_error(m):.6g}", f"{rep.mean_rotation_error(m):.6g}"]
            w.writerow(row)
    for tag, rep in reports.items():
        print(f"[{tag}] {args.trials} trials in {rep.elapsed_s:.1f}s")
        for m, pos, rot, fails in rep.summary_rows():
            print(f"  {m:<14} pos {pos:10.4g} px   rot {rot:10.4g} deg   failures {fails}")
    return EXIT_OK


def cmd_pose(args) -> int:
    from .bench import PoseRunConfig, run_pose
    from .scene import load_frames, load_scene, save_estimates
    scene = load_scene(args.scene)
    frames = load_frames(args.frames)
    perturbed = args.init_noise_pos > 0 or args.init_noise_rot > 0
    init = args.init or ("truth" if perturbed else "ransac")
    if perturbed and init != "truth":
        raise UsageError("--init-noise-* perturbs the ground-truth pose and needs --init truth")
    cfg = PoseRunConfig(metric=args.metric, refine=not args.no_refine, use_uncertainty=args.uncertainty,
                        seed=args.seed, init_pos_noise=args.init_noise_pos,
                        init_rot_noise_deg=args.init_noise_rot, init=init)
    outcomes = run_pose(scene, frames, cfg, workers=args.workers)
    save_estimates(args.out, [(o.frame_id, o.estimate, o.error) for o in outcomes])
    failed = [o for o in outcomes if o.estimate is None]
    for o in failed:
        log.warning("frame %s: %s", o.frame_id, o.error)
    print(f"wrote {len(outcomes)} estimates to {args.out} ({len(failed)} failed)")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate
    from .scene import estimate_from_dict, load_estimates, load_frames
    from .svg import line_chart
    frames = load_frames(args.frames)
    gt = {f.frame_id: f.gt_camera for f in frames}
    if any(c is None for c in gt.values()):
        raise ElliposeError("every frame needs a ground-truth pose for evaluation")
    by_id = {f.frame_id: f for f in frames}
    counts = {f.frame_id: len(f.detections) for f in frames}
    out = Path(args.out)
    thresholds = np.linspace(0.0, args.max_threshold, 100)
    pos_series, rot_series = {}, {}
    for path in args.estimates:
        name = Path(path).stem
        est = {}
        for d in load_estimates(path):
            fid = d["frame_id"]
            if fid not in by_id:
                from .errors import FrameMismatch
                raise FrameMismatch(f"estimate for unknown frame {fid}")
            est[fid] = None
            e = estimate_from_dict(d, by_id[fid].K, by_id[fid].image_size)
            if e is not None:
                est[fid] = e.camera
        report = evaluate(est, gt, counts, pos_thresholds=thresholds)
        report.write_frames_csv(out / f"{name}_frames.csv")
        report.write_curves_csv(out / f"{name}_curves.csv")
        pos_series[name] = (report.pos_thresholds, report.position_curve())
        rot_series[name] = (report.rot_thresholds, report.orientation_curve())
        groups = {f"{n} objects": (report.pos_thresholds, c) for n, c in report.group_curves().items()}
        line_chart(out / f"{name}_by_objects.svg", groups, title=f"{name}: localized fraction by object count",
                   xlabel="position threshold (m)", ylabel="fraction of frames")
        print(f"{name}: median position {report.median_position_error():.4f} m, "
              f"median orientation {report.median_orientation_error():.3f} deg over {len(report.frames)} frames")
    line_chart(out / "position_curves.svg", pos_series, title="Correctly localized frames",
               xlabel="position threshold (m)", ylabel="fraction of frames")
    line_chart(out / "orientation_curves.svg", rot_series, title="Correctly oriented frames",
               xlabel="orientation threshold (deg)", ylabel="fraction of frames")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "register2d-bench": cmd_register, "pose": cmd_pose, "eval": cmd_eval}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ElliposeError, OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
