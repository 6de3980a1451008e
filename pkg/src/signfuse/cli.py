"""Command-line interface.

Exit codes: 0 on success, 1 on bad input (files, schema, configuration),
2 on numerical failure.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .errors import NumericalFailureError, ParseError, SignfuseError
from .metrics import RegionMask, evaluate, write_traces_csv
from .pipeline import ABLATIONS, PipelineConfig, load_config, run_pipeline, smooth_poses
from .sequence import load_sequence, save_sequence
from .synth import generate, load_spec

log = logging.getLogger("signfuse")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2


def _config(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "preset", None):
        cfg.stages = PipelineConfig.preset(args.preset).stages
    return cfg


def cmd_fuse(args):
    seq = load_sequence(args.input)
    out = run_pipeline(seq, _config(args))
    save_sequence(out, args.output)
    timing = out.metadata["timing"]
    log.info("fused %d frames in %.2f s (%.4f s/frame)", timing["frames"], timing["total_s"], timing["s_per_frame"])
    errors = out.metadata["errors"]
    if errors:
        log.warning("%d frame(s) passed through unfused", len(errors))
    if any(e["kind"] == "numerical" for e in errors):
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_smooth(args):
    seq = load_sequence(args.input)
    cfg = _config(args)
    save_sequence(smooth_poses(seq, cfg.smooth), args.output)
    return EXIT_OK


def _points(path):
    """``(points (T,N,3) in meters, boundaries, tree or None)`` from a sequence or point file."""
    if str(path).endswith(".npy"):
        pts = np.load(path)
        return pts, (), None
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read: {exc}", str(path)) from None
    if isinstance(data, dict) and "points" in data:
        pts = np.asarray(data["points"], dtype=float)
        if pts.ndim != 3 or pts.shape[2] != 3:
            raise ParseError("points must be T x N x 3", str(path), "points")
        return pts, tuple(data.get("boundaries", ())), None
    seq = load_sequence(path)
    return seq.joint_positions(), seq.boundaries, seq


def _regions(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read regions: {exc}", str(path)) from None
    wrists = data.pop("wrists", None)
    return RegionMask(data), wrists


def cmd_eval(args):
    pred, _, pred_seq = _points(args.pred)
    gt, boundaries, gt_seq = _points(args.gt)
    tree_seq = gt_seq or pred_seq
    wrists = None
    if args.regions:
        mask, wrists = _regions(args.regions)
    elif tree_seq is not None:
        mask = RegionMask.from_tree(tree_seq.tree)
    else:
        raise ParseError("--regions is required for point files", args.pred)
    if wrists is None and tree_seq is not None:
        wrists = (tree_seq.tree.landmarks["l_wrist"], tree_seq.tree.landmarks["r_wrist"])
    timing = pred_seq.metadata.get("timing") if pred_seq is not None else None
    report = evaluate(pred, gt, mask, boundaries, wrists=wrists, timing=timing)
    with open(args.report, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    if args.traces:
        write_traces_csv(report, args.traces)
    log.info("PA-MPVPE %s", {k: round(v, 3) for k, v in report.pa_mpvpe.items()})
    return EXIT_OK


def cmd_synth(args):
    spec = load_spec(args.spec)
    gt, corrupted = generate(spec)
    save_sequence(gt, args.out_gt)
    save_sequence(corrupted, args.out_corrupted)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="signfuse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fuse", help="run the fusion pipeline on a sequence")
    f.add_argument("--input", required=True)
    f.add_argument("--config")
    f.add_argument("--preset", choices=sorted(ABLATIONS), help="override the stage toggles")
    f.add_argument("--output", required=True)
    f.set_defaults(func=cmd_fuse)

    s = sub.add_parser("smooth", help="temporal smoothing only")
    s.add_argument("--input", required=True)
    s.add_argument("--config")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_smooth)

    e = sub.add_parser("eval", help="PA-MPVPE, jitter and RTE of a prediction")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--regions")
    e.add_argument("--report", required=True)
    e.add_argument("--traces")
    e.set_defaults(func=cmd_eval)

    y = sub.add_parser("synth", help="generate a synthetic ground truth and its corrupted inputs")
    y.add_argument("--spec", required=True)
    y.add_argument("--out-gt", required=True)
    y.add_argument("--out-corrupted", required=True)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalFailureError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except (SignfuseError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
