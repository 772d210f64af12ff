"""Command-line interface: ``gausshand <subcommand> ...``.

Settings come from built-in defaults, then the config file (``--config`` or
``$GAUSSHAND_CONFIG``), then command-line flags; later sources win.

Exit status is 0 on success, 1 when processing fails and 2 for usage
errors. Failures print ``error: <ErrorClass>: <message>`` to stderr, or a
JSON object ``{"error": ..., "message": ...}`` with ``--json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .depth import (
    frame_from_grid,
    nearest_object_center,
    point_cloud,
    preprocess,
    quadtree_encode,
    quadtree_leaves,
)
from .energy import JointTarget, Observation, total_energy
from .errors import HandFitError, MissingIntrinsics, UnknownSubcommand, UsageError
from .fitter import fit_frame
from .gauss import CameraIntrinsics
from .metrics import joint_errors, mdpc, pcf_curve
from .skeleton import LABELED_6
from .synth import RenderSpec, hand_center, render_depth

DEPTH_SUFFIXES = (".pgm", ".raw", ".bin", ".depth")
PCF_THRESHOLDS = tuple(range(0, 81, 5))

log = logging.getLogger("gausshand")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gausshand", description=__doc__.splitlines()[0])
    p.add_argument("--json", action="store_true", help="print machine-readable JSON to stdout")
    p.add_argument("--threads", type=int, help="worker processes for directory inputs")
    p.add_argument("--config", help="run configuration file (default: $GAUSSHAND_CONFIG)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    f = sub.add_parser("fit", help="fit pose and shape to depth frames")
    f.add_argument("--depth", help="depth file, or a directory of depth files")
    f.add_argument("--camera")
    f.add_argument("--skeleton")
    f.add_argument("--annotations", help="annotation file, or a directory matched by file stem")
    f.add_argument("--weights")
    f.add_argument("--slack", type=float, help="joint supervision slack radius, mm")
    f.add_argument("--out", required=True, help="result file, or a directory for directory input")

    r = sub.add_parser("render", help="render a synthetic depth frame")
    r.add_argument("--skeleton")
    r.add_argument("--pose", required=True)
    r.add_argument("--camera", required=True)
    r.add_argument("--out", required=True, help="depth output (.pgm, or raw float otherwise)")
    r.add_argument("--gt", required=True, help="ground-truth annotation output")
    r.add_argument("--width", type=int, default=640)
    r.add_argument("--height", type=int, default=480)
    r.add_argument("--noise-mm", type=float, default=0.0)
    r.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", required=True, help="fit result file or directory")
    e.add_argument("--gt", required=True, help="annotation file or directory with joints")
    e.add_argument("--cloud-from", help="depth file or directory for the distance-to-cloud metric")
    e.add_argument("--camera", help="intrinsics of the --cloud-from depth files")
    e.add_argument("--report", required=True)

    q = sub.add_parser("quadtree-dump", help="list the image Gaussians of a depth frame")
    q.add_argument("--depth", required=True)
    q.add_argument("--camera", help="crop and resample with this camera (default: use the grid as is)")
    q.add_argument("--crop-center", type=float, nargs=3, metavar=("X", "Y", "Z"))
    q.add_argument("--c", type=float, help="quadtree depth-range threshold, mm")
    q.add_argument("--out", help="also write the dump to this file")

    g = sub.add_parser("energy-report", help="per-term energies of a pose on a frame")
    g.add_argument("--pose", required=True)
    g.add_argument("--depth")
    g.add_argument("--camera")
    g.add_argument("--skeleton")
    g.add_argument("--annotations")
    g.add_argument("--weights")
    g.add_argument("--slack", type=float)
    return p


COMMANDS = ("fit", "render", "eval", "quadtree-dump", "energy-report")


# -- shared frame preparation -------------------------------------------------------

@dataclass
class FrameJob:
    name: str
    depth: Path | None
    annotation: Path | None
    out: Path


def _settings(args, cfg: io.RunConfig):
    """Resolve model, camera and weights from config then flags."""
    skeleton = getattr(args, "skeleton", None) or cfg.skeleton
    camera = getattr(args, "camera", None) or cfg.camera
    weights = cfg.weights
    if getattr(args, "weights", None):
        weights = io.load_weights(args.weights, weights)
    if getattr(args, "slack", None) is not None:
        weights = weights.replace(slack_s=args.slack)
    cam = io.load_camera(camera) if camera else None
    return io.load_skeleton(skeleton), cam, weights


def _crop_targets(targets, cam, crop_cam):
    """Re-express 2D targets in the cropped grid's pixel coordinates."""
    out = []
    for t in targets:
        if t.kind == "2d":
            u, v = t.value
            t = JointTarget(t.joint_index, "2d",
                            (crop_cam.fx * (u - cam.cx) / cam.fx + crop_cam.cx,
                             crop_cam.fy * (v - cam.cy) / cam.fy + crop_cam.cy), t.visible)
        out.append(t)
    return out


def _crop_center(ann: io.Annotation | None, raw, cam):
    if ann is not None and ann.crop_center is not None:
        return ann.crop_center
    pts = [t.value for t in (ann.targets if ann else []) if t.visible and t.kind == "3d"]
    if pts:
        return np.mean(pts, axis=0)
    return nearest_object_center(raw, cam)


def _observation(depth_path, ann, cam, cfg: io.RunConfig):
    """Observation for one frame, in the cropped grid's camera when a depth file is given."""
    targets = ann.targets if ann else []
    needs_cam = depth_path is not None or any(t.kind == "2d" for t in targets)
    if needs_cam and cam is None:
        raise MissingIntrinsics("--camera is required for depth input and 2D targets")
    if depth_path is None:
        return Observation((), targets, cam), None
    raw = io.read_depth(depth_path)
    center = _crop_center(ann, raw, cam)
    frame = preprocess(raw, cam, center, cfg.crop_side, cfg.image_size)
    blobs = quadtree_encode(frame, cfg.quadtree_c)
    return Observation(blobs, _crop_targets(targets, cam, frame.cam), frame.cam), frame


def _fit_job(job: FrameJob, args_skeleton, args_camera, args_weights, args_slack, cfg: io.RunConfig):
    ns = argparse.Namespace(skeleton=args_skeleton, camera=args_camera, weights=args_weights, slack=args_slack)
    model, cam, weights = _settings(ns, cfg)
    anns = io.load_annotations(job.annotation) if job.annotation else [None]
    obs, _ = _observation(job.depth, anns[0], cam, cfg)
    res = fit_frame(model, obs, weights, cfg.fit)
    io.save_fit_result(job.out, res)
    return {"name": job.name, "out": str(job.out), "e_total": res.report.e_total,
            "iterations": res.iterations, "seed_index": res.seed_index}


def _run_jobs(fn, jobs, threads: int):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def _depth_files(d: Path) -> list[Path]:
    return sorted(p for p in d.iterdir() if p.suffix.lower() in DEPTH_SUFFIXES)


def _match(d: Path | None, stem: str, suffixes) -> Path | None:
    if d is None:
        return None
    for s in suffixes:
        if (d / (stem + s)).exists():
            return d / (stem + s)
    return None


class _Job:
    """Picklable closure over the per-run fit settings."""

    def __init__(self, fn, *extra):
        self.fn, self.extra = fn, extra

    def __call__(self, job):
        return self.fn(job, *self.extra)


# -- subcommands -------------------------------------------------------------------------

def cmd_fit(args, cfg):
    depth = Path(args.depth) if args.depth else None
    ann = Path(args.annotations) if args.annotations else None
    out = Path(args.out)
    if depth is None and ann is None:
        raise UsageError("fit needs --depth and/or --annotations")
    if depth is not None and depth.is_dir():
        if ann is not None and not ann.is_dir():
            raise UsageError("--annotations must be a directory when --depth is")
        jobs = [FrameJob(p.stem, p, _match(ann, p.stem, (".json",)), out / f"{p.stem}.json")
                for p in _depth_files(depth)]
        if not jobs:
            raise UsageError(f"no depth files in {depth}")
    elif depth is None and ann.is_dir():
        jobs = [FrameJob(p.stem, None, p, out / f"{p.stem}.json") for p in sorted(ann.glob("*.json"))]
    else:
        jobs = [FrameJob(depth.stem if depth else ann.stem, depth, ann, out)]
    fn = _Job(_fit_job, args.skeleton, args.camera, args.weights, args.slack, cfg)
    results = _run_jobs(fn, jobs, cfg.threads)
    return {"frames": results}, "\n".join(
        f"{r['name']}: E = {r['e_total']:.6g} after {r['iterations']} iterations (seed {r['seed_index']}) -> {r['out']}"
        for r in results)


def cmd_render(args, cfg):
    model = io.load_skeleton(args.skeleton or cfg.skeleton)
    cam = io.load_camera(args.camera)
    theta, beta = io.load_pose(args.pose)
    spec = RenderSpec(cam, args.width, args.height, noise_mm=args.noise_mm, seed=args.seed)
    r = render_depth(model, theta, beta, spec)
    targets = [JointTarget(j, "3d", tuple(r.joints[j])) for j in LABELED_6]
    ann = io.Annotation(targets, hand_center(r.joints), r.joints, r.theta, r.beta)
    io.write_depth(args.out, np.where(r.valid, r.depth, 0.0))
    io.write_json(args.gt, io.annotation_to_dict(ann))
    n = int(r.valid.sum())
    return ({"depth": args.out, "gt": args.gt, "valid_pixels": n},
            f"wrote {args.out} ({n} valid pixels) and {args.gt}")


def _cloud(depth_path, cam, ann, cfg):
    raw = io.read_depth(depth_path)
    frame = preprocess(raw, cam, _crop_center(ann, raw, cam), cfg.crop_side, cfg.image_size)
    return point_cloud(frame)


def cmd_eval(args, cfg):
    pred, gt = Path(args.pred), Path(args.gt)
    cloud_src = Path(args.cloud_from) if args.cloud_from else None
    camera = args.camera or cfg.camera
    if cloud_src is not None and camera is None:
        raise MissingIntrinsics("--cloud-from needs --camera to back-project depth")
    cam = io.load_camera(camera) if camera else None
    if pred.is_dir():
        pairs = [(p.stem, p, gt / p.name) for p in sorted(pred.glob("*.json"))]
    else:
        pairs = [(pred.stem, pred, gt)]
    frames = []
    P, G = [], []
    for name, pp, gp in pairs:
        if not gp.exists():
            raise UsageError(f"no ground truth for {name} at {gp}")
        res = io.load_fit_result(pp)
        ann = io.load_annotations(gp)[0]
        if ann.joints is None:
            raise UsageError(f"{gp} has no joints to evaluate against")
        err = joint_errors(res.joints, ann.joints)[0]
        rec = {"name": name, "mean_error": float(err.mean()), "max_error": float(err.max()),
               "mean_error_labeled6": float(err[list(LABELED_6)].mean())}
        if cloud_src is not None:
            src = _match(cloud_src, name, DEPTH_SUFFIXES) if cloud_src.is_dir() else cloud_src
            if src is None:
                raise UsageError(f"no depth file for {name} in {cloud_src}")
            m = mdpc(res.joints, _cloud(src, cam, ann, cfg))
            rec["mdpc_median"], rec["mdpc_mean"] = m.median, m.mean
        frames.append(rec)
        P.append(res.joints)
        G.append(ann.joints)
    errs = joint_errors(np.array(P), np.array(G))
    report = {
        "frames": frames,
        "mean_per_joint_error": float(errs.mean()),
        "mean_per_joint_error_labeled6": float(errs[:, list(LABELED_6)].mean()),
        "pcf": {"thresholds_mm": list(PCF_THRESHOLDS),
                "fraction": pcf_curve(errs.max(axis=1), PCF_THRESHOLDS).tolist()},
    }
    if cloud_src is not None:
        report["mdpc_median"] = float(np.median([f["mdpc_median"] for f in frames]))
        report["mdpc_mean"] = float(np.mean([f["mdpc_mean"] for f in frames]))
    io.write_json(args.report, report)
    text = f"{len(frames)} frames, mean per-joint error {report['mean_per_joint_error']:.3f} mm"
    if cloud_src is not None:
        text += f", MDPC mean {report['mdpc_mean']:.3f} mm"
    return report, text


def cmd_quadtree_dump(args, cfg):
    raw = io.read_depth(args.depth)
    c = args.c if args.c is not None else cfg.quadtree_c
    camera = args.camera or cfg.camera
    if camera:
        cam = io.load_camera(camera)
        center = args.crop_center if args.crop_center else nearest_object_center(raw, cam)
        frame = preprocess(raw, cam, center, cfg.crop_side, cfg.image_size)
    else:
        # the grid is taken as already cropped; the camera only matters in 3D
        h, w = raw.shape
        cam = CameraIntrinsics(1.0, 1.0, 0.5 * (w - 1), 0.5 * (h - 1))
        frame = frame_from_grid(raw, cam, cfg.crop_side)
    leaves = quadtree_leaves(frame, c)
    blobs = [{"mu": list(l.blob.mu_i), "sigma": l.blob.sigma_i, "z": l.blob.z_i,
              "rows": [l.r0, l.r1], "cols": [l.c0, l.c1], "n_valid": l.n_valid}
             for l in leaves if l.blob is not None]
    doc = {"c_mm": c, "height": frame.height, "width": frame.width, "n_leaves": len(leaves), "blobs": blobs}
    if args.out:
        io.write_json(args.out, doc)
    lines = [f"{len(blobs)} blobs from {len(leaves)} leaves (c = {c:g} mm)"]
    lines += [f"  mu=({b['mu'][0]:.1f}, {b['mu'][1]:.1f}) sigma={b['sigma']:.2f} z={b['z']:.1f}" for b in blobs]
    return doc, "\n".join(lines)


def cmd_energy_report(args, cfg):
    model, cam, weights = _settings(args, cfg)
    theta, beta = io.load_pose(args.pose)
    ann = io.load_annotations(args.annotations)[0] if args.annotations else None
    obs, _ = _observation(Path(args.depth) if args.depth else None, ann, cam, cfg)
    if not obs.has_image:
        weights = weights.replace(lambda_dissim=0.0)
    rep = total_energy(model, theta, beta, obs, weights)
    doc = {**rep.terms(), "grad_norm": float(np.linalg.norm(rep.grad)), "n_image_blobs": len(obs.image_blobs)}
    return doc, "\n".join(f"{k:12s} {v:.9g}" for k, v in doc.items())


HANDLERS = {"fit": cmd_fit, "render": cmd_render, "eval": cmd_eval,
            "quadtree-dump": cmd_quadtree_dump, "energy-report": cmd_energy_report}


def _first_positional(argv):
    skip = False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--threads", "--config"):
            skip = True
        elif not a.startswith("-"):
            return a
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    as_json = "--json" in argv
    try:
        cmd = _first_positional(argv)
        if cmd is None and ("-h" in argv or "--help" in argv):
            _build_parser().print_help()
            return 0
        if cmd is None:
            raise UsageError(f"missing subcommand; choose from {', '.join(COMMANDS)}")
        if cmd not in COMMANDS:
            raise UnknownSubcommand(f"{cmd!r}; choose from {', '.join(COMMANDS)}")
        args = _build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = io.load_config(args.config)
        if args.threads is not None:
            cfg.threads = args.threads
            cfg.__post_init__()
        doc, text = HANDLERS[cmd](args, cfg)
    except HandFitError as e:
        _report_error(e.code, str(e), as_json)
        return 2 if isinstance(e, (UsageError, UnknownSubcommand)) else 1
    except OSError as e:
        _report_error(type(e).__name__, str(e), as_json)
        return 1
    print(json.dumps(doc) if as_json else text)
    return 0


def _report_error(code: str, message: str, as_json: bool):
    if as_json:
        print(json.dumps({"error": code, "message": message}))
    print(f"error: {code}: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
