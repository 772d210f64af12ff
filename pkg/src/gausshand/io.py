"""File formats and run configuration.

All documents are JSON. Writes go to a temporary file in the target
directory and are renamed into place, so a reader never sees a partial
file; a truncated JSON or depth file fails to parse.

Camera
    ``{"fx", "fy", "cx", "cy"}`` in pixels.
Pose
    ``{"theta": 26 numbers, "beta": 20 numbers}`` (beta optional, zeros).
Annotations
    One frame ``{"crop_center"?, "targets": [...], "theta"?, "beta"?,
    "joints"?}`` or ``{"frames": [frame, ...]}``. A target is
    ``{"joint_index", "kind": "2d" | "3d", "value", "visible"?}``.
Weights
    Any subset of the :class:`~gausshand.energy.EnergyWeights` fields.
Config
    ``{"skeleton", "camera", "weights", "fit", "quadtree_c", "crop_side",
    "image_size", "threads"}``, every key optional. ``weights`` and ``fit``
    are objects of field overrides; relative paths resolve against the
    config file's directory. Without an explicit path the file named by
    ``$GAUSSHAND_CONFIG`` is used, if set.
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .depth import CROP_SIDE_MM, IMAGE_SIZE, QUADTREE_C_MM, decode_depth, encode_pgm, encode_raw
from .energy import EnergyReport, EnergyWeights, JointTarget
from .errors import ParseError, ValidationError
from .fitter import FitConfig, FitResult, FitStage
from .gauss import CameraIntrinsics
from .hand import HandModel, default_hand_model, hand_model_from_dict
from .skeleton import N_JOINTS, N_POSE, N_SHAPE

CONFIG_ENV = "GAUSSHAND_CONFIG"


# -- raw reading and atomic writing ------------------------------------------

def atomic_write(path, data) -> None:
    """Write bytes or text to ``path`` through a temp file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc) -> str:
    # repr-precision floats, so finite doubles survive a round trip exactly
    return json.dumps(doc, indent=1) + "\n"


def write_json(path, doc) -> None:
    atomic_write(path, dumps(doc))


def read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None


def read_depth(path) -> np.ndarray:
    """Depth grid in mm from a PGM or raw float file; 0 where invalid."""
    return decode_depth(Path(path).read_bytes())


def write_depth(path, depth_mm) -> None:
    """Write a ``.pgm`` (16-bit mm) or, for any other suffix, a raw float file."""
    data = encode_pgm(depth_mm) if Path(path).suffix.lower() == ".pgm" else encode_raw(depth_mm)
    atomic_write(path, data)


# -- typed loaders -------------------------------------------------------------

def _object(doc, where: str) -> dict:
    if not isinstance(doc, dict):
        raise ValidationError(where, "expected a JSON object")
    return doc


def _vector(doc, key: str, n: int, where: str, default=None) -> np.ndarray:
    if key not in doc:
        if default is not None:
            return default
        raise ValidationError(f"{where}.{key}", "missing")
    try:
        v = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}.{key}", "must be a list of numbers") from None
    if v.shape != (n,):
        raise ValidationError(f"{where}.{key}", f"expected {n} numbers, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{where}.{key}", "must be finite")
    return v


def load_skeleton(path=None) -> HandModel:
    """The hand model in a skeleton file, or the shipped default."""
    if path is None:
        return default_hand_model()
    return hand_model_from_dict(_object(read_json(path), "skeleton"))


def camera_from_dict(doc) -> CameraIntrinsics:
    doc = _object(doc, "camera")
    missing = [k for k in ("fx", "fy", "cx", "cy") if k not in doc]
    if missing:
        raise ValidationError(f"camera.{missing[0]}", "missing")
    try:
        return CameraIntrinsics(*(float(doc[k]) for k in ("fx", "fy", "cx", "cy")))
    except (TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError("camera", "intrinsics must be numbers") from None


def camera_to_dict(cam: CameraIntrinsics) -> dict:
    return {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy}


def load_camera(path) -> CameraIntrinsics:
    return camera_from_dict(read_json(path))


def load_pose(path) -> tuple[np.ndarray, np.ndarray]:
    doc = _object(read_json(path), "pose")
    theta = _vector(doc, "theta", N_POSE, "pose")
    beta = _vector(doc, "beta", N_SHAPE, "pose", default=np.zeros(N_SHAPE))
    return theta, beta


def weights_from_dict(doc, base: EnergyWeights = EnergyWeights()) -> EnergyWeights:
    doc = _object(doc, "weights")
    known = {f.name for f in fields(EnergyWeights)}
    for k, v in doc.items():
        if k not in known:
            raise ValidationError(f"weights.{k}", "unknown weight")
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(k, "must be a number")
    return base.replace(**{k: float(v) for k, v in doc.items()})


def load_weights(path, base: EnergyWeights = EnergyWeights()) -> EnergyWeights:
    return weights_from_dict(read_json(path), base)


@dataclass
class Annotation:
    """One annotated frame; any field may be absent."""

    targets: list = field(default_factory=list)
    crop_center: np.ndarray | None = None
    joints: np.ndarray | None = None
    theta: np.ndarray | None = None
    beta: np.ndarray | None = None


def target_from_dict(doc, where: str) -> JointTarget:
    doc = _object(doc, where)
    for k in ("joint_index", "kind", "value"):
        if k not in doc:
            raise ValidationError(f"{where}.{k}", "missing")
    try:
        return JointTarget(int(doc["joint_index"]), str(doc["kind"]), tuple(doc["value"]),
                           bool(doc.get("visible", True)))
    except ValidationError as e:
        raise ValidationError(f"{where}.{e.field}", str(e).split(": ", 1)[-1]) from None
    except (TypeError, ValueError):
        raise ValidationError(where, "malformed target") from None


def annotation_from_dict(doc, where: str = "frame") -> Annotation:
    doc = _object(doc, where)
    targets = [target_from_dict(t, f"{where}.targets[{i}]") for i, t in enumerate(doc.get("targets", []))]
    ann = Annotation(targets)
    if "crop_center" in doc:
        ann.crop_center = _vector(doc, "crop_center", 3, where)
    if "joints" in doc:
        j = np.asarray(doc["joints"], dtype=float)
        if j.shape != (N_JOINTS, 3) or not np.all(np.isfinite(j)):
            raise ValidationError(f"{where}.joints", f"expected {N_JOINTS} finite 3D points")
        ann.joints = j
    if "theta" in doc:
        ann.theta = _vector(doc, "theta", N_POSE, where)
    if "beta" in doc:
        ann.beta = _vector(doc, "beta", N_SHAPE, where)
    return ann


def annotation_to_dict(ann: Annotation) -> dict:
    doc = {}
    for name in ("crop_center", "theta", "beta", "joints"):
        v = getattr(ann, name)
        if v is not None:
            doc[name] = np.asarray(v).tolist()
    doc["targets"] = [{"joint_index": t.joint_index, "kind": t.kind, "value": list(t.value),
                       "visible": t.visible} for t in ann.targets]
    return doc


def load_annotations(path) -> list[Annotation]:
    doc = read_json(path)
    if isinstance(doc, dict) and "frames" in doc:
        frames = doc["frames"]
        if not isinstance(frames, list):
            raise ValidationError("frames", "expected a list")
        return [annotation_from_dict(f, f"frames[{i}]") for i, f in enumerate(frames)]
    return [annotation_from_dict(doc)]


# -- fit results -----------------------------------------------------------------

def fit_result_to_dict(res: FitResult) -> dict:
    rep = res.report
    return {
        "theta": res.theta.tolist(),
        "beta": res.beta.tolist(),
        "joints": np.asarray(res.joints).tolist(),
        "energy": rep.terms(),
        "grad": None if rep.grad is None else rep.grad.tolist(),
        "iterations": res.iterations,
        "seed_index": res.seed_index,
        "seed_energy": res.seed_energy,
    }


def fit_result_from_dict(doc) -> FitResult:
    doc = _object(doc, "fit result")
    theta = _vector(doc, "theta", N_POSE, "fit result")
    beta = _vector(doc, "beta", N_SHAPE, "fit result")
    joints = np.asarray(doc.get("joints"), dtype=float)
    if joints.shape != (N_JOINTS, 3):
        raise ValidationError("fit result.joints", f"expected {N_JOINTS} 3D points")
    terms = _object(doc.get("energy"), "fit result.energy")
    try:
        grad = None if doc.get("grad") is None else np.asarray(doc["grad"], dtype=float)
        rep = EnergyReport(**{k: float(terms[k]) for k in
                              ("e_total", "e_dissim", "e_collision", "e_bone", "e_lim", "e_joint")},
                           grad=grad)
        return FitResult(theta, beta, rep, int(doc["iterations"]), int(doc["seed_index"]), joints,
                         float(doc.get("seed_energy", float("nan"))))
    except KeyError as e:
        raise ValidationError(f"fit result.{e.args[0]}", "missing") from None


def save_fit_result(path, res: FitResult) -> None:
    write_json(path, fit_result_to_dict(res))


def load_fit_result(path) -> FitResult:
    return fit_result_from_dict(read_json(path))


# -- run configuration -------------------------------------------------------------

@dataclass
class RunConfig:
    skeleton: Path | None = None
    camera: Path | None = None
    weights_file: Path | None = None
    weights: EnergyWeights = EnergyWeights()
    fit: FitConfig = FitConfig()
    quadtree_c: float = QUADTREE_C_MM
    crop_side: float = CROP_SIDE_MM
    image_size: int = IMAGE_SIZE
    threads: int = 1

    def __post_init__(self):
        if not self.quadtree_c > 0:
            raise ValidationError("quadtree_c", "must be positive")
        if not self.crop_side > 0:
            raise ValidationError("crop_side", "must be positive")
        if self.image_size < 1:
            raise ValidationError("image_size", "must be at least 1")
        if self.threads < 1:
            raise ValidationError("threads", "must be at least 1")


def fit_config_from_dict(doc, base: FitConfig = FitConfig()) -> FitConfig:
    doc = dict(_object(doc, "fit"))
    known = {f.name for f in fields(FitConfig)}
    for k in doc:
        if k not in known:
            raise ValidationError(f"fit.{k}", "unknown setting")
    if "stages" in doc:
        doc["stages"] = tuple(FitStage(tuple(s.get("terms", FitStage.terms)), tuple(s.get("free", FitStage.free)),
                                       s.get("max_iters"))
                              for s in doc["stages"])
    for k in ("seeds", "seed_beta"):
        if doc.get(k) is not None:
            doc[k] = tuple(map(tuple, doc[k])) if k == "seeds" else tuple(doc[k])
    return base.replace(**doc)


def load_config(path=None) -> RunConfig:
    """Run configuration from ``path``, else ``$GAUSSHAND_CONFIG``, else defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return RunConfig()
    path = Path(path)
    doc = _object(read_json(path), "config")
    known = {f.name for f in fields(RunConfig)} - {"weights_file"}
    for k in doc:
        if k not in known:
            raise ValidationError(k, "unknown config key")

    def resolve(p):
        return None if p is None else (path.parent / p)

    kw = {}
    for k in ("skeleton", "camera"):
        if k in doc:
            kw[k] = resolve(doc[k])
    if "weights" in doc:
        if isinstance(doc["weights"], str):
            kw["weights_file"] = resolve(doc["weights"])
            kw["weights"] = load_weights(kw["weights_file"])
        else:
            kw["weights"] = weights_from_dict(doc["weights"])
    if "fit" in doc:
        kw["fit"] = fit_config_from_dict(doc["fit"])
    for k, cast in (("quadtree_c", float), ("crop_side", float), ("image_size", int), ("threads", int)):
        if k in doc:
            try:
                kw[k] = cast(doc[k])
            except (TypeError, ValueError):
                raise ValidationError(k, "must be a number") from None
    return RunConfig(**kw)
