"""Evaluation metrics: joint errors, correct-frame curves, distance to the
observed point cloud and bone-length clustering."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateClusters, EmptyCloud, ValidationError
from .skeleton import N_JOINTS


def _frames(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValidationError(name, f"expected (21, 3) or (frames, 21, 3), got {a.shape}")
    return a


def joint_errors(pred, gt, subset=None) -> np.ndarray:
    """Euclidean distance per frame and joint, shape (frames, len(subset))."""
    pred, gt = _frames(pred, "pred"), _frames(gt, "gt")
    if pred.shape[1] != N_JOINTS:
        raise ValidationError("pred", f"need {N_JOINTS} predicted joints per frame")
    idx = np.arange(N_JOINTS) if subset is None else np.asarray(subset, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= N_JOINTS):
        raise ValidationError("subset", "joint index out of range")
    if gt.shape[1] == N_JOINTS:
        gt = gt[:, idx]
    elif gt.shape[1] != len(idx):
        raise ValidationError("gt", "needs 21 joints or one per subset index")
    if gt.shape[0] != pred.shape[0]:
        raise ValidationError("gt", "frame count differs from pred")
    return np.linalg.norm(pred[:, idx] - gt, axis=2)


def mean_per_joint_error(pred, gt, subset=None) -> float:
    """Mean Euclidean distance (mm) over the subset joints and all frames."""
    return float(joint_errors(pred, gt, subset).mean())


def max_joint_error(pred, gt, subset=None) -> np.ndarray:
    """Worst joint distance of each frame, the input to :func:`pcf_curve`."""
    return joint_errors(pred, gt, subset).max(axis=1)


def pcf_curve(max_errors, thresholds) -> np.ndarray:
    """Fraction of frames whose maximum joint error is at most each threshold."""
    errs = np.asarray(max_errors, dtype=float).ravel()
    thr = np.asarray(thresholds, dtype=float).ravel()
    if np.any(np.diff(thr) < 0):
        raise ValidationError("thresholds", "must be sorted ascending")
    if errs.size == 0:
        return np.zeros_like(thr)
    return np.searchsorted(np.sort(errs), thr, side="right") / errs.size


@dataclass(frozen=True, eq=False)
class MDPC:
    per_joint: np.ndarray  # (21,) mm
    median: float
    mean: float


def mdpc(joints, cloud) -> MDPC:
    """Distance from every joint to its nearest point in the observed cloud."""
    cloud = np.asarray(cloud, dtype=float).reshape(-1, 3)
    if len(cloud) == 0:
        raise EmptyCloud("point cloud has no points")
    d, _ = cKDTree(cloud).query(np.asarray(joints, dtype=float).reshape(-1, 3))
    return MDPC(d, float(np.median(d)), float(d.mean()))


def kmeans(X, k: int = 2, restarts: int = 50, max_iter: int = 100, seed: int = 0):
    """Lloyd's k-means with the lowest-inertia labeling over several restarts.

    The first restart seeds from the farthest pair of points (for k = 2),
    the rest from distinct random points of a fixed-seed generator.
    Returns ``(labels, inertia)``.
    """
    X = np.asarray(X, dtype=float)
    n = len(X)
    rng = np.random.default_rng(seed)
    d2 = ((X[:, None] - X[None]) ** 2).sum(axis=2)
    i, j = np.unravel_index(np.argmax(d2), d2.shape)
    best = None
    for r in range(restarts):
        if r == 0 and k == 2:
            idx = np.array([i, j])
        else:
            idx = rng.choice(n, size=k, replace=False)
        C = X[idx].copy()
        labels = None
        for _ in range(max_iter):
            new = np.argmin(((X[:, None] - C[None]) ** 2).sum(axis=2), axis=1)
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            for c in range(k):
                if np.any(labels == c):
                    C[c] = X[labels == c].mean(axis=0)
        inertia = float(((X - C[labels]) ** 2).sum())
        if best is None or inertia < best[1] - 1e-12 * max(1.0, best[1]):
            best = (labels, inertia)
    return best


def bone_cluster_f1(bone_lengths, subjects) -> dict:
    """F1 of each subject against its best-matching k-means (k = 2) cluster.

    Clusters are matched to subjects by the assignment with the most
    agreements. Returns ``{subject: f1}``.
    """
    X = np.asarray(bone_lengths, dtype=float)
    labels = np.asarray(subjects)
    names = list(dict.fromkeys(labels.tolist()))
    if len(names) != 2:
        raise ValidationError("subjects", "need exactly two subjects")
    if len(X) < 2 or len(X) != len(labels):
        raise ValidationError("bone_lengths", "need at least two vectors, one per label")
    if np.all(X == X[0]):
        raise DegenerateClusters("all bone-length vectors are identical")
    clusters, _ = kmeans(X, 2)
    truth = (labels == names[1]).astype(int)
    agree = int(np.sum(clusters == truth))
    if len(X) - agree > agree:
        clusters = 1 - clusters
    f1 = {}
    for s, name in enumerate(names):
        tp = int(np.sum((clusters == s) & (truth == s)))
        pred, actual = int(np.sum(clusters == s)), int(np.sum(truth == s))
        f1[name] = 0.0 if tp == 0 else 2.0 * tp / (pred + actual)
    return f1
