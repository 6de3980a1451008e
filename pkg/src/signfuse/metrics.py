"""Evaluation metrics: PA-MPVPE, jitter, RTE and per-frame deviation traces.

Temporal metrics work in whatever length unit they are given (mm in the
reports) and use frames as the time unit. Every finite-difference window is
confined to one segment; windows that would cross a boundary are dropped.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InvalidArgumentError, UndefinedMetricError
from .smooth import normalize_boundaries, segments

M_TO_MM = 1000.0


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points):
        return self.scale * np.asarray(points) @ self.rotation.T + self.translation


def procrustes_align(source, target):
    """Least-squares similarity transform mapping ``source`` onto ``target``.

    Reflections are excluded: when the optimal orthogonal factor has
    determinant -1 the smallest singular direction is flipped.

    Raises:
        DegenerateGeometryError: fewer than 3 points or a rank < 2 configuration.
    """
    X = np.asarray(source, dtype=float)
    Y = np.asarray(target, dtype=float)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise InvalidArgumentError("source and target must both be N x 3")
    if X.shape[0] < 3:
        raise DegenerateGeometryError("Procrustes alignment needs at least 3 points")
    mu_x, mu_y = X.mean(axis=0), Y.mean(axis=0)
    X0, Y0 = X - mu_x, Y - mu_y
    var_x = float(np.sum(X0 * X0))
    C = Y0.T @ X0
    U, S, Vt = np.linalg.svd(C)
    sv_x = np.linalg.svd(X0, compute_uv=False)
    if var_x <= 0.0 or sv_x[1] <= 1e-12 * max(sv_x[0], 1e-300):
        raise DegenerateGeometryError("source points are collinear or coincident")
    d = np.ones(3)
    if np.linalg.det(U @ Vt) < 0.0:
        d[2] = -1.0
    R = U @ np.diag(d) @ Vt
    scale = float(np.sum(S * d)) / var_x
    if scale <= 0.0:
        raise DegenerateGeometryError("alignment produced a non-positive scale")
    t = mu_y - scale * R @ mu_x
    return SimilarityTransform(scale, R, t)


@dataclass
class RegionMask:
    regions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.regions = {k: np.asarray(v, dtype=int) for k, v in self.regions.items()}
        seen = set()
        for name, idx in self.regions.items():
            s = set(idx.tolist())
            if len(s) != idx.size or s & seen:
                raise InvalidArgumentError(f"region {name!r} overlaps another region or repeats indices")
            seen |= s

    def check(self, n_points):
        for name, idx in self.regions.items():
            if idx.size and (idx.min() < 0 or idx.max() >= n_points):
                raise InvalidArgumentError(f"region {name!r} indexes outside {n_points} points")

    @classmethod
    def from_tree(cls, tree):
        left = [tree.landmarks["l_wrist"], *tree.hand_joints["left"]]
        right = [tree.landmarks["r_wrist"], *tree.hand_joints["right"]]
        hands = set(left) | set(right)
        body = [j for j in range(tree.num_joints) if j not in hands]
        return cls({"body": body, "left_hand": left, "right_hand": right})


def aligned_error(pred, gt):
    """Mean point distance after similarity alignment, in the input unit."""
    T = procrustes_align(pred, gt)
    return float(np.mean(np.linalg.norm(T.apply(pred) - np.asarray(gt, dtype=float), axis=1)))


def pa_mpvpe(pred, gt, mask, unit_scale=M_TO_MM):
    """Per-region Procrustes-aligned mean point error for one frame.

    Inputs are in meters by default and results in mm. Empty regions are
    left out of the result.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise InvalidArgumentError("pred and gt shapes differ")
    mask.check(pred.shape[0])
    return {
        name: unit_scale * aligned_error(pred[idx], gt[idx])
        for name, idx in mask.regions.items()
        if idx.size
    }


def _windows(positions, boundaries, order):
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 3 or positions.shape[2] != 3:
        raise InvalidArgumentError("positions must be T x J x 3")
    T = positions.shape[0]
    b = normalize_boundaries(boundaries, T)
    frames, norms = [], []
    for a, e in segments(T, b):
        if e - a <= order:
            continue
        d = np.diff(positions[a:e], n=order, axis=0)
        norms.append(np.linalg.norm(d, axis=2))
        # windows are reported at their last frame
        frames.append(np.arange(a + order, e))
    if not norms:
        return np.empty(0, int), np.empty((0, positions.shape[1]))
    return np.concatenate(frames), np.concatenate(norms, axis=0)


def jitter(positions, boundaries=()):
    """Mean Euclidean norm of the third difference over windows and joints.

    Raises:
        UndefinedMetricError: no segment has at least 4 frames.
    """
    _, norms = _windows(positions, boundaries, 3)
    if norms.size == 0:
        raise UndefinedMetricError("jitter needs a segment of at least 4 frames")
    return float(norms.mean())


def jitter_trace(positions, boundaries=()):
    """``(frames, values)``: per-window jitter averaged over joints, keyed by the window's last frame."""
    frames, norms = _windows(positions, boundaries, 3)
    return frames, norms.mean(axis=1) if norms.size else np.empty(0)


def rte(wrist_positions, boundaries=()):
    """Mean frame-to-frame displacement over both wrists.

    Raises:
        UndefinedMetricError: no segment has at least 2 frames.
    """
    wrist_positions = np.asarray(wrist_positions, dtype=float)
    if wrist_positions.ndim != 3 or wrist_positions.shape[1:] != (2, 3):
        raise InvalidArgumentError("wrist positions must be T x 2 x 3")
    _, norms = _windows(wrist_positions, boundaries, 1)
    if norms.size == 0:
        raise UndefinedMetricError("RTE needs a segment of at least 2 frames")
    return float(norms.mean())


def deviation_trace(points, boundaries=()):
    """``(frames, values)``: mean point displacement from the previous frame.

    Segment starts have no previous frame and are omitted.
    """
    frames, norms = _windows(points, boundaries, 1)
    return frames, norms.mean(axis=1) if norms.size else np.empty(0)


@dataclass
class MetricsReport:
    pa_mpvpe: dict
    jitter: dict
    rte: float
    frames: int
    timing: dict = None
    traces: dict = None

    def to_dict(self):
        return {
            "pa_mpvpe": self.pa_mpvpe,
            "jitter": self.jitter,
            "rte": self.rte,
            "frames": self.frames,
            "timing": self.timing or {},
        }


def evaluate(pred, gt, mask, boundaries=(), wrists=None, unit_scale=M_TO_MM, timing=None):
    """Full report for ``T x N x 3`` point sequences given in meters.

    PA-MPVPE is averaged over frames per region. Jitter is reported for the
    hand regions together and for the body region; RTE needs ``wrists``
    (indices of the left and right wrist points) and is ``None`` without it.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape or pred.ndim != 3:
        raise InvalidArgumentError("pred and gt must be matching T x N x 3 arrays")
    mask.check(pred.shape[1])
    per_frame = [pa_mpvpe(p, g, mask, unit_scale) for p, g in zip(pred, gt)]
    pa = {k: float(np.mean([f[k] for f in per_frame])) for k in per_frame[0]} if per_frame else {}

    mm = pred * unit_scale
    hands = np.concatenate([mask.regions[k] for k in ("left_hand", "right_hand") if k in mask.regions] or [np.empty(0, int)])
    body = mask.regions.get("body", np.empty(0, int))
    jit = {}
    for name, idx in (("hands", hands), ("body", body)):
        if idx.size:
            try:
                jit[name] = jitter(mm[:, idx], boundaries)
            except UndefinedMetricError:
                jit[name] = None
    rte_value = None
    if wrists is not None:
        try:
            rte_value = rte(mm[:, list(wrists)], boundaries)
        except UndefinedMetricError:
            rte_value = None

    jf, jv = jitter_trace(mm, boundaries)
    df, dv = deviation_trace(mm, boundaries)
    traces = {"jitter": dict(zip(jf.tolist(), jv.tolist())), "deviation": dict(zip(df.tolist(), dv.tolist()))}
    return MetricsReport(pa, jit, rte_value, int(pred.shape[0]), timing, traces)


def write_traces_csv(report, path):
    """CSV with header ``frame,jitter,deviation``; undefined cells are empty."""
    jit, dev = report.traces["jitter"], report.traces["deviation"]
    with open(path, "w") as fh:
        fh.write("frame,jitter,deviation\n")
        for t in range(report.frames):
            j = jit.get(t)
            d = dev.get(t)
            fh.write(f"{t},{'' if j is None else repr(j)},{'' if d is None else repr(d)}\n")
