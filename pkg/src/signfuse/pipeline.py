"""Stage configuration and per-sequence orchestration.

Per frame the enabled stages run in the order mirror -> convert -> elbow
solve (+ twist) -> shoulder refinement; smoothing then runs once over the
whole sequence. A frame whose hand stage fails passes through unfused and
is flagged in its ``meta``.
"""

import json
import logging
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import rotmath
from .errors import InvalidConfigError, NumericalFailureError, ParseError, SignfuseError
from .handfuse import integrate_hand, load_hand_mean, mirror_hand
from .kinematics import SIDES
from .refine import RefineConfig, optimize_shoulder
from .sequence import FrameBundle, Sequence
from .smooth import GroupWeights, SmoothConfig, Trajectory, smooth_sequence

log = logging.getLogger(__name__)

STAGES = ("mirror", "convert", "elbow_solve", "twist", "refine", "smooth")


@dataclass
class Stages:
    mirror: bool = True
    convert: bool = True
    elbow_solve: bool = True
    twist: bool = True
    refine: bool = True
    smooth: bool = True

    def __post_init__(self):
        if self.twist and not self.elbow_solve:
            raise InvalidConfigError("the twist stage requires elbow_solve")

    @property
    def hand_stage(self):
        return self.convert or self.elbow_solve


# Ablation rows, each a pure stage selection.
ABLATIONS = {
    "body_only": Stages(False, False, False, False, False, False),
    "2d_supervision": Stages(False, False, False, False, True, False),
    "coord_conv": Stages(True, True, False, False, False, False),
    "geometric_align": Stages(True, True, True, True, False, False),
    "full": Stages(True, True, True, True, True, True),
}


@dataclass
class PipelineConfig:
    stages: Stages = field(default_factory=Stages)
    refine: RefineConfig = field(default_factory=RefineConfig)
    smooth: SmoothConfig = field(default_factory=SmoothConfig)
    hand_mean_path: str = None
    tree_path: str = None

    @classmethod
    def preset(cls, name, **kw):
        if name not in ABLATIONS:
            raise InvalidConfigError(f"unknown preset {name!r}; choose from {sorted(ABLATIONS)}")
        return cls(stages=replace(ABLATIONS[name]), **kw)

    @classmethod
    def from_dict(cls, d, path=None):
        d = dict(d or {})
        try:
            if "preset" in d:
                base = replace(ABLATIONS[d.pop("preset")])
                stages = replace(base, **d.pop("stages", {}))
            else:
                stages = Stages(**d.pop("stages", {}))
            refine = RefineConfig(**d.pop("refine", {}))
            sm = d.pop("smooth", {})
            groups = {k: GroupWeights(**v) for k, v in sm.get("groups", {}).items()}
            smooth = SmoothConfig(groups) if groups else SmoothConfig()
            if "default" in sm:
                smooth.default = GroupWeights(**sm["default"])
            cfg = cls(stages, refine, smooth, d.pop("hand_mean_path", None), d.pop("tree_path", None))
        except KeyError as exc:
            raise ParseError(f"unknown preset {exc.args[0]!r}", path, "preset") from None
        except TypeError as exc:
            raise ParseError(f"bad config entry: {exc}", path) from None
        except InvalidConfigError:
            raise
        except SignfuseError as exc:
            raise ParseError(str(exc), path) from None
        if d:
            raise ParseError(f"unknown keys {sorted(d)}", path)
        return cfg

    def to_dict(self):
        return {
            "stages": {f.name: getattr(self.stages, f.name) for f in fields(Stages)},
            "refine": {f.name: getattr(self.refine, f.name) for f in fields(RefineConfig)},
            "smooth": {
                "groups": {k: vars(v) for k, v in self.smooth.groups.items()},
                "default": vars(self.smooth.default),
            },
            "hand_mean_path": self.hand_mean_path,
            "tree_path": self.tree_path,
        }


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read config: {exc}", str(path)) from None
    return PipelineConfig.from_dict(data, str(path))


def fuse_frame(tree, frame, stages, mean, refine_cfg, index=None):
    """Run the per-frame stages; returns a new body pose."""
    pose = frame.body
    if stages.hand_stage:
        for side in SIDES:
            est = frame.hands.get(side)
            if est is None:
                continue
            if est.source_mirrored:
                # without the mirror stage the estimate is consumed as if it were native
                est = mirror_hand(est) if stages.mirror else replace(est, source_mirrored=False)
            pose = integrate_hand(
                tree, pose, est, mean,
                convert=stages.convert, elbow_solve=stages.elbow_solve, twist=stages.twist,
            )
    if stages.refine and frame.keypoints:
        pose = optimize_shoulder(tree, pose, frame.keypoints, frame.camera, refine_cfg, frame=index)
    return pose


def rotation_channels(seq):
    """Trajectory of rotation vectors (branch-continuous) plus root translation.

    Channel layout per frame: ``J*3`` joint rotations, 3 global orientation,
    3 translation. Hand joints form the ``hands`` group, everything else
    ``body``.
    """
    rots, glob, transl = seq.stacked()
    T, J = rots.shape[:2]
    vecs = np.concatenate([rots, glob[:, None]], axis=1).copy()
    for t in range(1, T):
        vecs[t] = rotmath.nearest_branch(vecs[t], vecs[t - 1])
    values = np.concatenate([vecs.reshape(T, -1), transl], axis=1)
    hand_ch = np.array([3 * j + k for j in seq.tree.all_hand_joints() for k in range(3)], dtype=int)
    body_ch = np.setdiff1d(np.arange(values.shape[1]), hand_ch)
    return Trajectory(values, {"body": body_ch, "hands": hand_ch}, seq.boundaries)


def apply_channels(seq, traj):
    T, J = len(seq), seq.tree.num_joints
    vecs = traj.values[:, : 3 * (J + 1)].reshape(T, J + 1, 3)
    vecs = rotmath.canonicalize(vecs)
    frames = []
    for t, fr in enumerate(seq.frames):
        body = fr.body.copy()
        body.local_rotations = vecs[t, :J].copy()
        body.global_orient = vecs[t, J].copy()
        body.translation = traj.values[t, 3 * (J + 1):].copy()
        frames.append(replace(fr, body=body))
    return replace(seq, frames=frames)


def smooth_poses(seq, cfg=None):
    """Smooth every frame's rotations and root translation over time."""
    if len(seq) < 2:
        return seq
    return apply_channels(seq, smooth_sequence(rotation_channels(seq), cfg or SmoothConfig()))


def run_pipeline(seq, cfg=None, mean=None):
    """Apply the configured stages to a whole sequence.

    Frame-level failures do not stop the run: the frame keeps its input body
    pose, ``meta["fusion_error"]`` records the reason, and the error is
    listed in ``metadata["errors"]`` of the returned sequence.
    """
    cfg = cfg or PipelineConfig()
    if mean is None:
        mean = load_hand_mean(cfg.hand_mean_path)
    stages = cfg.stages
    out_frames, errors, times = [], [], []
    for i, fr in enumerate(seq.frames):
        t0 = time.perf_counter()
        meta = dict(fr.meta)
        try:
            body = fuse_frame(seq.tree, fr, stages, mean, cfg.refine, index=i)
        except SignfuseError as exc:
            kind = "numerical" if isinstance(exc, NumericalFailureError) else "input"
            log.warning("frame %d passed through unfused: %s", i, exc)
            errors.append({"frame": i, "kind": kind, "error": str(exc)})
            meta["fusion_error"] = str(exc)
            body = fr.body.copy()
        dt = time.perf_counter() - t0
        times.append(dt)
        log.debug("frame %d fused in %.4f s", i, dt)
        out_frames.append(FrameBundle(body, fr.hands, fr.keypoints, fr.camera, meta))

    metadata = dict(seq.metadata)
    result = Sequence(seq.tree, out_frames, seq.boundaries, metadata, seq.tree_ref)
    t0 = time.perf_counter()
    if stages.smooth:
        result = smooth_poses(result, cfg.smooth)
    smooth_time = time.perf_counter() - t0
    total = float(sum(times) + smooth_time)
    metadata["timing"] = {
        "frames": len(seq),
        "total_s": total,
        "s_per_frame": total / max(len(seq), 1),
        "smooth_s": smooth_time,
    }
    metadata["stages"] = {f.name: getattr(stages, f.name) for f in fields(Stages)}
    metadata["errors"] = errors
    result.metadata = metadata
    return result
